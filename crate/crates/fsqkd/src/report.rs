//! Per-session figures of merit, their canonical text form, and
//! multi-run aggregation.
//!
//! Both endpoints build a [`SessionReport`] from the same protocol
//! conversation, and every field is derived from integers the two sides
//! provably share — so the two reports (and their serialized text) are
//! identical, whatever transport carried the session. The text form is
//! deliberately line-oriented `key = value` so reports diff cleanly and
//! round-trip exactly: floats print in Rust's shortest-roundtrip form.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Everything worth keeping from one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    /// Session identifier (shared by both endpoints).
    pub session: u64,
    /// Clock slots in the transmission (pulses fired).
    pub slots: u64,
    /// Mean photon number the source ran at.
    pub mu: f64,
    /// Optical channel efficiency η_trans·η_geo.
    pub eta_opt: f64,
    /// Channel quality x = η_opt/C (infinite for a noiseless channel).
    pub channel_parameter: f64,
    /// Single-detection raw key length.
    pub n_raw: usize,
    /// Multi-detection slots discarded before sifting.
    pub n_multi: usize,
    /// Sifted key length after basis reconciliation.
    pub n_sifted: usize,
    /// Measured bit error rate: corrected errors / n_sifted.
    pub epsilon: f64,
    /// Parity bits disclosed during error correction.
    pub leak_bits: usize,
    /// Secret key length the entropy budget certified.
    pub f_secret: usize,
    /// Bits actually kept after the key-check sacrifice (0 when the key
    /// was destroyed or the yield was zero).
    pub final_len: usize,
    /// Sifted bits per pulse.
    pub p_sif: f64,
    /// Secret bits per sifted bit.
    pub p_sif_to_secret: f64,
    /// Secret bits per pulse; exactly p_sif × p_sif_to_secret when the
    /// budget was positive, else 0.
    pub p_secret: f64,
    /// The budget certified no usable key (f_secret too small to survive
    /// the key-check sacrifice).
    pub zero_yield: bool,
    /// Unambiguous-state-discrimination attack infeasible at this
    /// operating point.
    pub usd_safe: bool,
    /// Photon-number-splitting attack infeasible at this operating point.
    pub pns_safe: bool,
    /// The disclosed check windows disagreed and the keys were destroyed.
    pub keycheck_failed: bool,
}

/// Field order of the text form — also the authoritative field list for
/// the parser.
const FIELD_ORDER: [&str; 19] = [
    "session",
    "slots",
    "mu",
    "eta_opt",
    "channel_parameter",
    "n_raw",
    "n_multi",
    "n_sifted",
    "epsilon",
    "leak_bits",
    "f_secret",
    "final_len",
    "p_sif",
    "p_sif_to_secret",
    "p_secret",
    "zero_yield",
    "usd_safe",
    "pns_safe",
    "keycheck_failed",
];

impl SessionReport {
    /// Serializes to the canonical `key = value` record, one field per
    /// line in [`FIELD_ORDER`], with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in FIELD_ORDER {
            let value = match key {
                "session" => self.session.to_string(),
                "slots" => self.slots.to_string(),
                "mu" => self.mu.to_string(),
                "eta_opt" => self.eta_opt.to_string(),
                "channel_parameter" => self.channel_parameter.to_string(),
                "n_raw" => self.n_raw.to_string(),
                "n_multi" => self.n_multi.to_string(),
                "n_sifted" => self.n_sifted.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "leak_bits" => self.leak_bits.to_string(),
                "f_secret" => self.f_secret.to_string(),
                "final_len" => self.final_len.to_string(),
                "p_sif" => self.p_sif.to_string(),
                "p_sif_to_secret" => self.p_sif_to_secret.to_string(),
                "p_secret" => self.p_secret.to_string(),
                "zero_yield" => self.zero_yield.to_string(),
                "usd_safe" => self.usd_safe.to_string(),
                "pns_safe" => self.pns_safe.to_string(),
                "keycheck_failed" => self.keycheck_failed.to_string(),
                _ => unreachable!(),
            };
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// Parses one record produced by [`Self::to_text`]. Unknown keys are
    /// rejected; missing keys are reported by name.
    pub fn from_text(text: &str) -> Result<SessionReport> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line '{line}' is not 'key = value'")))?;
            let k = k.trim();
            if !FIELD_ORDER.contains(&k) {
                return Err(bad(format!("unknown report field '{k}'")));
            }
            if map.insert(k, v.trim()).is_some() {
                return Err(bad(format!("duplicate report field '{k}'")));
            }
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(format!("missing field '{k}'")));
        Ok(SessionReport {
            session: parse(get("session")?, "session")?,
            slots: parse(get("slots")?, "slots")?,
            mu: parse(get("mu")?, "mu")?,
            eta_opt: parse(get("eta_opt")?, "eta_opt")?,
            channel_parameter: parse(get("channel_parameter")?, "channel_parameter")?,
            n_raw: parse(get("n_raw")?, "n_raw")?,
            n_multi: parse(get("n_multi")?, "n_multi")?,
            n_sifted: parse(get("n_sifted")?, "n_sifted")?,
            epsilon: parse(get("epsilon")?, "epsilon")?,
            leak_bits: parse(get("leak_bits")?, "leak_bits")?,
            f_secret: parse(get("f_secret")?, "f_secret")?,
            final_len: parse(get("final_len")?, "final_len")?,
            p_sif: parse(get("p_sif")?, "p_sif")?,
            p_sif_to_secret: parse(get("p_sif_to_secret")?, "p_sif_to_secret")?,
            p_secret: parse(get("p_secret")?, "p_secret")?,
            zero_yield: parse(get("zero_yield")?, "zero_yield")?,
            usd_safe: parse(get("usd_safe")?, "usd_safe")?,
            pns_safe: parse(get("pns_safe")?, "pns_safe")?,
            keycheck_failed: parse(get("keycheck_failed")?, "keycheck_failed")?,
        })
    }

    /// Splits a concatenation of records (blank-line separated) back
    /// into reports.
    pub fn parse_stream(text: &str) -> Result<Vec<SessionReport>> {
        text.split("\n\n")
            .map(str::trim)
            .filter(|chunk| !chunk.is_empty())
            .map(SessionReport::from_text)
            .collect()
    }
}

fn bad(msg: String) -> Error {
    Error::InvalidParameter(format!("session report: {msg}"))
}

fn parse<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse().map_err(|_| bad(format!("field '{key}' has unparseable value '{v}'")))
}

/// Sample mean and standard deviation of one aggregated quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSigma {
    pub mean: f64,
    pub sigma: f64,
}

/// Computes mean and sample standard deviation (σ = 0 for fewer than
/// two values; NaN mean for none).
pub fn mean_sigma(values: &[f64]) -> MeanSigma {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanSigma { mean, sigma: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanSigma { mean, sigma: var.sqrt() }
}

/// Campaign-level summary over many session reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    /// Sessions that produced a verified key (final_len > 0).
    pub verified_runs: usize,
    pub zero_yield_runs: usize,
    pub keycheck_failures: usize,
    /// Sum of final_len over all runs.
    pub total_secret_bits: u64,
    pub mu: MeanSigma,
    pub eta_opt: MeanSigma,
    pub channel_parameter: MeanSigma,
    pub p_sif: MeanSigma,
    pub epsilon: MeanSigma,
    pub p_secret: MeanSigma,
}

/// Summarizes a campaign. Panics on an empty slice — an aggregate of
/// nothing has no meaningful fields.
pub fn aggregate(reports: &[SessionReport]) -> Aggregate {
    assert!(!reports.is_empty(), "cannot aggregate zero reports");
    let pull = |f: fn(&SessionReport) -> f64| -> MeanSigma {
        let values: Vec<f64> = reports.iter().map(f).collect();
        mean_sigma(&values)
    };
    Aggregate {
        runs: reports.len(),
        verified_runs: reports.iter().filter(|r| r.final_len > 0).count(),
        zero_yield_runs: reports.iter().filter(|r| r.zero_yield).count(),
        keycheck_failures: reports.iter().filter(|r| r.keycheck_failed).count(),
        total_secret_bits: reports.iter().map(|r| r.final_len as u64).sum(),
        mu: pull(|r| r.mu),
        eta_opt: pull(|r| r.eta_opt),
        channel_parameter: pull(|r| r.channel_parameter),
        p_sif: pull(|r| r.p_sif),
        epsilon: pull(|r| r.epsilon),
        p_secret: pull(|r| r.p_secret),
    }
}

impl Aggregate {
    /// Human- and diff-friendly text summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("runs = {}\n", self.runs));
        out.push_str(&format!("verified_runs = {}\n", self.verified_runs));
        out.push_str(&format!("zero_yield_runs = {}\n", self.zero_yield_runs));
        out.push_str(&format!("keycheck_failures = {}\n", self.keycheck_failures));
        out.push_str(&format!("total_secret_bits = {}\n", self.total_secret_bits));
        for (name, ms) in [
            ("mu", self.mu),
            ("eta_opt", self.eta_opt),
            ("channel_parameter", self.channel_parameter),
            ("p_sif", self.p_sif),
            ("epsilon", self.epsilon),
            ("p_secret", self.p_secret),
        ] {
            out.push_str(&format!("mean_{name} = {}\n", ms.mean));
            out.push_str(&format!("sigma_{name} = {}\n", ms.sigma));
        }
        out
    }
}
