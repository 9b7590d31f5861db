//! Link-budget arithmetic for a clocked faint-laser polarization link.
//!
//! The transmitter fires one attenuated pulse per clock cycle with mean
//! photon number μ. Between source and detection the light sees, in order:
//! atmospheric transmittance `eta_trans`, geometric capture `eta_geo`,
//! receiver optics `eta_rec`, spectral/spatial filtering `eta_fil`, the
//! 50/50 basis-splitting element `eta_bb84`, and detector quantum
//! efficiency `eta_det`. Background light and detector dark counts are
//! folded into a single observable `background_c`: the sifted-key error
//! rate per detector per second they would produce on their own.
//!
//! Everything here is closed-form; the Monte Carlo in [`crate::sim`]
//! reproduces these numbers event by event, and the tests hold the two
//! views together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source-side parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitterParams {
    /// Mean photon number per pulse, in [0, 1). Zero means the source is
    /// blocked, which is how background calibration runs are taken.
    pub mu: f64,
    /// Pulse slots per second.
    pub clock_rate_hz: u64,
    /// Probability that a matched-basis photon still lands on the wrong
    /// detector (polarization alignment imperfection), in [0, 0.005].
    pub misalignment_error: f64,
}

impl TransmitterParams {
    pub fn new(mu: f64, clock_rate_hz: u64, misalignment_error: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::InvalidParameter(format!("mu must be in [0, 1), got {mu}")));
        }
        if !(1_000..=100_000_000).contains(&clock_rate_hz) {
            return Err(Error::InvalidParameter(format!(
                "clock_rate_hz must be in [1e3, 1e8], got {clock_rate_hz}"
            )));
        }
        if !(0.0..=0.005).contains(&misalignment_error) {
            return Err(Error::InvalidParameter(format!(
                "misalignment_error must be in [0, 0.005], got {misalignment_error}"
            )));
        }
        Ok(Self { mu, clock_rate_hz, misalignment_error })
    }
}

impl Default for TransmitterParams {
    fn default() -> Self {
        Self { mu: 0.5, clock_rate_hz: 1_000_000, misalignment_error: 0.0 }
    }
}

/// Receiver-side efficiencies, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    /// Receiver optics throughput.
    pub eta_rec: f64,
    /// Spectral and spatial filter transmission.
    pub eta_fil: f64,
    /// Probability the basis-splitting element routes a photon to the
    /// rectilinear analyzer (the complement goes to the diagonal one).
    pub eta_bb84: f64,
    /// Detector quantum efficiency.
    pub eta_det: f64,
}

impl ReceiverParams {
    pub fn new(eta_rec: f64, eta_fil: f64, eta_bb84: f64, eta_det: f64) -> Result<Self> {
        for (name, v) in [
            ("eta_rec", eta_rec),
            ("eta_fil", eta_fil),
            ("eta_bb84", eta_bb84),
            ("eta_det", eta_det),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(Self { eta_rec, eta_fil, eta_bb84, eta_det })
    }
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self { eta_rec: 0.47, eta_fil: 0.6, eta_bb84: 0.5, eta_det: 0.61 }
    }
}

/// Path parameters: what the atmosphere and pointing do to the beam, and
/// how noisy the receiver environment is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Atmospheric transmittance over the path, in (0, 1].
    pub eta_trans: f64,
    /// Fraction of the transmitted beam captured by the receiver aperture,
    /// in (0, 1].
    pub eta_geo: f64,
    /// Background-induced sifted-key errors per detector per second
    /// (daylight ≈ 50, shaded daylight ≈ 5, clear night ≈ 1.5). Must be
    /// non-negative.
    pub background_c: f64,
}

impl ChannelParams {
    pub fn new(eta_trans: f64, eta_geo: f64, background_c: f64) -> Result<Self> {
        for (name, v) in [("eta_trans", eta_trans), ("eta_geo", eta_geo)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(background_c >= 0.0 && background_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "background_c must be finite and >= 0, got {background_c}"
            )));
        }
        Ok(Self { eta_trans, eta_geo, background_c })
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { eta_trans: 0.81, eta_geo: 0.05, background_c: 1.5 }
    }
}

/// One complete link description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub tx: TransmitterParams,
    pub rx: ReceiverParams,
    pub ch: ChannelParams,
}

impl LinkParams {
    pub fn new(tx: TransmitterParams, rx: ReceiverParams, ch: ChannelParams) -> Result<Self> {
        // Field structs validate themselves; re-validate here so a
        // hand-assembled struct literal cannot sneak bad values through.
        TransmitterParams::new(tx.mu, tx.clock_rate_hz, tx.misalignment_error)?;
        ReceiverParams::new(rx.eta_rec, rx.eta_fil, rx.eta_bb84, rx.eta_det)?;
        ChannelParams::new(ch.eta_trans, ch.eta_geo, ch.background_c)?;
        Ok(Self { tx, rx, ch })
    }
}

/// Optical channel efficiency: `eta_trans * eta_geo`.
///
/// ```
/// use fsqkd::link::{eta_opt, ChannelParams};
/// let ch = ChannelParams::new(0.81, 0.12, 0.0).unwrap();
/// assert!((eta_opt(&ch) - 0.0972).abs() < 1e-12);
/// ```
pub fn eta_opt(ch: &ChannelParams) -> f64 {
    ch.eta_trans * ch.eta_geo
}

/// Receiver noise factor `D = 4e-6 / (eta_rec * eta_fil * eta_bb84 * eta_det)`.
///
/// `D` collects everything about the receiver that scales the
/// background-to-signal ratio; with default efficiencies it is
/// ≈ 4.65 × 10⁻⁵.
pub fn receiver_factor_d(rx: &ReceiverParams) -> f64 {
    4e-6 / (rx.eta_rec * rx.eta_fil * rx.eta_bb84 * rx.eta_det)
}

/// Probability that a given clock slot yields a sifted-key bit.
///
/// This is the compound survival probability of at least one photon,
/// including the basis-match factor `eta_bb84`:
/// `1 − exp(−μ · η_trans · η_geo · η_rec · η_fil · η_BB84 · η_det)`.
pub fn sift_probability(lp: &LinkParams) -> f64 {
    let exponent = lp.tx.mu
        * lp.ch.eta_trans
        * lp.ch.eta_geo
        * lp.rx.eta_rec
        * lp.rx.eta_fil
        * lp.rx.eta_bb84
        * lp.rx.eta_det;
    -(-exponent).exp_m1()
}

/// An expected bit error rate, with a flag recording whether the raw
/// formula value had to be clamped into [0, 0.5].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerEstimate {
    pub value: f64,
    pub clamped: bool,
}

/// Expected sifted-key bit error rate from background alone:
/// `ε ≈ C · D / (μ · η_opt)`, clamped to [0, 0.5].
///
/// Misalignment (if any) adds directly on top of the background term.
/// Requires `μ > 0`; a blocked source has no sifted signal to compare
/// against.
pub fn expected_ber(lp: &LinkParams) -> Result<BerEstimate> {
    if lp.tx.mu <= 0.0 {
        return Err(Error::Domain("expected_ber requires mu > 0".into()));
    }
    let raw = lp.ch.background_c * receiver_factor_d(&lp.rx) / (lp.tx.mu * eta_opt(&lp.ch))
        + lp.tx.misalignment_error;
    if raw > 0.5 {
        Ok(BerEstimate { value: 0.5, clamped: true })
    } else {
        Ok(BerEstimate { value: raw, clamped: false })
    }
}

/// The channel quality parameter `x = η_opt / C`.
///
/// A noiseless channel (`C = 0`) has unbounded quality; this returns
/// `f64::INFINITY` in that case, which compares above any finite
/// threshold, so callers need no special case.
pub fn channel_parameter(ch: &ChannelParams) -> f64 {
    if ch.background_c == 0.0 {
        f64::INFINITY
    } else {
        eta_opt(ch) / ch.background_c
    }
}

/// Binary entropy `f(ε) = −ε·log₂ ε − (1−ε)·log₂(1−ε)`, with the
/// continuous extension `f(0) = f(1) = 0`.
///
/// ```
/// use fsqkd::link::binary_entropy;
/// assert_eq!(binary_entropy(0.0), 0.0);
/// assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
/// assert!((binary_entropy(0.032) - 0.2043).abs() < 1e-4);
/// ```
pub fn binary_entropy(e: f64) -> f64 {
    assert!((0.0..=1.0).contains(&e), "binary_entropy domain is [0, 1], got {e}");
    if e == 0.0 || e == 1.0 {
        return 0.0;
    }
    -e * e.log2() - (1.0 - e) * (1.0 - e).log2()
}

// ===== Channel presets =====

/// One named operating regime in a preset file.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PresetEntry {
    pub mu: f64,
    pub eta_trans: f64,
    pub eta_geo: f64,
    pub background_c: f64,
    #[serde(default)]
    pub note: String,
}

/// The preset table shipped with the crate (`presets.toml`): three regimes
/// spanning full daylight, shaded daylight, and clear night.
pub fn builtin_presets() -> std::collections::BTreeMap<String, PresetEntry> {
    parse_presets(include_str!("../presets.toml")).expect("built-in preset table is valid")
}

/// Parses a preset file: TOML with one `[name]` table per regime.
pub fn parse_presets(text: &str) -> Result<std::collections::BTreeMap<String, PresetEntry>> {
    toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("preset file: {e}")))
}

/// Looks up `name` among the built-in presets and builds link parameters
/// from it (receiver defaults, default clock, no misalignment).
pub fn preset_link(name: &str) -> Result<LinkParams> {
    let table = builtin_presets();
    let entry = table.get(name).ok_or_else(|| {
        let known: Vec<&str> = table.keys().map(String::as_str).collect();
        Error::InvalidParameter(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })?;
    link_from_entry(entry)
}

/// Builds link parameters from a preset entry.
pub fn link_from_entry(entry: &PresetEntry) -> Result<LinkParams> {
    LinkParams::new(
        TransmitterParams::new(entry.mu, 1_000_000, 0.0)?,
        ReceiverParams::default(),
        ChannelParams::new(entry.eta_trans, entry.eta_geo, entry.background_c)?,
    )
}
