//! Pulse-level Monte Carlo of one clocked transmission second.
//!
//! Every clock slot carries one faint pulse: Alice draws a uniform bit and
//! a uniform basis, and the pulse's photon number is Poisson with mean μ.
//! Each photon independently survives the path and receiver with
//! probability `η_trans · η_geo · η_rec · η_fil · η_det`, and a surviving
//! photon is routed to the rectilinear analyzer with probability
//! `eta_bb84` (otherwise diagonal). A photon measured in Alice's basis
//! lands on the detector encoding her bit (flipped with probability
//! `misalignment_error`); measured in the other basis it lands on a
//! uniformly random detector of that basis. Independently, every detector
//! fires on background light and dark counts with per-slot probability
//! `4·C / clock_rate`, which reproduces an observed rate of C sifted
//! errors per detector per second. A slot where two or more distinct
//! detectors fire is a multi-detection: it is recorded but contributes no
//! key material.
//!
//! Sampling is exact but avoids walking every quiet slot: the number of
//! slots with at least one surviving photon is binomial (a thinned Poisson
//! stream hits a slot with probability `1 − exp(−μ·p_arrive)`), those
//! slots are drawn uniformly without replacement, and only they are
//! resolved photon by photon. Background firings are drawn the same way
//! per detector. Given identical parameters and seed the outcome is
//! identical, byte for byte.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::link::LinkParams;

/// Polarization measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Horizontal/vertical analyzer.
    Rect,
    /// ±45° analyzer.
    Diag,
}

/// One of Bob's four single-photon detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Horizontal: rectilinear basis, bit 0.
    H,
    /// Vertical: rectilinear basis, bit 1.
    V,
    /// +45°: diagonal basis, bit 0.
    P45,
    /// −45°: diagonal basis, bit 1.
    M45,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::H, Detector::V, Detector::P45, Detector::M45];

    pub fn basis(self) -> Basis {
        match self {
            Detector::H | Detector::V => Basis::Rect,
            Detector::P45 | Detector::M45 => Basis::Diag,
        }
    }

    /// The key bit this detector encodes.
    pub fn bit(self) -> bool {
        matches!(self, Detector::V | Detector::M45)
    }

    pub fn from_parts(basis: Basis, bit: bool) -> Self {
        match (basis, bit) {
            (Basis::Rect, false) => Detector::H,
            (Basis::Rect, true) => Detector::V,
            (Basis::Diag, false) => Detector::P45,
            (Basis::Diag, true) => Detector::M45,
        }
    }

    /// Same basis, opposite bit.
    pub fn flipped(self) -> Self {
        Detector::from_parts(self.basis(), !self.bit())
    }

    pub fn index(self) -> usize {
        match self {
            Detector::H => 0,
            Detector::V => 1,
            Detector::P45 => 2,
            Detector::M45 => 3,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Detector::ALL[i]
    }
}

/// Alice's record of what she sent: one bit and one basis per slot,
/// stored packed (basis bit 0 = rectilinear, 1 = diagonal).
#[derive(Debug, Clone)]
pub struct PulseTrain {
    bits: BitVec,
    bases: BitVec,
}

impl PulseTrain {
    /// Builds a train directly from packed bits and bases (basis bit 1 =
    /// diagonal). The simulator draws its own; this is for hand-built
    /// fixtures and replays.
    pub fn new(bits: BitVec, bases: BitVec) -> Self {
        assert_eq!(bits.len(), bases.len(), "one basis per bit");
        PulseTrain { bits, bases }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, slot: usize) -> bool {
        self.bits.get(slot)
    }

    pub fn basis(&self, slot: usize) -> Basis {
        if self.bases.get(slot) {
            Basis::Diag
        } else {
            Basis::Rect
        }
    }
}

/// One detector event. For a multi-detection (`multi == true`) the
/// `detector` field records the lowest-indexed detector that fired; the
/// event is kept for bookkeeping but never becomes key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub slot: u32,
    pub detector: Detector,
    pub multi: bool,
}

/// Everything one simulated second produced.
#[derive(Debug, Clone)]
pub struct TransmissionOutcome {
    pub params: LinkParams,
    pub seed: u64,
    pub pulses: PulseTrain,
    /// All detector events, sorted by slot.
    pub detections: Vec<DetectionRecord>,
}

impl TransmissionOutcome {
    /// Detections usable as raw key bits (multi-detections excluded).
    pub fn single_detections(&self) -> impl Iterator<Item = &DetectionRecord> {
        self.detections.iter().filter(|d| !d.multi)
    }

    pub fn raw_count(&self) -> usize {
        self.single_detections().count()
    }

    pub fn multi_count(&self) -> usize {
        self.detections.iter().filter(|d| d.multi).count()
    }
}

/// Runs one transmission second. Deterministic in `(lp, seed)`.
///
/// Randomness is consumed in a fixed, documented order: Alice's bits,
/// Alice's bases, the signal-slot count and slot choice, per-slot photon
/// resolution in slot order, then per-detector background (H, V, +45,
/// −45: count, then slot choice).
pub fn simulate_transmission(lp: &LinkParams, seed: u64) -> Result<TransmissionOutcome> {
    let slots = lp.tx.clock_rate_hz as usize;
    let p_bg = 4.0 * lp.ch.background_c / lp.tx.clock_rate_hz as f64;
    if p_bg > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "background_c {} implies a per-slot firing probability over 1",
            lp.ch.background_c
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let bits = BitVec::random(&mut rng, slots);
    let bases = BitVec::random(&mut rng, slots);
    let pulses = PulseTrain { bits, bases };

    // Per-photon survival probability up to (but not including) the basis
    // splitter, which routes rather than absorbs.
    let p_arrive =
        lp.ch.eta_trans * lp.ch.eta_geo * lp.rx.eta_rec * lp.rx.eta_fil * lp.rx.eta_det;
    let lambda = lp.tx.mu * p_arrive;
    let p_sig = -(-lambda).exp_m1();

    // (slot, fired-detector mask) pairs, built signal-first.
    let mut events: Vec<(u32, u8)> = Vec::new();

    if p_sig > 0.0 {
        let n_sig = Binomial::new(slots as u64, p_sig)
            .expect("probability already validated")
            .sample(&mut rng) as usize;
        let mut chosen = index::sample(&mut rng, slots, n_sig).into_vec();
        chosen.sort_unstable();
        for slot in chosen {
            let photons = truncated_poisson_at_least_one(lambda, &mut rng);
            let mut mask = 0u8;
            for _ in 0..photons {
                let meas = if rng.gen_bool(lp.rx.eta_bb84) { Basis::Rect } else { Basis::Diag };
                let det = if meas == pulses.basis(slot) {
                    let mut d = Detector::from_parts(meas, pulses.bit(slot));
                    if rng.gen_bool(lp.tx.misalignment_error) {
                        d = d.flipped();
                    }
                    d
                } else {
                    Detector::from_parts(meas, rng.gen_bool(0.5))
                };
                mask |= 1 << det.index();
            }
            events.push((slot as u32, mask));
        }
    }

    if p_bg > 0.0 {
        let dist = Binomial::new(slots as u64, p_bg).expect("probability already validated");
        for det in Detector::ALL {
            let n_bg = dist.sample(&mut rng) as usize;
            let chosen = index::sample(&mut rng, slots, n_bg);
            for slot in chosen {
                events.push((slot as u32, 1 << det.index()));
            }
        }
    }

    events.sort_unstable_by_key(|&(slot, _)| slot);

    let mut detections = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        let slot = events[i].0;
        let mut mask = 0u8;
        while i < events.len() && events[i].0 == slot {
            mask |= events[i].1;
            i += 1;
        }
        let first = Detector::from_index(mask.trailing_zeros() as usize);
        detections.push(DetectionRecord { slot, detector: first, multi: mask.count_ones() >= 2 });
    }

    Ok(TransmissionOutcome { params: *lp, seed, pulses, detections })
}

/// Inverse-CDF sample of a Poisson(λ) variable conditioned on being ≥ 1.
fn truncated_poisson_at_least_one(lambda: f64, rng: &mut impl RngCore) -> u32 {
    let total = -(-lambda).exp_m1(); // P(X >= 1)
    let target = rng.gen::<f64>() * total;
    let mut k = 1u32;
    let mut term = lambda * (-lambda).exp(); // P(X = 1)
    let mut cum = term;
    while cum < target && k < 64 {
        k += 1;
        term *= lambda / f64::from(k);
        cum += term;
    }
    k
}

/// Estimates the background rate C from a blocked-source run: the number
/// of sifted-key errors, averaged over the four detectors.
///
/// With μ = 0 every detection is background. Half of them land in Alice's
/// basis and survive sifting; half of those disagree with her bit. Each
/// detector therefore contributes ≈ C sifted errors per second, and the
/// four-way average recovers C.
pub fn empirical_background_c(outcome: &TransmissionOutcome) -> Result<f64> {
    if outcome.params.tx.mu != 0.0 {
        return Err(Error::Domain(
            "background calibration requires a blocked source (mu = 0)".into(),
        ));
    }
    let mut errors = 0u64;
    for det in outcome.single_detections() {
        let slot = det.slot as usize;
        let matched = det.detector.basis() == outcome.pulses.basis(slot);
        if matched && det.detector.bit() != outcome.pulses.bit(slot) {
            errors += 1;
        }
    }
    Ok(errors as f64 / 4.0)
}

// ===== Outcome dump format =====
//
// A text header (key = value, one per line, blank-line terminated)
// carrying the parameters and seed for replay, followed by one 5-byte
// record per detection: slot as big-endian u32, then a flags byte with
// the detector index in bits 0-1 and the multi flag in bit 2.

const DUMP_MAGIC: &str = "fsqkd outcome v1";

/// Writes the replayable dump of an outcome.
pub fn write_outcome_dump(out: &mut impl std::io::Write, o: &TransmissionOutcome) -> Result<()> {
    writeln!(out, "{DUMP_MAGIC}")?;
    writeln!(out, "seed = {}", o.seed)?;
    writeln!(out, "mu = {}", o.params.tx.mu)?;
    writeln!(out, "clock_rate_hz = {}", o.params.tx.clock_rate_hz)?;
    writeln!(out, "misalignment_error = {}", o.params.tx.misalignment_error)?;
    writeln!(out, "eta_trans = {}", o.params.ch.eta_trans)?;
    writeln!(out, "eta_geo = {}", o.params.ch.eta_geo)?;
    writeln!(out, "background_c = {}", o.params.ch.background_c)?;
    writeln!(out, "eta_rec = {}", o.params.rx.eta_rec)?;
    writeln!(out, "eta_fil = {}", o.params.rx.eta_fil)?;
    writeln!(out, "eta_bb84 = {}", o.params.rx.eta_bb84)?;
    writeln!(out, "eta_det = {}", o.params.rx.eta_det)?;
    writeln!(out, "detections = {}", o.detections.len())?;
    writeln!(out)?;
    for d in &o.detections {
        out.write_all(&d.slot.to_be_bytes())?;
        let flags = d.detector.index() as u8 | if d.multi { 0b100 } else { 0 };
        out.write_all(&[flags])?;
    }
    Ok(())
}

/// Parses a dump back into `(params, seed, detections)`. Replaying
/// `simulate_transmission(params, seed)` must reproduce the records.
pub fn read_outcome_dump(
    input: &mut impl std::io::Read,
) -> Result<(LinkParams, u64, Vec<DetectionRecord>)> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    let header_end = raw
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Wire("outcome dump has no header terminator".into()))?;
    let header = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| Error::Wire("outcome dump header is not UTF-8".into()))?;
    let body = &raw[header_end + 2..];

    let mut fields = std::collections::BTreeMap::new();
    let mut lines = header.lines();
    if lines.next() != Some(DUMP_MAGIC) {
        return Err(Error::Wire("outcome dump magic mismatch".into()));
    }
    for line in lines {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Wire(format!("malformed dump header line: {line}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<&String> {
        fields.get(k).ok_or_else(|| Error::Wire(format!("dump header missing {k}")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::Wire(format!("dump header field {k} is not a number")))
    };

    let lp = LinkParams::new(
        crate::link::TransmitterParams::new(
            parse_f("mu")?,
            get("clock_rate_hz")?
                .parse()
                .map_err(|_| Error::Wire("bad clock_rate_hz".into()))?,
            parse_f("misalignment_error")?,
        )?,
        crate::link::ReceiverParams::new(
            parse_f("eta_rec")?,
            parse_f("eta_fil")?,
            parse_f("eta_bb84")?,
            parse_f("eta_det")?,
        )?,
        crate::link::ChannelParams::new(
            parse_f("eta_trans")?,
            parse_f("eta_geo")?,
            parse_f("background_c")?,
        )?,
    )?;
    let seed: u64 = get("seed")?.parse().map_err(|_| Error::Wire("bad seed".into()))?;
    let count: usize =
        get("detections")?.parse().map_err(|_| Error::Wire("bad detection count".into()))?;

    if body.len() != count * 5 {
        return Err(Error::Wire(format!(
            "dump body is {} bytes, expected {} records of 5",
            body.len(),
            count
        )));
    }
    let mut detections = Vec::with_capacity(count);
    for rec in body.chunks_exact(5) {
        let slot = u32::from_be_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let flags = rec[4];
        if flags & !0b111 != 0 {
            return Err(Error::Wire(format!("dump record has unknown flags {flags:#x}")));
        }
        detections.push(DetectionRecord {
            slot,
            detector: Detector::from_index((flags & 0b11) as usize),
            multi: flags & 0b100 != 0,
        });
    }
    Ok((lp, seed, detections))
}
