//! Statistical acceptance tests for distilled key material.
//!
//! Two batteries are provided. The first is the four single-sample tests
//! from FIPS 140-2 (2001 edition) — monobit, poker, runs, and long-run —
//! applied to exactly [`FIPS_SAMPLE_BITS`] bits. The edition is long
//! superseded, but its fixed pass bands remain the standard quick screen
//! for hardware key material. The second is Maurer's universal statistical
//! test in its 5-bit variant, which estimates per-bit entropy from the
//! log-distances between repeated blocks and therefore catches periodicity
//! and long-range structure the FIPS battery cannot see.
//!
//! All bounds and reference constants live in one place
//! ([`FIPS_BOUNDS`], [`MAURER_EXPECTED`], [`MAURER_VARIANCE`]) and are
//! pinned by a fingerprint test, so an accidental edit of a single digit
//! fails the suite rather than silently shifting every verdict.

use std::fmt::Write as _;

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// Sample size the FIPS 140-2 battery is defined over.
pub const FIPS_SAMPLE_BITS: usize = 20_000;

/// Acceptance bounds for the four FIPS 140-2 (2001 edition) tests.
///
/// Monobit and poker bands are exclusive; the per-length runs bands are
/// inclusive; any run of `long_run` or more bits fails outright.
#[derive(Debug, Clone, Copy)]
pub struct FipsBounds {
    /// Exclusive band for the number of ones.
    pub monobit: (usize, usize),
    /// Exclusive band for the poker statistic.
    pub poker: (f64, f64),
    /// Inclusive bands for run counts of length 1..=5 and 6-or-more,
    /// applied separately to runs of zeros and runs of ones.
    pub runs: [(usize, usize); 6],
    /// Any run of this many identical bits (or more) fails the sample.
    pub long_run: usize,
}

/// The single authoritative copy of the FIPS 140-2 bounds.
pub const FIPS_BOUNDS: FipsBounds = FipsBounds {
    monobit: (9_725, 10_275),
    poker: (2.16, 46.17),
    runs: [
        (2_315, 2_685),
        (1_114, 1_386),
        (527, 723),
        (240, 384),
        (103, 209),
        (103, 209),
    ],
    long_run: 26,
};

/// Canonical text rendering of [`FIPS_BOUNDS`], used for fingerprinting.
pub fn bounds_table_text() -> String {
    let b = &FIPS_BOUNDS;
    let mut s = String::new();
    writeln!(
        s,
        "monobit ({}, {}) exclusive",
        b.monobit.0, b.monobit.1
    )
    .unwrap();
    writeln!(s, "poker ({}, {}) exclusive", b.poker.0, b.poker.1).unwrap();
    for (i, (lo, hi)) in b.runs.iter().enumerate() {
        let label = if i == 5 {
            "6+".to_string()
        } else {
            (i + 1).to_string()
        };
        writeln!(s, "runs{label} [{lo}, {hi}]").unwrap();
    }
    writeln!(s, "long_run >= {} fails", b.long_run).unwrap();
    s
}

/// 64-bit FNV-1a over the canonical bounds text.
///
/// A test pins this value; it exists so that a typo in the constants table
/// is caught as a checksum mismatch instead of a mysteriously shifted
/// verdict in some downstream statistical test.
pub fn bounds_fingerprint() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in bounds_table_text().as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Monobit test outcome: total count of ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonobitResult {
    pub ones: usize,
    pub pass: bool,
}

/// Poker test outcome over 5 000 consecutive 4-bit groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PokerResult {
    pub statistic: f64,
    pub pass: bool,
}

/// Runs test outcome: counts of maximal runs bucketed by length
/// (1, 2, 3, 4, 5, 6-or-more), separately for zeros and ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunsResult {
    pub zero_runs: [usize; 6],
    pub one_runs: [usize; 6],
    pub zero_pass: [bool; 6],
    pub one_pass: [bool; 6],
    pub pass: bool,
}

/// Long-run test outcome: length of the longest run of identical bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongRunResult {
    pub max_run: usize,
    pub pass: bool,
}

/// Combined outcome of the FIPS 140-2 battery on one 20 000-bit sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FipsResult {
    pub monobit: MonobitResult,
    pub poker: PokerResult,
    pub runs: RunsResult,
    pub long_run: LongRunResult,
}

impl FipsResult {
    /// True only when every sub-test passed.
    pub fn overall(&self) -> bool {
        self.monobit.pass && self.poker.pass && self.runs.pass && self.long_run.pass
    }

    /// Structured text report, one line per sub-test plus a verdict line.
    pub fn to_text(&self) -> String {
        let b = &FIPS_BOUNDS;
        let v = |p: bool| if p { "pass" } else { "FAIL" };
        let mut s = String::new();
        writeln!(
            s,
            "monobit   ones = {}  in ({}, {})  {}",
            self.monobit.ones,
            b.monobit.0,
            b.monobit.1,
            v(self.monobit.pass)
        )
        .unwrap();
        writeln!(
            s,
            "poker     statistic = {:.4}  in ({}, {})  {}",
            self.poker.statistic,
            b.poker.0,
            b.poker.1,
            v(self.poker.pass)
        )
        .unwrap();
        for i in 0..6 {
            let label = if i == 5 {
                "6+".to_string()
            } else {
                format!("{} ", i + 1)
            };
            writeln!(
                s,
                "runs      0-runs of {} = {}  in [{}, {}]  {}",
                label, self.runs.zero_runs[i], b.runs[i].0, b.runs[i].1, v(self.runs.zero_pass[i])
            )
            .unwrap();
        }
        for i in 0..6 {
            let label = if i == 5 {
                "6+".to_string()
            } else {
                format!("{} ", i + 1)
            };
            writeln!(
                s,
                "runs      1-runs of {} = {}  in [{}, {}]  {}",
                label, self.runs.one_runs[i], b.runs[i].0, b.runs[i].1, v(self.runs.one_pass[i])
            )
            .unwrap();
        }
        writeln!(
            s,
            "long-run  max = {}  must stay under {}  {}",
            self.long_run.max_run,
            b.long_run,
            v(self.long_run.pass)
        )
        .unwrap();
        writeln!(s, "fips-140-2 overall: {}", v(self.overall())).unwrap();
        s
    }
}

/// Runs the FIPS 140-2 battery on exactly 20 000 bits.
///
/// Any other sample length is a domain error: every bound in
/// [`FIPS_BOUNDS`] is calibrated to that sample size and means nothing at
/// another one.
pub fn fips_140_2(bits: &BitVec) -> Result<FipsResult> {
    if bits.len() != FIPS_SAMPLE_BITS {
        return Err(Error::Domain(format!(
            "FIPS 140-2 battery is defined over exactly {FIPS_SAMPLE_BITS} bits, got {}",
            bits.len()
        )));
    }
    let b = &FIPS_BOUNDS;

    let ones = bits.count_ones();
    let monobit = MonobitResult {
        ones,
        pass: ones > b.monobit.0 && ones < b.monobit.1,
    };

    // Poker: frequency chi-square over 5 000 consecutive 4-bit groups,
    // most significant bit first within each group.
    let groups = FIPS_SAMPLE_BITS / 4;
    let mut freq = [0u32; 16];
    for g in 0..groups {
        let mut v = 0usize;
        for k in 0..4 {
            v = (v << 1) | usize::from(bits.get(g * 4 + k));
        }
        freq[v] += 1;
    }
    let sum_sq: f64 = freq.iter().map(|&f| f64::from(f) * f64::from(f)).sum();
    let statistic = (16.0 / groups as f64) * sum_sq - groups as f64;
    let poker = PokerResult {
        statistic,
        pass: statistic > b.poker.0 && statistic < b.poker.1,
    };

    // One pass over the sample collects both the bucketed run counts and
    // the longest run.
    let mut zero_runs = [0usize; 6];
    let mut one_runs = [0usize; 6];
    let mut max_run = 0usize;
    let mut current = bits.get(0);
    let mut len = 0usize;
    let mut record = |value: bool, len: usize, max_run: &mut usize| {
        let bucket = len.min(6) - 1;
        if value {
            one_runs[bucket] += 1;
        } else {
            zero_runs[bucket] += 1;
        }
        *max_run = (*max_run).max(len);
    };
    for i in 0..bits.len() {
        let bit = bits.get(i);
        if bit == current {
            len += 1;
        } else {
            record(current, len, &mut max_run);
            current = bit;
            len = 1;
        }
    }
    record(current, len, &mut max_run);

    let in_band = |count: usize, band: (usize, usize)| count >= band.0 && count <= band.1;
    let mut zero_pass = [false; 6];
    let mut one_pass = [false; 6];
    for i in 0..6 {
        zero_pass[i] = in_band(zero_runs[i], b.runs[i]);
        one_pass[i] = in_band(one_runs[i], b.runs[i]);
    }
    let runs = RunsResult {
        zero_runs,
        one_runs,
        zero_pass,
        one_pass,
        pass: zero_pass.iter().all(|&p| p) && one_pass.iter().all(|&p| p),
    };

    let long_run = LongRunResult {
        max_run,
        pass: max_run < b.long_run,
    };

    Ok(FipsResult {
        monobit,
        poker,
        runs,
        long_run,
    })
}

/// Block width of the supported universal-test variant.
pub const MAURER_BLOCK_BITS: usize = 5;

/// Default initialisation length: the canonical 10·2^L blocks for L = 5.
pub const MAURER_DEFAULT_Q: usize = 320;

/// Reference mean of the per-block statistic for a uniform source at
/// L = 5, from the test's defining publication. Equal to
/// Σ_{i≥1} 2^-L (1 − 2^-L)^(i-1) · log2(i); a test re-derives it from that
/// series.
pub const MAURER_EXPECTED: f64 = 4.253_426_596_472_781_5;

/// Per-block variance of the statistic for a uniform source at L = 5,
/// from the same published table as [`MAURER_EXPECTED`].
pub const MAURER_VARIANCE: f64 = 2.7046;

/// Outcome of Maurer's universal statistical test (5-bit variant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaurerResult {
    /// Block width in bits (always 5 here).
    pub block_bits: usize,
    /// Number of initialisation blocks consumed.
    pub init_blocks: usize,
    /// Number of scored test blocks.
    pub test_blocks: usize,
    /// The test statistic: mean log2 distance to the previous occurrence.
    pub statistic: f64,
    /// Reference mean for a uniform source ([`MAURER_EXPECTED`]).
    pub expected: f64,
    /// Half-width of the acceptance interval around the reference mean.
    pub threshold: f64,
    pub pass: bool,
}

impl MaurerResult {
    /// Structured text report mirroring [`FipsResult::to_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "universal  L = {}  Q = {}  K = {}",
            self.block_bits, self.init_blocks, self.test_blocks
        )
        .unwrap();
        writeln!(
            s,
            "universal  statistic = {:.6}  expected = {:.6}  tolerance = {:.6}",
            self.statistic, self.expected, self.threshold
        )
        .unwrap();
        writeln!(
            s,
            "universal overall: {}",
            if self.pass { "pass" } else { "FAIL" }
        )
        .unwrap();
        s
    }
}

/// Runs Maurer's universal statistical test (5-bit variant).
///
/// The sample is split into non-overlapping 5-bit blocks, most significant
/// bit first; trailing bits that do not fill a block are ignored. The
/// first `q` blocks initialise the last-occurrence table and the remaining
/// `k` blocks are scored: each contributes log2 of the distance to the
/// previous occurrence of the same block value, where a value never seen
/// before scores the distance from the start of the sample (blocks are
/// numbered from one).
///
/// The verdict is two-sided at roughly the 0.1 % level: the statistic must
/// fall within 3.30 standard deviations of the reference mean, where the
/// standard deviation uses the published finite-K correction factor
/// c(L, K) = 0.7 − 0.8/L + (4 + 32/L)·K^(−3/L)/15.
///
/// `q` below [`MAURER_DEFAULT_Q`] under-populates the table and is
/// rejected; a sample too short to score at least one block is a domain
/// error.
pub fn maurer_universal(bits: &BitVec, q: usize) -> Result<MaurerResult> {
    if q < MAURER_DEFAULT_Q {
        return Err(Error::InvalidParameter(format!(
            "universal test needs at least {MAURER_DEFAULT_Q} initialisation blocks, got {q}"
        )));
    }
    let blocks = bits.len() / MAURER_BLOCK_BITS;
    if blocks <= q {
        return Err(Error::Domain(format!(
            "universal test needs more than {} bits ({} initialisation blocks of {}), got {}",
            q * MAURER_BLOCK_BITS,
            q,
            MAURER_BLOCK_BITS,
            bits.len()
        )));
    }
    let k = blocks - q;

    let block_value = |j: usize| -> usize {
        let base = j * MAURER_BLOCK_BITS;
        let mut v = 0usize;
        for offset in 0..MAURER_BLOCK_BITS {
            v = (v << 1) | usize::from(bits.get(base + offset));
        }
        v
    };

    // last_seen holds 1-indexed block positions; zero means "not yet seen".
    let mut last_seen = [0usize; 1 << MAURER_BLOCK_BITS];
    for position in 1..=q {
        last_seen[block_value(position - 1)] = position;
    }
    let mut sum = 0.0f64;
    for position in (q + 1)..=blocks {
        let value = block_value(position - 1);
        let distance = if last_seen[value] == 0 {
            position
        } else {
            position - last_seen[value]
        };
        sum += (distance as f64).log2();
        last_seen[value] = position;
    }
    let statistic = sum / k as f64;

    let l = MAURER_BLOCK_BITS as f64;
    let kf = k as f64;
    let c = 0.7 - 0.8 / l + (4.0 + 32.0 / l) * kf.powf(-3.0 / l) / 15.0;
    let threshold = 3.30 * c * (MAURER_VARIANCE / kf).sqrt();

    Ok(MaurerResult {
        block_bits: MAURER_BLOCK_BITS,
        init_blocks: q,
        test_blocks: k,
        statistic,
        expected: MAURER_EXPECTED,
        threshold,
        pass: (statistic - MAURER_EXPECTED).abs() <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn sample(seed: u64, len: usize) -> BitVec {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        BitVec::random(&mut rng, len)
    }

    #[test]
    fn bounds_table_fingerprint_is_pinned() {
        assert_eq!(bounds_fingerprint(), 0x535b_bc87_f3b5_41bd);
        // Spot checks so the fingerprint cannot drift together with the
        // table rendering.
        assert_eq!(FIPS_BOUNDS.monobit, (9_725, 10_275));
        assert_eq!(FIPS_BOUNDS.runs[0], (2_315, 2_685));
        assert_eq!(FIPS_BOUNDS.runs[5], (103, 209));
        assert_eq!(FIPS_BOUNDS.long_run, 26);
    }

    #[test]
    fn battery_rejects_wrong_sample_length() {
        for len in [0, 19_999, 20_001] {
            let err = fips_140_2(&BitVec::zeros(len)).unwrap_err();
            assert!(matches!(err, Error::Domain(_)), "len {len}: {err}");
        }
    }

    #[test]
    fn constant_stream_fails_every_subtest() {
        let res = fips_140_2(&BitVec::zeros(FIPS_SAMPLE_BITS)).unwrap();
        assert_eq!(res.monobit.ones, 0);
        assert!(!res.monobit.pass);
        assert!(!res.poker.pass);
        assert_eq!(res.runs.zero_runs, [0, 0, 0, 0, 0, 1]);
        assert_eq!(res.runs.one_runs, [0; 6]);
        assert!(!res.runs.pass);
        assert_eq!(res.long_run.max_run, FIPS_SAMPLE_BITS);
        assert!(!res.long_run.pass);
        assert!(!res.overall());
        assert!(res.to_text().contains("FAIL"));
    }

    #[test]
    fn alternating_stream_passes_monobit_but_fails_runs_and_poker() {
        let bits = BitVec::from_fn(FIPS_SAMPLE_BITS, |i| i % 2 == 1);
        let res = fips_140_2(&bits).unwrap();
        assert_eq!(res.monobit.ones, 10_000);
        assert!(res.monobit.pass);
        // Every aligned nibble reads 0101, so one cell holds all 5 000
        // groups: (16/5000)·5000² − 5000 = 75 000.
        assert!((res.poker.statistic - 75_000.0).abs() < 1e-9);
        assert!(!res.poker.pass);
        assert_eq!(res.runs.zero_runs[0], 10_000);
        assert_eq!(res.runs.one_runs[0], 10_000);
        assert!(!res.runs.pass);
        assert_eq!(res.long_run.max_run, 1);
        assert!(res.long_run.pass);
        assert!(!res.overall());
    }

    #[test]
    fn biased_stream_fails_monobit() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let bits = BitVec::from_fn(FIPS_SAMPLE_BITS, |_| rng.gen_bool(0.6));
        let res = fips_140_2(&bits).unwrap();
        assert!(res.monobit.ones > FIPS_BOUNDS.monobit.1);
        assert!(!res.monobit.pass);
        assert!(!res.overall());
    }

    #[test]
    fn monobit_band_is_exclusive_at_both_edges() {
        for (ones, expect) in [(9_725, false), (9_726, true), (10_274, true), (10_275, false)] {
            let bits = BitVec::from_fn(FIPS_SAMPLE_BITS, |i| i < ones);
            let res = fips_140_2(&bits).unwrap();
            assert_eq!(res.monobit.ones, ones);
            assert_eq!(res.monobit.pass, expect, "ones = {ones}");
        }
    }

    #[test]
    fn long_run_boundary_sits_at_twenty_six() {
        // Alternating background with a single splice of identical bits,
        // forced to zero on both flanks so the longest run is exactly the
        // splice length regardless of its parity.
        let spliced = |run: usize| {
            BitVec::from_fn(FIPS_SAMPLE_BITS, move |i| {
                if i == 999 || i == 1_000 + run {
                    false
                } else if (1_000..1_000 + run).contains(&i) {
                    true
                } else {
                    i % 2 == 0
                }
            })
        };
        let just_under = fips_140_2(&spliced(25)).unwrap();
        assert_eq!(just_under.long_run.max_run, 25);
        assert!(just_under.long_run.pass);
        let at_limit = fips_140_2(&spliced(26)).unwrap();
        assert_eq!(at_limit.long_run.max_run, 26);
        assert!(!at_limit.long_run.pass);
    }

    #[test]
    fn seeded_generator_rarely_fails_the_battery() {
        let mut failures = 0;
        for seed in 0..100u64 {
            let res = fips_140_2(&sample(seed, FIPS_SAMPLE_BITS)).unwrap();
            if !res.overall() {
                failures += 1;
            }
        }
        assert!(failures <= 2, "{failures} battery failures in 100 samples");
    }

    #[test]
    fn battery_is_deterministic() {
        let bits = sample(11, FIPS_SAMPLE_BITS);
        assert_eq!(fips_140_2(&bits).unwrap(), fips_140_2(&bits).unwrap());
        assert!(fips_140_2(&bits).unwrap().to_text().contains("pass"));
    }

    #[test]
    fn universal_test_rejects_short_samples_and_small_q() {
        let err = maurer_universal(&BitVec::zeros(MAURER_DEFAULT_Q * MAURER_BLOCK_BITS), MAURER_DEFAULT_Q)
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
        let err = maurer_universal(&BitVec::zeros(10_000), 100).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)), "{err}");
    }

    #[test]
    fn repeated_block_scores_zero_entropy() {
        // One 5-bit pattern over and over: every scored block saw itself
        // one block ago, so every contribution is log2(1) = 0.
        let pattern = [true, false, true, true, false];
        let bits = BitVec::from_fn(10_000, |i| pattern[i % 5]);
        let res = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
        assert_eq!(res.test_blocks, 2_000 - MAURER_DEFAULT_Q);
        assert_eq!(res.statistic, 0.0);
        assert!(!res.pass);
    }

    #[test]
    fn short_period_stream_fails_with_log_period_statistic() {
        // Sixteen distinct 5-bit blocks repeating with period 16 blocks:
        // in steady state every distance is exactly 16, so the statistic
        // is exactly log2(16) = 4 — well below the reference mean.
        let block_of = |j: usize| j % 16; // distinct 5-bit values 0..16
        let bits = BitVec::from_fn((MAURER_DEFAULT_Q + 8_192) * MAURER_BLOCK_BITS, |i| {
            let value = block_of(i / MAURER_BLOCK_BITS);
            (value >> (MAURER_BLOCK_BITS - 1 - i % MAURER_BLOCK_BITS)) & 1 == 1
        });
        let res = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
        assert_eq!(res.statistic, 4.0);
        assert!(!res.pass);
    }

    #[test]
    fn seeded_generator_matches_reference_entropy() {
        let k = 160_000;
        let bits = sample(3, (MAURER_DEFAULT_Q + k) * MAURER_BLOCK_BITS);
        let res = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
        assert_eq!(res.test_blocks, k);
        assert_eq!(res.expected, MAURER_EXPECTED);
        assert!(
            res.pass,
            "statistic {} vs expected {} ± {}",
            res.statistic, res.expected, res.threshold
        );
    }

    #[test]
    fn universal_statistic_converges_with_block_count() {
        // Mean absolute deviation from the reference mean must shrink as
        // the number of scored blocks grows (it scales like K^-1/2).
        let mut mean_dev = Vec::new();
        for k in [1usize << 13, 1 << 15, 1 << 17] {
            let mut total = 0.0;
            let seeds = 20;
            for seed in 0..seeds {
                let bits = sample(1_000 + seed, (MAURER_DEFAULT_Q + k) * MAURER_BLOCK_BITS);
                let res = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
                total += (res.statistic - MAURER_EXPECTED).abs();
            }
            mean_dev.push(total / seeds as f64);
        }
        assert!(
            mean_dev[0] > mean_dev[1] && mean_dev[1] > mean_dev[2],
            "deviations did not shrink: {mean_dev:?}"
        );
    }

    #[test]
    fn expectation_constant_matches_its_defining_series() {
        // E = Σ_{i≥1} 2^-L (1 − 2^-L)^(i-1) · log2(i) for L = 5.
        let p = (2.0f64).powi(-(MAURER_BLOCK_BITS as i32));
        let mut sum = 0.0f64;
        let mut weight = 1.0f64;
        let mut i = 1u64;
        loop {
            sum += p * weight * (i as f64).log2();
            weight *= 1.0 - p;
            i += 1;
            if weight < 1e-18 && i > 64 {
                break;
            }
        }
        assert!(
            (sum - MAURER_EXPECTED).abs() < 1e-12,
            "series gave {sum}, constant is {MAURER_EXPECTED}"
        );
    }

    #[test]
    fn universal_test_is_deterministic_and_reports() {
        let bits = sample(5, (MAURER_DEFAULT_Q + 4_096) * MAURER_BLOCK_BITS);
        let a = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
        let b = maurer_universal(&bits, MAURER_DEFAULT_Q).unwrap();
        assert_eq!(a, b);
        let text = a.to_text();
        assert!(text.contains("universal"));
        assert!(text.contains("statistic"));
    }
}
