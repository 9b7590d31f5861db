//! Collision-entropy budgeting, privacy amplification, and the final
//! key check.
//!
//! After reconciliation the two sides hold equal n-bit keys about which
//! an eavesdropper may have partial knowledge: multi-photon pulses she
//! could have split off, intercept-resend measurements hiding inside the
//! observed error rate, the disclosed error-correction parities, and any
//! bias in the key itself. Each is charged to a budget in bits of
//! collision entropy; what remains — minus a fixed safety margin — is the
//! length F of the final key. Both sides then compress: final bit `i` is
//! the parity of a pseudorandom half-density subset of the reconciled
//! key, with the subset-selecting seed public. Eve's expected knowledge
//! of the result is below 2^−s bits.
//!
//! A deliberate sacrifice closes the loop: the first few final-key bits
//! are disclosed and compared. Any residual reconciliation error would
//! have scrambled roughly half of all final bits, so a short window
//! catches a bad key with probability 1 − 2^−window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::reconcile::ReconciledKey;
use crate::transport::{Chan, Transport};
use crate::wire::{BudgetEcho, Payload};

/// Knobs with safe defaults: 20 bits of safety margin, the 1.19
/// Shannon-limit multiplier for estimated error-correction leakage, and
/// a 16-bit key-check sacrifice (false-accept odds 2^−16).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyPolicy {
    pub safety_bits: f64,
    pub ec_overhead: f64,
    pub keycheck_bits: usize,
}

impl Default for SecrecyPolicy {
    fn default() -> Self {
        SecrecyPolicy { safety_bits: 20.0, ec_overhead: 1.19, keycheck_bits: 16 }
    }
}

impl SecrecyPolicy {
    pub fn validate(&self) -> Result<()> {
        if !self.safety_bits.is_finite() || self.safety_bits < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "safety margin {} must be a finite non-negative bit count",
                self.safety_bits
            )));
        }
        if !self.ec_overhead.is_finite() || self.ec_overhead < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "error-correction overhead {} must be ≥ 1 (the Shannon limit)",
                self.ec_overhead
            )));
        }
        Ok(())
    }
}

/// Eve's collision entropy per sifted bit against the two attacks priced
/// into the bound: beam splitting of multi-photon pulses (μ) and
/// intermediate-basis intercept-resend hiding inside the error rate (ε).
/// May go negative; callers floor the resulting key length at zero.
pub fn collision_entropy_rate(mu: f64, eps: f64) -> f64 {
    1.0 - mu - 4.0 * eps * 1.5f64.log2()
}

/// The itemized secrecy budget for one session. All entries are in bits;
/// real-valued deductions are kept exact and rounded only once, at the
/// final floor. `floor_residual` is the fractional remainder discarded
/// by that floor, kept so the budget reconciles against n to the bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyBudget {
    pub n: usize,
    /// n·μ — pulses that may have carried a clone Eve kept.
    pub multi_photon_bits: f64,
    /// n·4ε·log₂(1.5) — the intercept-resend charge for the observed ε.
    pub intercept_resend_bits: f64,
    /// n·(1 + log₂(p₀² + p₁²)) — collision-entropy shortfall of a biased key.
    pub bias_bits: f64,
    /// Parity bits actually disclosed (or the policy estimate).
    pub ec_leak_bits: f64,
    pub safety_bits: f64,
    pub f_secret: usize,
    pub floor_residual: f64,
}

impl SecrecyBudget {
    fn zero() -> Self {
        SecrecyBudget {
            n: 0,
            multi_photon_bits: 0.0,
            intercept_resend_bits: 0.0,
            bias_bits: 0.0,
            ec_leak_bits: 0.0,
            safety_bits: 0.0,
            f_secret: 0,
            floor_residual: 0.0,
        }
    }

    /// Raw (pre-floor) secret length implied by the entries.
    pub fn raw_value(&self) -> f64 {
        self.n as f64
            - self.multi_photon_bits
            - self.intercept_resend_bits
            - self.bias_bits
            - self.ec_leak_bits
            - self.safety_bits
    }

    /// Conservation check: every one of the n bits is either secret,
    /// deducted, or in the sub-bit floor remainder. Exact because
    /// `floor_residual` was defined from the same expression.
    pub fn audit(&self) -> bool {
        self.f_secret as f64 + self.floor_residual == self.raw_value()
    }

    pub fn echo(&self) -> BudgetEcho {
        BudgetEcho {
            n: self.n as u64,
            multi_photon: self.multi_photon_bits,
            intercept_resend: self.intercept_resend_bits,
            bias: self.bias_bits,
            ec_leak_bits: self.ec_leak_bits as u64,
            safety: self.safety_bits,
        }
    }
}

/// Prices a reconciled key: how many secret bits survive after every
/// deduction. `bias` is the key's (p₀, p₁) split; `ec_leak_actual`, when
/// known from reconciliation, replaces the `ec_overhead · h(ε) · n`
/// estimate.
pub fn secret_fraction(
    n: usize,
    mu: f64,
    eps: f64,
    policy: &SecrecyPolicy,
    bias: (f64, f64),
    ec_leak_actual: Option<usize>,
) -> SecrecyBudget {
    if n == 0 {
        return SecrecyBudget::zero();
    }
    let nf = n as f64;
    let (p0, p1) = bias;
    let multi_photon_bits = nf * mu;
    let intercept_resend_bits = nf * 4.0 * eps * 1.5f64.log2();
    let bias_bits = nf * (1.0 + (p0 * p0 + p1 * p1).log2());
    let ec_leak_bits = match ec_leak_actual {
        Some(bits) => bits as f64,
        None => policy.ec_overhead * crate::link::binary_entropy(eps) * nf,
    };
    let mut budget = SecrecyBudget {
        n,
        multi_photon_bits,
        intercept_resend_bits,
        bias_bits,
        ec_leak_bits,
        safety_bits: policy.safety_bits,
        f_secret: 0,
        floor_residual: 0.0,
    };
    let raw = budget.raw_value();
    budget.f_secret = if raw > 0.0 { raw.floor() as usize } else { 0 };
    budget.floor_residual = raw - budget.f_secret as f64;
    budget
}

/// The fraction of zeros and ones in a key, for the bias deduction.
pub fn key_bias(bits: &BitVec) -> (f64, f64) {
    if bits.is_empty() {
        return (0.5, 0.5);
    }
    let n = bits.len() as f64;
    (bits.count_zeros() as f64 / n, bits.count_ones() as f64 / n)
}

/// A distilled secret key with the budget that justified its length.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub bits: BitVec,
    pub session: u64,
    pub budget: SecrecyBudget,
}

impl SecretKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Expands the public 128-bit extraction seed into the subset stream.
fn subset_rng(pa_seed: [u8; 16]) -> ChaCha12Rng {
    let mut seed32 = [0u8; 32];
    seed32[..16].copy_from_slice(&pa_seed);
    seed32[16..].copy_from_slice(&pa_seed);
    ChaCha12Rng::from_seed(seed32)
}

/// Final bit `i` = parity of `key` masked by `masks[i]`.
pub fn parities_of_subsets(key: &BitVec, masks: &[BitVec]) -> BitVec {
    BitVec::from_fn(masks.len(), |i| {
        assert_eq!(masks[i].len(), key.len(), "mask and key lengths must agree");
        key.masked_parity(masks[i].words())
    })
}

/// Compresses an n-bit reconciled key to `f_secret` bits: subset masks
/// are drawn from the seeded stream one after another (each index kept
/// with probability 1/2), and each final bit is the masked parity. A
/// deterministic function of (key, seed) — both sides compute it locally
/// and only the seed ever crosses the wire.
pub fn extract(key: &BitVec, f_secret: usize, pa_seed: [u8; 16]) -> BitVec {
    let mut rng = subset_rng(pa_seed);
    let mut out = BitVec::zeros(f_secret);
    for i in 0..f_secret {
        let mask = BitVec::random(&mut rng, key.len());
        out.set(i, key.masked_parity(mask.words()));
    }
    out
}

/// Outcome of a verified session key: either a key both sides trust, or
/// proof the reconciled keys still differed (keys destroyed).
#[derive(Debug, Clone, PartialEq)]
pub enum CheckedKey {
    Verified(SecretKey),
    Destroyed,
}

fn split_check(bits: &BitVec, window: usize) -> (BitVec, BitVec) {
    (bits.slice(0, window), bits.slice(window, bits.len()))
}

/// Alice's half of extraction + key check. Draws the subset seed from
/// her session randomness, announces the budget and length, discloses
/// the leading check window, and compares it with Bob's.
pub fn extract_and_check_alice<T: Transport>(
    chan: &mut Chan<T>,
    reconciled: &ReconciledKey,
    budget: &SecrecyBudget,
    policy: &SecrecyPolicy,
    rng: &mut ChaCha12Rng,
) -> Result<CheckedKey> {
    let mut pa_seed = [0u8; 16];
    rng.fill(&mut pa_seed);
    chan.send(Payload::PaSpec {
        f_secret: budget.f_secret as u32,
        pa_seed,
        budget: budget.echo(),
    })?;
    let key = extract(&reconciled.bits, budget.f_secret, pa_seed);
    check_exchange(chan, key, chan_role_alice(), budget, policy)
}

/// Bob's half: receives the announcement, re-derives the budget from his
/// own ledger (accepting only Alice's bias figure, which he cannot see),
/// vetoes on any disagreement, then extracts and runs the check. Returns
/// the agreed budget alongside the outcome so callers can report it even
/// when the key was destroyed.
pub fn extract_and_check_bob<T: Transport>(
    chan: &mut Chan<T>,
    reconciled: &ReconciledKey,
    mu: f64,
    policy: &SecrecyPolicy,
) -> Result<(CheckedKey, SecrecyBudget)> {
    let (f_secret, pa_seed, echo) = match chan.recv()? {
        Payload::PaSpec { f_secret, pa_seed, budget } => (f_secret, pa_seed, budget),
        other => return Err(chan.unexpected(&other, "PA_SPEC")),
    };

    let mut own = secret_fraction(
        reconciled.n,
        mu,
        reconciled.epsilon_measured,
        policy,
        (0.5, 0.5), // placeholder; Alice's bias is adopted below
        Some(reconciled.leak_bits),
    );
    own.bias_bits = echo.bias;
    let raw = own.raw_value();
    own.f_secret = if raw > 0.0 { raw.floor() as usize } else { 0 };
    own.floor_residual = raw - own.f_secret as f64;

    let expect = own.echo();
    if echo.n != expect.n
        || echo.multi_photon.to_bits() != expect.multi_photon.to_bits()
        || echo.intercept_resend.to_bits() != expect.intercept_resend.to_bits()
        || echo.ec_leak_bits != expect.ec_leak_bits
        || echo.safety.to_bits() != expect.safety.to_bits()
    {
        return Err(chan.abort("secrecy budget disagrees with local ledger"));
    }
    if !(echo.bias.is_finite() && echo.bias >= 0.0) {
        return Err(chan.abort("bias deduction must be a finite non-negative bit count"));
    }
    if f_secret as usize != own.f_secret {
        return Err(chan.abort(&format!(
            "announced key length {} but the budget supports {}",
            f_secret, own.f_secret
        )));
    }

    let key = extract(&reconciled.bits, own.f_secret, pa_seed);
    let outcome = check_exchange(chan, key, chan_role_bob(), &own, policy)?;
    Ok((outcome, own))
}

// The check exchange is symmetric except for who speaks first; a tiny
// role marker keeps one implementation.
struct Role {
    sends_first: bool,
}
fn chan_role_alice() -> Role {
    Role { sends_first: true }
}
fn chan_role_bob() -> Role {
    Role { sends_first: false }
}

fn check_exchange<T: Transport>(
    chan: &mut Chan<T>,
    full_key: BitVec,
    role: Role,
    budget: &SecrecyBudget,
    policy: &SecrecyPolicy,
) -> Result<CheckedKey> {
    // A key too short to survive the sacrifice yields nothing. Both
    // sides reach this conclusion from the agreed budget, silently.
    if full_key.len() <= policy.keycheck_bits {
        return Ok(CheckedKey::Destroyed);
    }
    let (mine, rest) = split_check(&full_key, policy.keycheck_bits);

    let theirs = if role.sends_first {
        chan.send(Payload::KeyCheck { bits: mine.clone() })?;
        match chan.recv()? {
            Payload::KeyCheck { bits } => bits,
            other => return Err(chan.unexpected(&other, "KEYCHECK")),
        }
    } else {
        let theirs = match chan.recv()? {
            Payload::KeyCheck { bits } => bits,
            other => return Err(chan.unexpected(&other, "KEYCHECK")),
        };
        chan.send(Payload::KeyCheck { bits: mine.clone() })?;
        theirs
    };

    if theirs.len() != mine.len() {
        return Err(chan.abort(&format!(
            "key-check window of {} bits where {} were expected",
            theirs.len(),
            mine.len()
        )));
    }
    if theirs != mine {
        return Ok(CheckedKey::Destroyed);
    }
    Ok(CheckedKey::Verified(SecretKey { bits: rest, session: chan.session(), budget: *budget }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::loopback_pair;

    const TABLE_BIAS: (f64, f64) = (0.47, 0.53);

    #[test]
    fn collision_entropy_reference_points() {
        assert!((collision_entropy_rate(0.29, 0.032) - 0.635).abs() < 1e-3);
        assert_eq!(collision_entropy_rate(0.0, 0.0), 1.0);
        assert!((collision_entropy_rate(0.5, 0.05) - 0.383).abs() < 1e-3);
    }

    #[test]
    fn reference_budget_lands_at_235() {
        let budget =
            secret_fraction(651, 0.29, 0.032, &SecrecyPolicy::default(), TABLE_BIAS, Some(155));
        assert_eq!(budget.f_secret, 235);
        assert!(budget.f_secret >= 225 && budget.f_secret <= 275);
        // The bias charge for a 47/53 split of 651 bits is a few bits.
        assert!(budget.bias_bits > 2.0 && budget.bias_bits < 4.0, "bias {}", budget.bias_bits);
        assert!(budget.audit());
    }

    #[test]
    fn error_free_unbiased_budget() {
        let budget =
            secret_fraction(10_000, 0.1, 0.0, &SecrecyPolicy::default(), (0.5, 0.5), None);
        assert_eq!(budget.f_secret, 8980);
        assert_eq!(budget.ec_leak_bits, 0.0);
        assert_eq!(budget.bias_bits, 0.0);
        assert!(budget.audit());
    }

    #[test]
    fn empty_input_prices_to_zero() {
        let budget = secret_fraction(0, 0.3, 0.03, &SecrecyPolicy::default(), (0.5, 0.5), None);
        assert_eq!(budget, SecrecyBudget::zero());
        assert!(budget.audit());
    }

    #[test]
    fn exhausted_budget_floors_at_zero() {
        // High μ and ε leave nothing; f_secret must clamp, not wrap.
        let budget =
            secret_fraction(100, 0.9, 0.25, &SecrecyPolicy::default(), (0.5, 0.5), None);
        assert_eq!(budget.f_secret, 0);
        assert!(budget.raw_value() < 0.0);
        assert!(budget.audit());
    }

    #[test]
    fn budget_monotone_in_epsilon_and_past_peak_in_mu() {
        let policy = SecrecyPolicy::default();
        let mut last = usize::MAX;
        for i in 0..=100 {
            let eps = 0.005 * i as f64; // 0 ..= 0.5
            let b = secret_fraction(10_000, 0.3, eps, &policy, (0.5, 0.5), None);
            assert!(b.f_secret <= last, "f_secret rose at eps {eps}");
            last = b.f_secret;
        }
        let f = |mu: f64| secret_fraction(10_000, mu, 0.02, &policy, (0.5, 0.5), None).f_secret;
        let peak = (1..99).map(|i| i as f64 / 100.0).fold(0.0f64, |best, mu| {
            if f(mu) > f(best) {
                mu
            } else {
                best
            }
        });
        let mut last = f(peak);
        let mut mu = peak;
        while mu < 0.99 {
            mu += 0.01;
            let cur = f(mu);
            assert!(cur <= last, "f_secret rose past the peak at mu {mu}");
            last = cur;
        }
    }

    #[test]
    fn degenerate_bias_wipes_the_budget() {
        let budget =
            secret_fraction(651, 0.29, 0.032, &SecrecyPolicy::default(), (0.0, 1.0), Some(155));
        assert_eq!(budget.f_secret, 0);
        assert!((budget.bias_bits - 651.0).abs() < 1e-9);
    }

    #[test]
    fn policy_validation() {
        assert!(SecrecyPolicy::default().validate().is_ok());
        assert!(SecrecyPolicy { safety_bits: -1.0, ..Default::default() }.validate().is_err());
        assert!(SecrecyPolicy { ec_overhead: 0.9, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn hand_computed_subset_parities() {
        // Key 1011 with S₀ = {0, 2} and S₁ = {1, 2, 3}:
        // bit 0 = 1⊕1 = 0, bit 1 = 0⊕1⊕1 = 0.
        let key = BitVec::from_fn(4, |i| [true, false, true, true][i]);
        let m0 = BitVec::from_fn(4, |i| i == 0 || i == 2);
        let m1 = BitVec::from_fn(4, |i| i >= 1);
        let out = parities_of_subsets(&key, &[m0, m1]);
        assert_eq!(out.len(), 2);
        assert!(!out.get(0));
        assert!(!out.get(1));
    }

    #[test]
    fn extraction_is_deterministic_in_seed() {
        let key = BitVec::random(&mut ChaCha12Rng::seed_from_u64(5), 651);
        let a = extract(&key, 235, *b"0123456789abcdef");
        let b = extract(&key, 235, *b"0123456789abcdef");
        assert_eq!(a, b);
        let c = extract(&key, 235, *b"0123456789abcdeg");
        assert_ne!(a, c);
        assert_eq!(a.len(), 235);
    }

    #[test]
    fn single_input_error_scrambles_half_the_output() {
        let n = 2_000;
        let f = 1_000;
        let key = BitVec::random(&mut ChaCha12Rng::seed_from_u64(6), n);
        let mut other = key.clone();
        other.flip(137);
        other.flip(801);
        other.flip(1999);
        let a = extract(&key, f, [9u8; 16]);
        let b = extract(&other, f, [9u8; 16]);
        let frac = a.hamming_distance(&b) as f64 / f as f64;
        assert!((frac - 0.5).abs() < 0.05, "disagreement fraction {frac}");
    }

    fn run_pa_pair(
        alice_rk: ReconciledKey,
        bob_rk: ReconciledKey,
        mu: f64,
        policy: SecrecyPolicy,
    ) -> (CheckedKey, CheckedKey) {
        let (ta, tb) = loopback_pair();
        let apolicy = policy;
        let handle = std::thread::spawn(move || {
            let mut chan = Chan::new(ta, 0x51);
            let bias = key_bias(&alice_rk.bits);
            let budget = secret_fraction(
                alice_rk.n,
                mu,
                alice_rk.epsilon_measured,
                &apolicy,
                bias,
                Some(alice_rk.leak_bits),
            );
            let mut rng = ChaCha12Rng::seed_from_u64(0xa1);
            extract_and_check_alice(&mut chan, &alice_rk, &budget, &apolicy, &mut rng).unwrap()
        });
        let mut chan = Chan::new(tb, 0x51);
        let (bob, bob_budget) = extract_and_check_bob(&mut chan, &bob_rk, mu, &policy).unwrap();
        assert!(bob_budget.audit());
        (handle.join().unwrap(), bob)
    }

    fn reconciled(bits: BitVec, eps: f64, leak: usize) -> ReconciledKey {
        let n = bits.len();
        ReconciledKey { bits, n, epsilon_measured: eps, leak_bits: leak, rounds: 4 }
    }

    #[test]
    fn matching_keys_verify_and_truncate() {
        let bits = BitVec::random(&mut ChaCha12Rng::seed_from_u64(7), 651);
        let eps = 20.0 / 651.0;
        let (alice, bob) =
            run_pa_pair(reconciled(bits.clone(), eps, 155), reconciled(bits, eps, 155), 0.29, SecrecyPolicy::default());
        match (&alice, &bob) {
            (CheckedKey::Verified(a), CheckedKey::Verified(b)) => {
                assert_eq!(a.bits, b.bits);
                assert_eq!(a.len(), a.budget.f_secret - 16);
                assert!(a.budget.audit());
            }
            other => panic!("expected verified pair, got {other:?}"),
        }
    }

    #[test]
    fn residual_error_destroys_both_keys() {
        let bits = BitVec::random(&mut ChaCha12Rng::seed_from_u64(8), 651);
        let mut corrupted = bits.clone();
        corrupted.flip(300);
        corrupted.flip(301);
        let eps = 20.0 / 651.0;
        let (alice, bob) = run_pa_pair(
            reconciled(bits, eps, 155),
            reconciled(corrupted, eps, 155),
            0.29,
            SecrecyPolicy::default(),
        );
        assert_eq!(alice, CheckedKey::Destroyed);
        assert_eq!(bob, CheckedKey::Destroyed);
    }

    #[test]
    fn tiny_budget_yields_nothing() {
        // A key shorter than the check window is silently destroyed on
        // both sides rather than risking a zero-length comparison.
        let bits = BitVec::random(&mut ChaCha12Rng::seed_from_u64(9), 60);
        let eps = 0.01;
        let (alice, bob) = run_pa_pair(
            reconciled(bits.clone(), eps, 20),
            reconciled(bits, eps, 20),
            0.29,
            SecrecyPolicy::default(),
        );
        assert_eq!(alice, CheckedKey::Destroyed);
        assert_eq!(bob, CheckedKey::Destroyed);
    }

    #[test]
    fn budget_disagreement_aborts() {
        let bits = BitVec::random(&mut ChaCha12Rng::seed_from_u64(10), 651);
        let eps = 20.0 / 651.0;
        let alice_rk = reconciled(bits.clone(), eps, 155);
        let bob_rk = reconciled(bits, eps, 154); // ledgers differ by one bit
        let (ta, tb) = loopback_pair();
        let policy = SecrecyPolicy::default();
        let handle = std::thread::spawn(move || {
            let mut chan = Chan::new(ta, 0x52);
            let budget = secret_fraction(
                alice_rk.n,
                0.29,
                alice_rk.epsilon_measured,
                &policy,
                key_bias(&alice_rk.bits),
                Some(alice_rk.leak_bits),
            );
            let mut rng = ChaCha12Rng::seed_from_u64(0xa2);
            extract_and_check_alice(&mut chan, &alice_rk, &budget, &policy, &mut rng)
        });
        let mut chan = Chan::new(tb, 0x52);
        let bob = extract_and_check_bob(&mut chan, &bob_rk, 0.29, &policy);
        assert!(matches!(bob, Err(Error::Abort(_))));
        assert!(matches!(handle.join().unwrap(), Err(Error::Abort(_))));
    }
}
