//! The two endpoint state machines and the one-call session driver.
//!
//! One session runs the full pipeline: a clocked transmission, basis
//! sifting over the public channel, interactive error correction,
//! entropy budgeting with hashed extraction, and the final key-check
//! sacrifice. Both endpoints derive the transmission from the shared
//! `seed` — the seed plays the role the physical quantum channel would,
//! giving Alice the pulse view and Bob the detection view of the same
//! events, so no quantum information ever crosses the classical wire.
//!
//! The sift conversation is announcement-ordered: Bob first says *when*
//! he detected (never what), Alice answers with her bases for exactly
//! those slots, and Bob closes with the slots where the bases matched.
//! Every later payload is parities, seeds, or deliberately sacrificed
//! bits; a transcript recorder on the transport therefore sees exactly
//! what a passive eavesdropper could.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::bits::BitVec;
use crate::error::Result;
use crate::link::{channel_parameter, eta_opt, expected_ber, LinkParams};
use crate::privacy::{
    extract_and_check_alice, extract_and_check_bob, key_bias, secret_fraction, CheckedKey,
    SecrecyBudget, SecrecyPolicy, SecretKey,
};
use crate::reconcile::{reconcile_alice, reconcile_bob, ReconciledKey};
use crate::report::SessionReport;
use crate::security::attack_flags;
use crate::sim::{simulate_transmission, Basis, PulseTrain, TransmissionOutcome};
use crate::transport::{loopback_pair, Chan, Transport};
use crate::wire::Payload;

/// Which endpoint a key belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

/// A basis-reconciled key: the bits both sides kept and the slots they
/// came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKey {
    pub bits: BitVec,
    /// Strictly increasing slot indices, identical on both sides.
    pub slots: Vec<u32>,
    pub n: usize,
    pub side: Side,
}

/// A sifted key plus the raw-detection counts the report needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftOutcome {
    pub key: SiftedKey,
    /// Single-detection slots Bob announced (his raw key length).
    pub n_raw: usize,
    /// Multi-detection slots discarded before announcement.
    pub n_multi: usize,
}

/// Alice's half of sifting: waits for Bob's detection announcement,
/// reveals her bases for exactly those slots, and keeps the bits at the
/// slots Bob reports as basis matches.
pub fn sift_alice<T: Transport>(chan: &mut Chan<T>, pulses: &PulseTrain) -> Result<SiftOutcome> {
    let (slots, multi_count) = match chan.recv()? {
        Payload::DetectedSlots { slots, multi_count } => (slots, multi_count),
        other => return Err(chan.unexpected(&other, "DETECTED_SLOTS")),
    };
    if let Some(&last) = slots.last() {
        if last as usize >= pulses.len() {
            return Err(chan.abort(&format!(
                "detected slot {last} is beyond the {}-slot transmission",
                pulses.len()
            )));
        }
    }
    let bases =
        BitVec::from_fn(slots.len(), |i| pulses.basis(slots[i] as usize) == Basis::Diag);
    chan.send(Payload::Bases { bases })?;

    let matched = match chan.recv()? {
        Payload::MatchedSlots { slots } => slots,
        other => return Err(chan.unexpected(&other, "MATCHED_SLOTS")),
    };
    // Both lists are strictly increasing (the wire enforces it), so a
    // single forward scan verifies the subset relation.
    let mut announced = slots.iter();
    for &m in &matched {
        if !announced.any(|&s| s == m) {
            return Err(chan.abort(&format!("matched slot {m} was never announced")));
        }
    }
    let bits = BitVec::from_fn(matched.len(), |i| pulses.bit(matched[i] as usize));
    let n = matched.len();
    Ok(SiftOutcome {
        key: SiftedKey { bits, slots: matched, n, side: Side::Alice },
        n_raw: slots.len(),
        n_multi: multi_count as usize,
    })
}

/// Bob's half of sifting: announces *when* he detected (single
/// detections only, bit values never), learns Alice's bases, and keeps
/// the detections whose measurement basis matched.
pub fn sift_bob<T: Transport>(
    chan: &mut Chan<T>,
    outcome: &TransmissionOutcome,
) -> Result<SiftOutcome> {
    let singles: Vec<_> = outcome.single_detections().collect();
    let slots: Vec<u32> = singles.iter().map(|d| d.slot).collect();
    let n_multi = outcome.multi_count();
    chan.send(Payload::DetectedSlots { slots: slots.clone(), multi_count: n_multi as u32 })?;

    let bases = match chan.recv()? {
        Payload::Bases { bases } => bases,
        other => return Err(chan.unexpected(&other, "BASES")),
    };
    if bases.len() != slots.len() {
        return Err(chan.abort(&format!(
            "basis list covers {} slots where {} were announced",
            bases.len(),
            slots.len()
        )));
    }

    let mut matched = Vec::new();
    let mut kept_bits = Vec::new();
    for (i, d) in singles.iter().enumerate() {
        let alice_diag = bases.get(i);
        let bob_diag = d.detector.basis() == Basis::Diag;
        if alice_diag == bob_diag {
            matched.push(d.slot);
            kept_bits.push(d.detector.bit());
        }
    }
    chan.send(Payload::MatchedSlots { slots: matched.clone() })?;

    let bits = BitVec::from_fn(kept_bits.len(), |i| kept_bits[i]);
    let n = matched.len();
    Ok(SiftOutcome {
        key: SiftedKey { bits, slots: matched, n, side: Side::Bob },
        n_raw: slots.len(),
        n_multi,
    })
}

/// Alice's full endpoint: transmit, sift, answer reconciliation
/// queries, price the key, extract, and verify.
pub fn run_alice<T: Transport>(
    chan: &mut Chan<T>,
    lp: &LinkParams,
    seed: u64,
    policy: &SecrecyPolicy,
) -> Result<(SecretKey, SessionReport)> {
    policy.validate()?;
    let outcome = simulate_transmission(lp, seed)?;
    // The simulator owns stream 0 of the seed; Alice's protocol
    // randomness (shuffle seeds, extraction seed) lives on stream 1 so
    // the two can never collide.
    let mut prng = ChaCha12Rng::seed_from_u64(seed);
    prng.set_stream(1);

    let sift = sift_alice(chan, &outcome.pulses)?;
    let reconciled = reconcile_alice(chan, &sift.key.bits, &mut prng)?;
    let bias = key_bias(&reconciled.bits);
    let budget = secret_fraction(
        reconciled.n,
        lp.tx.mu,
        reconciled.epsilon_measured,
        policy,
        bias,
        Some(reconciled.leak_bits),
    );
    let checked = extract_and_check_alice(chan, &reconciled, &budget, policy, &mut prng)?;
    Ok(finish(chan.session(), lp, policy, &sift, &reconciled, &budget, checked))
}

/// Bob's full endpoint: receive, sift, drive the error correction,
/// validate Alice's budget, extract, and verify.
pub fn run_bob<T: Transport>(
    chan: &mut Chan<T>,
    lp: &LinkParams,
    seed: u64,
    policy: &SecrecyPolicy,
) -> Result<(SecretKey, SessionReport)> {
    policy.validate()?;
    let outcome = simulate_transmission(lp, seed)?;
    let sift = sift_bob(chan, &outcome)?;
    // The a-priori error estimate only sizes the first correction words;
    // a blocked source (μ = 0) defaults to the safest assumption.
    let eps_estimate = expected_ber(lp).map(|b| b.value).unwrap_or(0.5);
    let reconciled = reconcile_bob(chan, &sift.key.bits, eps_estimate)?;
    let (checked, budget) = extract_and_check_bob(chan, &reconciled, lp.tx.mu, policy)?;
    Ok(finish(chan.session(), lp, policy, &sift, &reconciled, &budget, checked))
}

/// Shared tail of both endpoints: fold the verified (or destroyed) key
/// and the agreed budget into the report. Every report field derives
/// from values the protocol forces to be identical on the two sides, so
/// the reports match bit for bit.
fn finish(
    session: u64,
    lp: &LinkParams,
    policy: &SecrecyPolicy,
    sift: &SiftOutcome,
    reconciled: &ReconciledKey,
    budget: &SecrecyBudget,
    checked: CheckedKey,
) -> (SecretKey, SessionReport) {
    let flags = attack_flags(lp.tx.mu, eta_opt(&lp.ch));
    let zero_yield = budget.f_secret <= policy.keycheck_bits;
    let keycheck_failed = matches!(checked, CheckedKey::Destroyed) && !zero_yield;
    let key = match checked {
        CheckedKey::Verified(k) => k,
        CheckedKey::Destroyed => SecretKey { bits: BitVec::zeros(0), session, budget: *budget },
    };

    let slots = lp.tx.clock_rate_hz;
    let n_sifted = reconciled.n;
    let p_sif = n_sifted as f64 / slots as f64;
    let p_sif_to_secret =
        if n_sifted == 0 { 0.0 } else { budget.f_secret as f64 / n_sifted as f64 };
    let p_secret = if budget.f_secret > 0 { p_sif * p_sif_to_secret } else { 0.0 };

    let report = SessionReport {
        session,
        slots,
        mu: lp.tx.mu,
        eta_opt: eta_opt(&lp.ch),
        channel_parameter: channel_parameter(&lp.ch),
        n_raw: sift.n_raw,
        n_multi: sift.n_multi,
        n_sifted,
        epsilon: reconciled.epsilon_measured,
        leak_bits: reconciled.leak_bits,
        f_secret: budget.f_secret,
        final_len: key.bits.len(),
        p_sif,
        p_sif_to_secret,
        p_secret,
        zero_yield,
        usd_safe: flags.usd_safe,
        pns_safe: flags.pns_safe,
        keycheck_failed,
    };
    (key, report)
}

/// Runs a complete two-endpoint session over an in-process loopback:
/// Alice on a helper thread, Bob on the caller's. Returns both keys and
/// the (identical) report. Deterministic in `(lp, seed, policy)`.
pub fn run_session(
    lp: &LinkParams,
    seed: u64,
    policy: &SecrecyPolicy,
) -> Result<(SecretKey, SecretKey, SessionReport)> {
    let (ta, tb) = loopback_pair();
    let lp_a = *lp;
    let policy_a = *policy;
    let alice_thread = std::thread::spawn(move || {
        let mut chan = Chan::new(ta, seed);
        run_alice(&mut chan, &lp_a, seed, &policy_a)
    });
    let mut chan = Chan::new(tb, seed);
    let bob = run_bob(&mut chan, lp, seed, policy);
    let alice = match alice_thread.join() {
        Ok(result) => result,
        Err(panic) => std::panic::resume_unwind(panic),
    };
    let (bob_key, bob_report) = bob?;
    let (alice_key, alice_report) = alice?;
    assert_eq!(
        alice_report, bob_report,
        "endpoint reports diverged — the protocol state machines disagree"
    );
    Ok((alice_key, bob_key, alice_report))
}

/// Convenience for tests and tools that need a deterministic endpoint
/// pair over explicit transports (e.g. recorders or sockets): runs
/// Alice over `ta` on a helper thread and Bob over `tb` on the
/// caller's, with `seed` as session id on both.
pub fn run_endpoints<TA, TB>(
    ta: TA,
    tb: TB,
    lp: &LinkParams,
    seed: u64,
    policy: &SecrecyPolicy,
) -> Result<((SecretKey, SessionReport), (SecretKey, SessionReport))>
where
    TA: Transport + Send + 'static,
    TB: Transport,
{
    let lp_a = *lp;
    let policy_a = *policy;
    let alice_thread = std::thread::spawn(move || {
        let mut chan = Chan::new(ta, seed);
        run_alice(&mut chan, &lp_a, seed, &policy_a)
    });
    let mut chan = Chan::new(tb, seed);
    let bob = run_bob(&mut chan, lp, seed, policy);
    let alice = match alice_thread.join() {
        Ok(result) => result,
        Err(panic) => std::panic::resume_unwind(panic),
    };
    Ok((alice?, bob?))
}
