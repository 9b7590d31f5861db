//! When can this link make secret bits at all?
//!
//! Everything here is closed-form analysis of the large-key limit. The
//! central quantity is the asymptotic secret rate: secret bits per
//! sifted bit as a function of the pulse strength μ and the channel
//! quality x = η_opt/C alone. From it follow the yield window of viable
//! μ values, the worst channel quality that still yields anything, and —
//! combined with a range-scaling model for the optics — the maximum
//! usable path length per background regime.
//!
//! Two photon-number attacks are priced as feasibility inequalities
//! rather than simulated: unambiguous state discrimination needs the
//! triple-photon emission rate to beat the legitimate single-photon
//! arrival rate (μ²/32 > η_opt), and photon-number splitting needs the
//! multi-photon rate to do the same (μ > 2η_opt). A link is "safe" from
//! an attack when the corresponding inequality fails.

use std::io::Write;

use crate::error::{Error, Result};
use crate::link::{
    binary_entropy, channel_parameter, receiver_factor_d, ChannelParams, ReceiverParams,
};
use crate::privacy::{collision_entropy_rate, SecrecyPolicy};

/// μ step for bracketing scans; roots are then bisected to [`ROOT_TOL`].
const MU_GRID_STEP: f64 = 1e-3;
const ROOT_TOL: f64 = 1e-6;

/// Secret rate before the floor at zero: collision entropy per sifted
/// bit minus the error-correction toll, both driven by the
/// background-induced error rate ε = D/(μx), clamped to [0, 0.5].
fn net_rate(mu: f64, x: f64, d: f64, policy: &SecrecyPolicy) -> f64 {
    let eps = (d / (mu * x)).min(0.5);
    collision_entropy_rate(mu, eps) - policy.ec_overhead * binary_entropy(eps)
}

/// Secret bits per sifted bit in the large-key limit, where the safety
/// margin s vanishes against n: `max(0, R(μ, ε) − overhead·f(ε))` with
/// `ε = D/(μ·x)` clamped to [0, 0.5].
///
/// An infinite channel parameter (noiseless channel) gives ε = 0 and a
/// rate of exactly 1 − μ. Non-positive μ or x yield no secret bits.
pub fn asymptotic_secret_rate(
    mu: f64,
    channel_parameter: f64,
    rx: &ReceiverParams,
    policy: &SecrecyPolicy,
) -> f64 {
    if mu <= 0.0 || channel_parameter <= 0.0 {
        return 0.0;
    }
    net_rate(mu, channel_parameter, receiver_factor_d(rx), policy).max(0.0)
}

/// The window of pulse strengths with positive secret yield at one
/// channel quality. Below `mu_min` the background error rate eats the
/// key; above `mu_max` multi-photon pulses do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldRegion {
    pub channel_parameter: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Maximizer of μ·rate — the most secret bits per *emitted* pulse,
    /// which is what a link operator tunes μ for.
    pub mu_opt: f64,
    /// The secret rate at `mu_opt`.
    pub rate_at_opt: f64,
}

/// Bisects `f` for its root in [lo, hi], where `f(lo)` and `f(hi)` have
/// opposite signs (or one is zero).
fn bisect_root(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let rising = f(lo) < f(hi);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let positive = if rising { f(mid) > 0.0 } else { f(mid) <= 0.0 };
        if positive {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ternary-searches the maximizer of `f` on [lo, hi], assuming a single
/// interior peak.
fn refine_peak(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > ROOT_TOL {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Scans the μ grid and returns (argmax, max) of `f`, with the argmax
/// refined by local ternary search.
fn mu_peak(f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best_i = 1;
    let mut best = f(MU_GRID_STEP);
    for i in 2..1000 {
        let v = f(i as f64 * MU_GRID_STEP);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = ((best_i - 1) as f64 * MU_GRID_STEP).max(MU_GRID_STEP);
    let hi = ((best_i + 1) as f64 * MU_GRID_STEP).min(1.0 - MU_GRID_STEP);
    let mu = refine_peak(lo, hi, f);
    (mu, f(mu))
}

/// Solves for the yield window at one channel quality: the two roots of
/// the net rate bracketing its positive stretch, and the μ·rate
/// maximizer between them. `None` when no μ yields secret bits.
pub fn yield_region(
    channel_parameter: f64,
    rx: &ReceiverParams,
    policy: &SecrecyPolicy,
) -> Option<YieldRegion> {
    if channel_parameter <= 0.0 {
        return None;
    }
    let d = receiver_factor_d(rx);
    let net = |mu: f64| net_rate(mu, channel_parameter, d, policy);
    let (mu_peak_rate, peak) = mu_peak(&net);
    if peak <= 0.0 {
        return None;
    }

    // Walk down/up the grid from the peak to bracket each root; if the
    // rate is still positive at the grid edge, the window is open-ended
    // within the physical μ ∈ (0, 1) domain.
    let mut i = (mu_peak_rate / MU_GRID_STEP) as usize;
    while i > 1 && net(i as f64 * MU_GRID_STEP) > 0.0 {
        i -= 1;
    }
    let mu_min = if net(i as f64 * MU_GRID_STEP) > 0.0 {
        if net(1e-12) > 0.0 {
            0.0
        } else {
            bisect_root(1e-12, i as f64 * MU_GRID_STEP, net)
        }
    } else {
        bisect_root(i as f64 * MU_GRID_STEP, (i + 1) as f64 * MU_GRID_STEP, net)
    };

    let mut j = (mu_peak_rate / MU_GRID_STEP) as usize + 1;
    while j < 999 && net(j as f64 * MU_GRID_STEP) > 0.0 {
        j += 1;
    }
    let mu_max = if net(j as f64 * MU_GRID_STEP) > 0.0 {
        bisect_root(j as f64 * MU_GRID_STEP, 1.0, net)
    } else {
        bisect_root((j - 1) as f64 * MU_GRID_STEP, j as f64 * MU_GRID_STEP, net)
    };

    let per_pulse = |mu: f64| mu * net(mu).max(0.0);
    let lo = mu_min.max(MU_GRID_STEP * 0.5);
    let mu_opt = refine_peak(lo, mu_max, per_pulse);
    Some(YieldRegion {
        channel_parameter,
        mu_min,
        mu_max,
        mu_opt,
        rate_at_opt: net(mu_opt).max(0.0),
    })
}

/// The limiting channel: the smallest η_opt/C where any μ still yields
/// secret bits, with the μ and ε at which the window collapses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelThreshold {
    pub channel_parameter_min: f64,
    pub mu_star: f64,
    pub eps_star: f64,
}

/// Finds the channel-quality threshold below which no pulse strength
/// extracts anything: bisects x on the sign of max_μ net rate, which is
/// strictly increasing in x.
pub fn min_channel_parameter(rx: &ReceiverParams, policy: &SecrecyPolicy) -> ChannelThreshold {
    let d = receiver_factor_d(rx);
    let peak = |x: f64| mu_peak(&|mu| net_rate(mu, x, d, policy));

    let mut lo = 1e-7;
    let mut hi = 1.0;
    debug_assert!(peak(lo).1 <= 0.0 && peak(hi).1 > 0.0);
    // Geometric bisection: the threshold spans orders of magnitude.
    while hi / lo > 1.0 + 1e-9 {
        let mid = (lo * hi).sqrt();
        if peak(mid).1 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let channel_parameter_min = (lo * hi).sqrt();
    let (mu_star, _) = peak(channel_parameter_min);
    let eps_star = (d / (mu_star * channel_parameter_min)).min(0.5);
    ChannelThreshold { channel_parameter_min, mu_star, eps_star }
}

/// Which photon-number attacks the link's operating point rules out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackFlags {
    /// Unambiguous state discrimination is infeasible: ¬(μ²/32 > η_opt).
    pub usd_safe: bool,
    /// Photon-number splitting is infeasible: ¬(μ > 2η_opt).
    pub pns_safe: bool,
}

/// Evaluates the two attack-feasibility inequalities at an operating
/// point. `pns_safe` implies `usd_safe` for all physical inputs:
/// μ ≤ 2η_opt gives μ²/32 ≤ η_opt·μ/16 ≤ η_opt.
pub fn attack_flags(mu: f64, eta_opt: f64) -> AttackFlags {
    AttackFlags { usd_safe: !(mu * mu / 32.0 > eta_opt), pns_safe: !(mu > 2.0 * eta_opt) }
}

/// The channel loss, in dB, at which unambiguous state discrimination
/// becomes feasible for a given μ: −10·log₁₀(μ²/32).
pub fn usd_loss_tolerance_db(mu: f64) -> f64 {
    -10.0 * (mu * mu / 32.0).log10()
}

/// How the two optical efficiencies scale with path length, for
/// extrapolating a calibrated link to other ranges. Pluggable because
/// the geometric term depends on pointing hardware.
pub trait ScalingModel {
    fn eta_trans(&self, base: f64, r0_km: f64, r_km: f64) -> f64;
    fn eta_geo(&self, base: f64, r0_km: f64, r_km: f64) -> f64;
}

/// The default model: atmospheric transmittance decays exponentially
/// (per-kilometre extinction compounds), and the receiver aperture
/// captures an inverse-square fraction of the diffracting beam, capped
/// at 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseSquareFarField;

impl ScalingModel for InverseSquareFarField {
    fn eta_trans(&self, base: f64, r0_km: f64, r_km: f64) -> f64 {
        base.powf(r_km / r0_km)
    }

    fn eta_geo(&self, base: f64, r0_km: f64, r_km: f64) -> f64 {
        (base * (r0_km / r_km).powi(2)).min(1.0)
    }
}

/// Projects channel parameters calibrated at `r0_km` onto a different
/// range. The background C is a receiver-environment property and does
/// not move with range.
pub fn scale_channel(
    base: &ChannelParams,
    r0_km: f64,
    target_km: f64,
    model: &dyn ScalingModel,
) -> Result<ChannelParams> {
    for (name, r) in [("reference range", r0_km), ("target range", target_km)] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {r}")));
        }
    }
    ChannelParams::new(
        model.eta_trans(base.eta_trans, r0_km, target_km),
        model.eta_geo(base.eta_geo, r0_km, target_km),
        base.background_c,
    )
}

/// The longest range at which the scaled channel still clears the
/// yield threshold. Infinite for a noiseless channel (C = 0); zero when
/// even a vanishing range cannot clear it.
pub fn max_range_km(
    base: &ChannelParams,
    r0_km: f64,
    rx: &ReceiverParams,
    policy: &SecrecyPolicy,
    model: &dyn ScalingModel,
) -> Result<f64> {
    if base.background_c == 0.0 {
        return Ok(f64::INFINITY);
    }
    let threshold = min_channel_parameter(rx, policy).channel_parameter_min;
    let x_at = |r: f64| -> Result<f64> { Ok(channel_parameter(&scale_channel(base, r0_km, r, model)?)) };

    let mut lo = 1e-3;
    if x_at(lo)? <= threshold {
        return Ok(0.0);
    }
    let mut hi = r0_km.max(1.0);
    while x_at(hi)? > threshold {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if x_at(mid)? > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One grid point of the secrecy surface: everything the rate analysis
/// knows at (μ, x), normalized so the table applies to any link with
/// those coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub mu: f64,
    pub channel_parameter: f64,
    pub epsilon: f64,
    pub p_sif_to_secret: f64,
    /// μ · (receiver efficiency product) · rate — the small-signal
    /// P_secret per unit of optical channel efficiency.
    pub p_secret_over_eta_opt: f64,
    pub usd_safe: bool,
    pub pns_safe: bool,
}

/// Tabulates the secrecy surface over a (μ, x) grid. The attack flags
/// need an absolute η_opt, which the normalized coordinates lack, so
/// `background_c` converts: η_opt = x·C.
pub fn scaled_secrecy_surface(
    mu_grid: &[f64],
    x_grid: &[f64],
    background_c: f64,
    rx: &ReceiverParams,
    policy: &SecrecyPolicy,
) -> Vec<SurfaceRow> {
    let d = receiver_factor_d(rx);
    let rx_product = rx.eta_rec * rx.eta_fil * rx.eta_bb84 * rx.eta_det;
    let mut rows = Vec::with_capacity(mu_grid.len() * x_grid.len());
    for &mu in mu_grid {
        for &x in x_grid {
            let rate = asymptotic_secret_rate(mu, x, rx, policy);
            let flags = attack_flags(mu, x * background_c);
            rows.push(SurfaceRow {
                mu,
                channel_parameter: x,
                epsilon: (d / (mu * x)).min(0.5),
                p_sif_to_secret: rate,
                p_secret_over_eta_opt: mu * rx_product * rate,
                usd_safe: flags.usd_safe,
                pns_safe: flags.pns_safe,
            });
        }
    }
    rows
}

/// Writes the surface as CSV, one row per grid point.
pub fn write_surface_csv(rows: &[SurfaceRow], out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "mu,eta_opt_over_c,epsilon,p_sif_to_secret,p_secret_over_eta_opt,usd_safe,pns_safe"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mu,
            r.channel_parameter,
            r.epsilon,
            r.p_sif_to_secret,
            r.p_secret_over_eta_opt,
            r.usd_safe,
            r.pns_safe
        )?;
    }
    Ok(())
}
