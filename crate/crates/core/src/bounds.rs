//! Assembly of the theorem bounds and corollary capacities.
//!
//! Common message (Theorem 1): the secrecy capacity is sandwiched between
//! an achievable rate that adapts rate and power to the quantized feedback
//! of the *weakest* receiver, and a converse that conditions the exact
//! gain on its feedback cell; both take a max over reconstruction points
//! and powers inside a min over receivers, so each receiver is optimized
//! independently and the worst one is reported.
//!
//! Independent messages (Theorem 2): same machinery applied to the law of
//! `γ_max` (the best of K i.i.d. receivers), since the achievable scheme
//! serves the receiver with the highest feedback index per block.
//!
//! The perfect-CSI corollaries are the `b → ∞` limits: a continuous power
//! profile on a quantile grid of the relevant gain law.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{max_order_statistic, FadingDistribution, GainLaw};
use crate::opt::{
    csi_profile_value, optimize_powers, optimize_thresholds_and_powers, perfect_csi_power_policy,
    policy_objective, AscentOptions, CsiPowerProfile, OptMode, PowerPolicy,
};
use crate::quantize::{equiprobable_quantizer, Quantizer};
use crate::rates::{expected_secrecy_gain, weighted_upper_gain, QuadratureSettings};
use crate::{Error, Result};

/// Which bound a [`BoundResult`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    CommonLower,
    CommonUpper,
    SumLower,
    SumUpper,
    CommonPerfectCsi,
    SumPerfectCsi,
}

impl BoundKind {
    pub fn is_perfect_csi(&self) -> bool {
        matches!(self, BoundKind::CommonPerfectCsi | BoundKind::SumPerfectCsi)
    }
}

/// How reconstruction points are chosen for quantized bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdMode {
    /// Joint coordinate-ascent optimization over thresholds and powers.
    Optimized,
    /// Thresholds fixed at the equiprobable quantiles; powers optimized.
    Equiprobable,
}

/// Solver configuration shared by all bound operations.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub thresholds: ThresholdMode,
    pub quad: QuadratureSettings,
    pub ascent: AscentOptions,
    /// Quantile-grid size for the perfect-CSI corollaries.
    pub csi_grid: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            thresholds: ThresholdMode::Optimized,
            quad: QuadratureSettings::default(),
            ascent: AscentOptions::default(),
            csi_grid: 512,
        }
    }
}

/// Power side of a bound: quantized per-cell policy or continuous profile.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundPolicy {
    Quantized(PowerPolicy),
    PerfectCsi(CsiPowerProfile),
}

/// Value of one bound with the artifacts that achieved it.
#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    /// Bound value in nats per channel use.
    pub value: f64,
    pub kind: BoundKind,
    /// Absent for perfect-CSI kinds.
    pub quantizer: Option<Quantizer>,
    pub policy: BoundPolicy,
    /// Index of the receiver attaining the min (common-message kinds).
    pub bottleneck_receiver: Option<usize>,
    /// Solver metadata: iterations, convergence gap, per-receiver spread.
    pub diagnostics: BTreeMap<String, f64>,
}

/// One solved quantized bound for a single gain law.
#[derive(Debug, Clone)]
pub struct SolvedQuantized {
    pub bits: u32,
    pub quantizer: Quantizer,
    pub policy: PowerPolicy,
    pub value: f64,
    pub rounds: u64,
    pub final_improvement: f64,
}

fn validate_inputs(bits: u32, avg_power: f64) -> Result<()> {
    if bits == 0 || bits > 8 {
        return Err(Error::Domain(format!("feedback bits must lie in 1..=8, got {bits}")));
    }
    if !(avg_power > 0.0) || !avg_power.is_finite() {
        return Err(Error::Infeasible(format!("average power must be positive, got {avg_power}")));
    }
    Ok(())
}

/// Solve one quantized bound for `law` at each feedback size in `bits`
/// (ascending). With optimized thresholds, each size is warm-started from
/// the refined split of the previous optimum, which makes the returned
/// values nondecreasing in `b` by construction.
pub fn solve_bits_ladder(
    law: &GainLaw,
    dist_e: &FadingDistribution,
    bits: &[u32],
    avg_power: f64,
    mode: OptMode,
    opts: &SolveOptions,
) -> Result<Vec<SolvedQuantized>> {
    if bits.is_empty() {
        return Err(Error::Config("empty feedback-bits list".into()));
    }
    if bits.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("feedback-bits ladder must be strictly increasing".into()));
    }
    let mut out: Vec<SolvedQuantized> = Vec::with_capacity(bits.len());
    for &b in bits {
        validate_inputs(b, avg_power)?;
        let solved = match opts.thresholds {
            ThresholdMode::Equiprobable => {
                let quantizer = equiprobable_quantizer(law, b)?;
                let theta = quantizer.cell_probabilities(law)?;
                let policy = optimize_powers(&quantizer, &theta, dist_e, avg_power, mode, law, &opts.quad)?;
                let value = policy_objective(&quantizer, &theta, &policy, mode, law, dist_e, &opts.quad)?;
                SolvedQuantized { bits: b, quantizer, policy, value, rounds: 0, final_improvement: 0.0 }
            }
            ThresholdMode::Optimized => {
                let mut ascent = opts.ascent.clone();
                if let Some(prev) = out.last() {
                    ascent.warm_starts.push(prev.quantizer.refine_to_bits(law, b)?);
                }
                let joint = optimize_thresholds_and_powers(law, dist_e, b, avg_power, mode, &opts.quad, &ascent)?;
                SolvedQuantized {
                    bits: b,
                    quantizer: joint.quantizer,
                    policy: joint.policy,
                    value: joint.value,
                    rounds: joint.rounds,
                    final_improvement: joint.final_improvement,
                }
            }
        };
        out.push(solved);
    }
    Ok(out)
}

fn quantized_result(kind: BoundKind, solved: SolvedQuantized, bottleneck: Option<usize>) -> BoundResult {
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("iterations".into(), solved.rounds as f64);
    diagnostics.insert("convergence_gap".into(), solved.final_improvement);
    BoundResult {
        value: solved.value,
        kind,
        quantizer: Some(solved.quantizer),
        policy: BoundPolicy::Quantized(solved.policy),
        bottleneck_receiver: bottleneck,
        diagnostics,
    }
}

/// Min over receivers of independently solved per-receiver bounds.
fn min_over_receivers(
    kind: BoundKind,
    dists_main: &[FadingDistribution],
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    mode: OptMode,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    if dists_main.is_empty() {
        return Err(Error::Domain("at least one legitimate receiver required".into()));
    }
    let per_k: Vec<SolvedQuantized> = dists_main
        .par_iter()
        .map(|d| {
            let law = GainLaw::Single(*d);
            Ok(solve_bits_ladder(&law, dist_e, &[bits], avg_power, mode, opts)?.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_k, _) = per_k
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .expect("nonempty");
    let spread = per_k.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max)
        - per_k.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let solved = per_k.into_iter().nth(worst_k).expect("index in range");
    let mut result = quantized_result(kind, solved, Some(worst_k));
    result.diagnostics.insert("receiver_value_spread".into(), spread);
    Ok(result)
}

/// Achievable common-message secrecy rate (min over receivers).
pub fn common_message_lower(
    dists_main: &[FadingDistribution],
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    min_over_receivers(BoundKind::CommonLower, dists_main, dist_e, bits, avg_power, OptMode::LowerBound, opts)
}

/// Converse for the common-message secrecy capacity.
pub fn common_message_upper(
    dists_main: &[FadingDistribution],
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    min_over_receivers(BoundKind::CommonUpper, dists_main, dist_e, bits, avg_power, OptMode::UpperBound, opts)
}

/// Achievable secrecy sum-rate: single-user machinery on the law of γ_max.
pub fn sum_rate_lower(
    dist_main: FadingDistribution,
    receivers: u32,
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    let law = max_order_statistic(dist_main, receivers)?;
    let solved = solve_bits_ladder(&law, dist_e, &[bits], avg_power, OptMode::LowerBound, opts)?.remove(0);
    Ok(quantized_result(BoundKind::SumLower, solved, None))
}

/// Converse for the secrecy sum-rate.
pub fn sum_rate_upper(
    dist_main: FadingDistribution,
    receivers: u32,
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    let law = max_order_statistic(dist_main, receivers)?;
    let solved = solve_bits_ladder(&law, dist_e, &[bits], avg_power, OptMode::UpperBound, opts)?.remove(0);
    Ok(quantized_result(BoundKind::SumUpper, solved, None))
}

fn csi_result(kind: BoundKind, value: f64, profile: CsiPowerProfile, bottleneck: Option<usize>) -> BoundResult {
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("csi_grid".into(), profile.grid.len() as f64);
    diagnostics.insert("multiplier".into(), profile.lagrange_multiplier);
    BoundResult {
        value,
        kind,
        quantizer: None,
        policy: BoundPolicy::PerfectCsi(profile),
        bottleneck_receiver: bottleneck,
        diagnostics,
    }
}

/// Perfect-CSI common-message secrecy capacity (min over receivers).
pub fn perfect_csi_common(
    dists_main: &[FadingDistribution],
    dist_e: &FadingDistribution,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    if dists_main.is_empty() {
        return Err(Error::Domain("at least one legitimate receiver required".into()));
    }
    let per_k: Vec<(f64, CsiPowerProfile)> = dists_main
        .par_iter()
        .map(|d| {
            let law = GainLaw::Single(*d);
            let profile = perfect_csi_power_policy(&law, dist_e, avg_power, opts.csi_grid, &opts.quad)?;
            let value = csi_profile_value(&profile, dist_e, &opts.quad)?;
            Ok((value, profile))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_k, _) = per_k
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.0.total_cmp(&b.0).then(ia.cmp(ib)))
        .expect("nonempty");
    let (value, profile) = per_k.into_iter().nth(worst_k).expect("index in range");
    Ok(csi_result(BoundKind::CommonPerfectCsi, value, profile, Some(worst_k)))
}

/// Perfect-CSI secrecy sum-capacity (law of γ_max).
pub fn perfect_csi_sum(
    dist_main: FadingDistribution,
    receivers: u32,
    dist_e: &FadingDistribution,
    avg_power: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    let law = max_order_statistic(dist_main, receivers)?;
    let profile = perfect_csi_power_policy(&law, dist_e, avg_power, opts.csi_grid, &opts.quad)?;
    let value = csi_profile_value(&profile, dist_e, &opts.quad)?;
    Ok(csi_result(BoundKind::SumPerfectCsi, value, profile, None))
}

// ---------------------------------------------------------------------------
// Fixed-point evaluation (no optimization) — used by validation and the
// simulator cross-checks.
// ---------------------------------------------------------------------------

/// Lower-bound objective at explicit `(quantizer, policy)`:
/// `Σ_{q≥1} Θ_q · E_gain(τ_q, P_q)` under `dist_m`.
pub fn lower_bound_value(
    quant: &Quantizer,
    policy: &PowerPolicy,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let theta = quant.cell_probabilities(dist_m)?;
    policy_objective(quant, &theta, policy, OptMode::LowerBound, dist_m, dist_e, qs)
}

/// Upper-bound objective at explicit `(quantizer, policy)`:
/// `Σ_{q≥0} Θ_q · E[{·}^+ | cell q]` under `dist_m`.
pub fn upper_bound_value(
    quant: &Quantizer,
    policy: &PowerPolicy,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let mut total = 0.0;
    for q in 0..=quant.cell_count() {
        let p = policy.powers[q];
        if p <= 0.0 {
            continue;
        }
        let (lo, hi) = quant.cell_edges(q);
        total += weighted_upper_gain(lo, hi, p, dist_m, dist_e, qs)?;
    }
    Ok(total)
}

/// Distribution of the *minimum* feedback index over independent receivers
/// sharing one quantizer (the index the common-message scheme transmits at).
pub fn min_index_probabilities(quant: &Quantizer, dists: &[FadingDistribution]) -> Result<Vec<f64>> {
    index_extreme_probabilities(quant, dists, true)
}

/// Distribution of the *maximum* feedback index over independent receivers
/// sharing one quantizer (the index the sum-rate scheme transmits at).
pub fn max_index_probabilities(quant: &Quantizer, dists: &[FadingDistribution]) -> Result<Vec<f64>> {
    index_extreme_probabilities(quant, dists, false)
}

fn index_extreme_probabilities(
    quant: &Quantizer,
    dists: &[FadingDistribution],
    minimum: bool,
) -> Result<Vec<f64>> {
    if dists.is_empty() {
        return Err(Error::Domain("at least one receiver required".into()));
    }
    let cells = quant.cell_count() + 1;
    let per_k: Vec<Vec<f64>> = dists
        .iter()
        .map(|d| quant.cell_probabilities(&GainLaw::Single(*d)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(cells);
    if minimum {
        // Pr[min >= q] = prod_k Pr[q_k >= q]
        let joint_tail = |q: usize| -> f64 {
            per_k.iter().map(|t| t[q..].iter().sum::<f64>()).product()
        };
        for q in 0..cells {
            let hi = if q + 1 < cells { joint_tail(q + 1) } else { 0.0 };
            out.push((joint_tail(q) - hi).max(0.0));
        }
    } else {
        // Pr[max <= q] = prod_k Pr[q_k <= q]
        let joint_head = |q: usize| -> f64 {
            per_k.iter().map(|t| t[..=q].iter().sum::<f64>()).product()
        };
        let mut prev = 0.0;
        for q in 0..cells {
            let h = joint_head(q);
            out.push((h - prev).max(0.0));
            prev = h;
        }
    }
    Ok(out)
}

/// Ergodic rate of the common-message protocol at explicit `(quantizer,
/// policy)`: `Σ_q Pr[q_min = q] · E_gain(τ_q, P_q)`. This is the quantity
/// `simulate_common` estimates; it coincides with the per-receiver lower
/// bound only at K = 1.
pub fn analytic_common_rate(
    quant: &Quantizer,
    policy: &PowerPolicy,
    dists_main: &[FadingDistribution],
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let weights = min_index_probabilities(quant, dists_main)?;
    weighted_rate(quant, policy, &weights, dist_e, qs)
}

/// Ergodic rate of the sum-rate protocol at explicit `(quantizer, policy)`
/// for i.i.d. receivers: `Σ_q Pr[q_max = q] · E_gain(τ_q, P_q)`, which is
/// exactly the Theorem-2 lower objective under the γ_max law.
pub fn analytic_sum_rate(
    quant: &Quantizer,
    policy: &PowerPolicy,
    dist_main: FadingDistribution,
    receivers: u32,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let law = max_order_statistic(dist_main, receivers)?;
    lower_bound_value(quant, policy, &law, dist_e, qs)
}

fn weighted_rate(
    quant: &Quantizer,
    policy: &PowerPolicy,
    weights: &[f64],
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let mut total = 0.0;
    for q in 1..=quant.cell_count() {
        if weights[q] > 0.0 && policy.powers[q] > 0.0 {
            total += weights[q] * expected_secrecy_gain(quant.threshold(q), policy.powers[q], dist_e, qs)?;
        }
    }
    Ok(total)
}
