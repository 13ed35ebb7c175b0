//! Power allocation and reconstruction-point optimization under the
//! average power constraint.
//!
//! Both bound objectives decompose per feedback cell as
//! `Σ_q Θ_q g_q(P_q)` with `Σ_q Θ_q P_q ≤ P_avg`, so the power problem is
//! solved by Lagrangian decomposition: for a multiplier `λ` each cell
//! maximizes `g_q(P) − λP` on its own, and `λ` is bisected until the
//! budget binds (or `λ = 0` if it never does). The per-cell maximization
//! is a coarse log-spaced scan followed by golden-section refinement, so
//! it does not rely on concavity of `g_q`.
//!
//! Threshold optimization is a coordinate ascent that alternates power
//! re-optimization with per-threshold line searches. A threshold move
//! shifts probability mass between cells and therefore changes the power
//! budget consumption, so the line search scores candidates on the local
//! Lagrangian — cell terms `Θ·(g − λP)` at the current multiplier — rather
//! than on the raw objective; scoring the raw objective with powers held
//! fixed ignores the budget and oscillates instead of ascending. The best
//! iterate over all rounds and starts is returned, which also guarantees
//! the result is never worse than its initializer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{FadingDistribution, GainLaw};
use crate::quantize::{equiprobable_quantizer, Quantizer};
use crate::rates::{expected_secrecy_gain, weighted_upper_gain, QuadratureSettings};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Which bound's per-cell kernel drives the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptMode {
    /// Achievable rate: cell `q ≥ 1` earns `E_gain(τ_q, P_q)`; cell 0 is
    /// silent (`P_0 = 0`).
    LowerBound,
    /// Converse: every cell `q ≥ 0` earns the conditional kernel
    /// `E[{·}^+ | τ_q ≤ γ < τ_{q+1}]` and may carry power.
    UpperBound,
}

/// Per-feedback-index transmit powers. `powers[0]` is the cell-0 power,
/// forced to zero in lower-bound mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    pub powers: Vec<f64>,
    pub avg_power_budget: f64,
    /// Lagrange multiplier the policy was optimized at (0 when the budget
    /// does not bind).
    pub multiplier: f64,
}

impl PowerPolicy {
    /// Budget consumption `Σ_q Θ_q P_q` under the given cell masses.
    pub fn average_power(&self, theta: &[f64]) -> f64 {
        self.powers.iter().zip(theta).map(|(p, t)| p * t).sum()
    }
}

/// Continuous perfect-CSI power profile on a quantile grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiPowerProfile {
    /// Increasing gains: quantiles of the main law at `i/(N+1)`, `i = 1..N`.
    pub grid: Vec<f64>,
    pub powers: Vec<f64>,
    pub lagrange_multiplier: f64,
    pub avg_power_budget: f64,
}

/// Joint optimization result.
#[derive(Debug, Clone)]
pub struct JointOptimum {
    pub quantizer: Quantizer,
    pub policy: PowerPolicy,
    /// Certified lower estimate of the max over thresholds and powers.
    pub value: f64,
    /// Ascent rounds consumed across all starts.
    pub rounds: u64,
    /// Objective improvement seen in the best start's final round.
    pub final_improvement: f64,
}

/// Controls for the threshold coordinate ascent.
#[derive(Debug, Clone)]
pub struct AscentOptions {
    pub max_rounds: usize,
    pub improve_tol: f64,
    /// Number of multistarts (the equiprobable quantizer plus perturbed
    /// variants), capped at 5.
    pub multistarts: usize,
    /// Seed for the perturbed starts; fixed by default so results are
    /// reproducible.
    pub seed: u64,
    /// Additional caller-provided starting quantizers (e.g. a refined
    /// split of a coarser optimum, which makes the optimized value
    /// monotone in `b` by construction).
    pub warm_starts: Vec<Quantizer>,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            max_rounds: 100,
            improve_tol: 1e-7,
            multistarts: 5,
            seed: 0x5EC_FB,
            warm_starts: Vec::new(),
        }
    }
}

/// Cells with less mass than this are treated as inactive.
const THETA_FLOOR: f64 = 1e-15;
/// Coarse power scan: 64 log-spaced points spanning `[1e-4, 1e3]·P_avg`.
const POWER_GRID: usize = 64;
const GOLDEN_ITERS: usize = 56;

// ---------------------------------------------------------------------------
// Lagrangian power solver over an arbitrary weighted cell set
// ---------------------------------------------------------------------------

struct PowerSolution {
    powers: Vec<f64>,
    multiplier: f64,
}

/// Maximize `Σ w_q g(q, P_q)` s.t. `Σ w_q P_q ≤ budget`, `P_q ≥ 0`.
///
/// `kernel(q, p)` must be deterministic; inactive cells (weight below the
/// floor) receive zero power. `multiplier_hint` warm-starts the refined
/// bisection bracket.
fn solve_power_allocation<G>(
    weights: &[f64],
    kernel: G,
    budget: f64,
    multiplier_hint: Option<f64>,
) -> Result<PowerSolution>
where
    G: Fn(usize, f64) -> Result<f64> + Sync,
{
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::Infeasible(format!("average power budget must be positive, got {budget}")));
    }
    let n = weights.len();
    let active: Vec<usize> = (0..n).filter(|&q| weights[q] > THETA_FLOOR).collect();
    if active.is_empty() {
        return Ok(PowerSolution { powers: vec![0.0; n], multiplier: 0.0 });
    }

    let mut grid = Vec::with_capacity(POWER_GRID + 1);
    grid.push(0.0);
    let (lo, hi) = (1e-4 * budget, 1e3 * budget);
    let step = (hi / lo).powf(1.0 / (POWER_GRID - 1) as f64);
    let mut p = lo;
    for _ in 0..POWER_GRID {
        grid.push(p);
        p *= step;
    }

    // Coarse tableau; cells are independent, so evaluate them in parallel
    // and keep the reduction order fixed.
    let tableau: Vec<Vec<f64>> = active
        .par_iter()
        .map(|&q| grid.iter().map(|&p| kernel(q, p)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;

    let grid_pick = |lambda: f64| -> Vec<usize> {
        tableau
            .iter()
            .map(|g| {
                let mut best = 0usize;
                let mut best_v = 0.0_f64; // index 0 is P=0 with g(0)=0
                for (i, (&gv, &pv)) in g.iter().zip(&grid).enumerate() {
                    let v = gv - lambda * pv;
                    if v > best_v {
                        best_v = v;
                        best = i;
                    }
                }
                best
            })
            .collect()
    };
    let grid_total = |lambda: f64| -> f64 {
        grid_pick(lambda)
            .iter()
            .zip(&active)
            .map(|(&i, &q)| weights[q] * grid[i])
            .sum()
    };

    // Refined per-cell maximization of g - lambda p near the grid argmax.
    let refine = |lambda: f64| -> Result<Vec<f64>> {
        active
            .par_iter()
            .zip(&tableau)
            .map(|(&q, g)| {
                let mut best = 0usize;
                let mut best_v = 0.0_f64;
                for (i, (&gv, &pv)) in g.iter().zip(&grid).enumerate() {
                    let v = gv - lambda * pv;
                    if v > best_v {
                        best_v = v;
                        best = i;
                    }
                }
                let a = if best == 0 { 0.0 } else { grid[best - 1] };
                let b = if best + 1 < grid.len() { grid[best + 1] } else { grid[best] };
                if b <= a {
                    return Ok(grid[best]);
                }
                let score = |p: f64| -> Result<f64> { Ok(kernel(q, p)? - lambda * p) };
                let p_star = golden_max(a, b, GOLDEN_ITERS, score)?;
                Ok(if kernel(q, p_star)? - lambda * p_star > 0.0 { p_star } else { 0.0 })
            })
            .collect()
    };
    let spent = |powers: &[f64]| -> f64 {
        powers.iter().zip(&active).map(|(&p, &q)| weights[q] * p).sum()
    };

    // Phase 0: does the budget bind at all?
    if grid_total(0.0) <= budget {
        let refined = refine(0.0)?;
        if spent(&refined) <= budget {
            return Ok(scatter(n, &active, refined, 0.0));
        }
    }

    // Phase 1: bracket the multiplier on the coarse tableau. The upper end
    // starts at the steepest marginal gain at P = 0 and doubles until the
    // coarse policy is feasible.
    let h = grid[1];
    let mut lam_hi = tableau
        .iter()
        .map(|g| g[1] / h)
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut doubles = 0;
    while grid_total(lam_hi) > budget {
        lam_hi *= 2.0;
        doubles += 1;
        if doubles > 200 {
            return Err(Error::Numeric("multiplier bracket exhausted".into()));
        }
    }
    let mut lam_lo = 0.0;
    for _ in 0..64 {
        let mid = 0.5 * (lam_lo + lam_hi);
        if grid_total(mid) > budget {
            lam_lo = mid;
        } else {
            lam_hi = mid;
        }
    }

    // Phase 2: bisect with refined policies so the final powers are exact
    // argmaxes of g - lambda p. Warm brackets cut most iterations.
    let (mut lo_l, mut hi_l) = match multiplier_hint {
        Some(hint) if hint > 0.0 => (hint * 0.6, hint * 1.6),
        _ => (lam_lo * 0.8, lam_hi * 1.25),
    };
    if hi_l <= 0.0 {
        hi_l = 1e-12;
    }
    let mut guard = 0;
    let mut hi_powers = loop {
        let pw = refine(hi_l)?;
        if spent(&pw) <= budget {
            break pw;
        }
        hi_l *= 1.5;
        guard += 1;
        if guard > 120 {
            return Err(Error::Numeric("multiplier bracket exhausted (refined, upper)".into()));
        }
    };
    loop {
        if lo_l <= f64::MIN_POSITIVE {
            lo_l = 0.0;
            break;
        }
        if spent(&refine(lo_l)?) > budget {
            break;
        }
        lo_l *= 0.6;
        guard += 1;
        if guard > 240 {
            lo_l = 0.0;
            break;
        }
    }
    if lo_l == 0.0 {
        let pw = refine(0.0)?;
        if spent(&pw) <= budget {
            return Ok(scatter(n, &active, pw, 0.0));
        }
    }
    for _ in 0..42 {
        let mid = 0.5 * (lo_l + hi_l);
        let pw = refine(mid)?;
        let used = spent(&pw);
        if used > budget {
            lo_l = mid;
        } else {
            hi_l = mid;
            hi_powers = pw;
            if budget - used <= 1e-10 * budget.max(1.0) {
                break;
            }
        }
    }
    Ok(scatter(n, &active, hi_powers, hi_l))
}

fn scatter(n: usize, active: &[usize], compact: Vec<f64>, multiplier: f64) -> PowerSolution {
    let mut powers = vec![0.0; n];
    for (&q, p) in active.iter().zip(compact) {
        powers[q] = p;
    }
    PowerSolution { powers, multiplier }
}

/// Golden-section maximization on [a, b]; one kernel call per iteration.
fn golden_max<S>(a: f64, b: f64, iters: usize, score: S) -> Result<f64>
where
    S: Fn(f64) -> Result<f64>,
{
    const PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut c = hi - PHI * (hi - lo);
    let mut d = lo + PHI * (hi - lo);
    let mut fc = score(c)?;
    let mut fd = score(d)?;
    for _ in 0..iters {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - PHI * (hi - lo);
            fc = score(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + PHI * (hi - lo);
            fd = score(d)?;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Cell kernels
// ---------------------------------------------------------------------------

/// Normalized per-cell kernel `g_q(P)` for the given mode.
fn cell_kernel(
    quant: &Quantizer,
    theta: &[f64],
    mode: OptMode,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
    q: usize,
    power: f64,
) -> Result<f64> {
    match mode {
        OptMode::LowerBound => expected_secrecy_gain(quant.threshold(q), power, dist_e, qs),
        OptMode::UpperBound => {
            let (lo, hi) = quant.cell_edges(q);
            Ok(weighted_upper_gain(lo, hi, power, dist_m, dist_e, qs)? / theta[q])
        }
    }
}

fn active_range(mode: OptMode) -> usize {
    match mode {
        OptMode::LowerBound => 1,
        OptMode::UpperBound => 0,
    }
}

/// Objective `Σ_q Θ_q g_q(P_q)` for an explicit policy.
pub(crate) fn policy_objective(
    quant: &Quantizer,
    theta: &[f64],
    policy: &PowerPolicy,
    mode: OptMode,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let first = active_range(mode);
    let mut total = 0.0;
    for q in first..theta.len() {
        if theta[q] <= THETA_FLOOR || policy.powers[q] <= 0.0 {
            continue;
        }
        total += theta[q] * cell_kernel(quant, theta, mode, dist_m, dist_e, qs, q, policy.powers[q])?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Optimize the per-cell powers at fixed thresholds.
///
/// `theta` must be the cell probabilities of `quant` under the intended
/// main law (`dist_m` is only consulted by the upper-bound kernel).
pub fn optimize_powers(
    quant: &Quantizer,
    theta: &[f64],
    dist_e: &FadingDistribution,
    avg_power: f64,
    mode: OptMode,
    dist_m: &GainLaw,
    qs: &QuadratureSettings,
) -> Result<PowerPolicy> {
    Ok(optimize_powers_hinted(quant, theta, dist_e, avg_power, mode, dist_m, qs, None)?.0)
}

#[allow(clippy::too_many_arguments)]
fn optimize_powers_hinted(
    quant: &Quantizer,
    theta: &[f64],
    dist_e: &FadingDistribution,
    avg_power: f64,
    mode: OptMode,
    dist_m: &GainLaw,
    qs: &QuadratureSettings,
    multiplier_hint: Option<f64>,
) -> Result<(PowerPolicy, f64)> {
    if theta.len() != quant.cell_count() + 1 {
        return Err(Error::Config(format!(
            "theta has {} entries for {} cells",
            theta.len(),
            quant.cell_count() + 1
        )));
    }
    let first = active_range(mode);
    let mut weights = theta.to_vec();
    for w in weights.iter_mut().take(first) {
        *w = 0.0; // silence cell 0 in lower-bound mode
    }
    let kernel = |q: usize, p: f64| cell_kernel(quant, theta, mode, dist_m, dist_e, qs, q, p);
    let sol = solve_power_allocation(&weights, kernel, avg_power, multiplier_hint)?;
    let policy = PowerPolicy {
        powers: sol.powers,
        avg_power_budget: avg_power,
        multiplier: sol.multiplier,
    };
    let value = policy_objective(quant, theta, &policy, mode, dist_m, dist_e, qs)?;
    Ok((policy, value))
}

/// Joint maximization over reconstruction points and powers.
///
/// Returns the best iterate over a deterministic multistart coordinate
/// ascent; the value is a certified lower estimate of the true maximum.
pub fn optimize_thresholds_and_powers(
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    bits: u32,
    avg_power: f64,
    mode: OptMode,
    qs: &QuadratureSettings,
    opts: &AscentOptions,
) -> Result<JointOptimum> {
    if bits == 0 || bits > 8 {
        return Err(Error::Domain(format!("bits must lie in 1..=8, got {bits}")));
    }
    let mut starts = multistart_quantizers(dist_m, bits, opts)?;
    starts.extend(opts.warm_starts.iter().cloned());

    let runs: Vec<Result<AscentRun>> = starts
        .par_iter()
        .map(|start| ascend(start.clone(), dist_m, dist_e, avg_power, mode, qs, opts))
        .collect();

    let mut best: Option<AscentRun> = None;
    let mut total_rounds = 0_u64;
    for run in runs {
        let run = run?;
        total_rounds += run.rounds;
        let better = match &best {
            None => true,
            Some(b) => run.value > b.value,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(JointOptimum {
        quantizer: best.quantizer,
        policy: best.policy,
        value: best.value,
        rounds: total_rounds,
        final_improvement: best.final_improvement,
    })
}

/// Deterministic multistart set: equiprobable, two quantile warps, and two
/// random cell-mass splits drawn from the fixed seed.
fn multistart_quantizers(dist_m: &GainLaw, bits: u32, opts: &AscentOptions) -> Result<Vec<Quantizer>> {
    let q_count = 1_usize << bits;
    let mut starts = vec![equiprobable_quantizer(dist_m, bits)?];
    let from_levels = |levels: &[f64]| -> Result<Quantizer> {
        let ts = levels
            .iter()
            .map(|&p| dist_m.quantile(p))
            .collect::<Result<Vec<f64>>>()?;
        Quantizer::from_thresholds(ts)
    };
    for (i, alpha) in [0.5_f64, 2.0].into_iter().enumerate() {
        if starts.len() >= opts.multistarts.max(1) {
            break;
        }
        let levels: Vec<f64> = (1..=q_count)
            .map(|q| (q as f64 / (q_count + 1) as f64).powf(alpha))
            .collect();
        let _ = i;
        starts.push(from_levels(&levels)?);
    }
    for variant in 0..2_u64 {
        if starts.len() >= opts.multistarts.max(1) {
            break;
        }
        let mut stream = RngStream::substream(opts.seed, variant, 0);
        let mut masses = Vec::with_capacity(q_count + 1);
        let mut total = 0.0;
        for _ in 0..=q_count {
            let w = -(-stream.next_f64()).ln_1p(); // Exp(1) mass per cell
            masses.push(w);
            total += w;
        }
        let mut levels = Vec::with_capacity(q_count);
        let mut acc = 0.0;
        for &w in masses.iter().take(q_count) {
            acc += w;
            levels.push((acc / total).clamp(1e-9, 1.0 - 1e-9));
        }
        starts.push(from_levels(&levels)?);
    }
    starts.truncate(opts.multistarts.max(1));
    Ok(starts)
}

struct AscentRun {
    quantizer: Quantizer,
    policy: PowerPolicy,
    value: f64,
    rounds: u64,
    final_improvement: f64,
}

fn ascend(
    start: Quantizer,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    avg_power: f64,
    mode: OptMode,
    qs: &QuadratureSettings,
    opts: &AscentOptions,
) -> Result<AscentRun> {
    let mut quant = start;
    let mut theta = quant.cell_probabilities(dist_m)?;
    let (mut policy, mut value) =
        optimize_powers_hinted(&quant, &theta, dist_e, avg_power, mode, dist_m, qs, None)?;
    let mut best = AscentRun {
        quantizer: quant.clone(),
        policy: policy.clone(),
        value,
        rounds: 0,
        final_improvement: value,
    };

    let scan_top = dist_m.quantile_unchecked(1.0 - 1e-9);
    for round in 0..opts.max_rounds {
        let prev_value = value;
        let mut thresholds = quant.thresholds().to_vec();
        let lambda = policy.multiplier;
        for i in 0..thresholds.len() {
            let lo_edge = if i == 0 { 0.0 } else { thresholds[i - 1] };
            let hi_edge = if i + 1 < thresholds.len() { thresholds[i + 1] } else { f64::INFINITY };
            let scan_hi = if hi_edge.is_finite() { hi_edge } else { scan_top.max(thresholds[i] * 2.0) };
            let p_below = policy.powers[i]; // cell i: [lo_edge, t_i)
            let p_above = policy.powers[i + 1]; // cell i+1: [t_i, hi_edge)
            let gain_below = if i == 0 && mode == OptMode::LowerBound {
                0.0
            } else {
                match mode {
                    OptMode::LowerBound => expected_secrecy_gain(lo_edge, p_below, dist_e, qs)?,
                    OptMode::UpperBound => 0.0, // recomputed per candidate
                }
            };
            let local = |x: f64| -> Result<f64> {
                let f_x = dist_m.cdf_unchecked(x);
                let f_lo = dist_m.cdf_unchecked(lo_edge);
                let f_hi = if hi_edge.is_finite() { dist_m.cdf_unchecked(hi_edge) } else { 1.0 };
                match mode {
                    OptMode::LowerBound => {
                        let above =
                            (f_hi - f_x) * (expected_secrecy_gain(x, p_above, dist_e, qs)? - lambda * p_above);
                        let below = if i == 0 {
                            0.0
                        } else {
                            (f_x - f_lo) * (gain_below - lambda * p_below)
                        };
                        Ok(above + below)
                    }
                    OptMode::UpperBound => {
                        let above = if p_above > 0.0 && f_hi - f_x > THETA_FLOOR {
                            weighted_upper_gain(x, hi_edge, p_above, dist_m, dist_e, qs)?
                                - lambda * p_above * (f_hi - f_x)
                        } else {
                            0.0
                        };
                        let below = if p_below > 0.0 && f_x - f_lo > THETA_FLOOR {
                            weighted_upper_gain(lo_edge, x, p_below, dist_m, dist_e, qs)?
                                - lambda * p_below * (f_x - f_lo)
                        } else {
                            0.0
                        };
                        Ok(above + below)
                    }
                }
            };
            // Coarse scan uniform in probability, then golden refinement.
            let f_lo = dist_m.cdf_unchecked(lo_edge);
            let f_hi = dist_m.cdf_unchecked(scan_hi);
            if f_hi - f_lo < 4.0 * THETA_FLOOR {
                continue;
            }
            const SCAN: usize = 24;
            let mut best_j = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            let mut xs = [0.0_f64; SCAN];
            for (j, x) in xs.iter_mut().enumerate() {
                let p = f_lo + (f_hi - f_lo) * (j + 1) as f64 / (SCAN + 1) as f64;
                *x = dist_m.quantile_unchecked(p);
                let v = local(*x)?;
                if v > best_v {
                    best_v = v;
                    best_j = j;
                }
            }
            let a = if best_j == 0 { lo_edge.max(xs[0] * 0.5) } else { xs[best_j - 1] };
            let b = if best_j + 1 < SCAN { xs[best_j + 1] } else { scan_hi };
            let cand = if b > a { golden_max(a, b, 40, &local)? } else { xs[best_j] };
            let cand = if local(cand)? >= best_v { cand } else { xs[best_j] };
            if local(cand)? > local(thresholds[i])? && cand > lo_edge && (hi_edge.is_infinite() || cand < hi_edge)
            {
                thresholds[i] = cand;
            }
        }
        quant = Quantizer::from_thresholds(thresholds)?;
        theta = quant.cell_probabilities(dist_m)?;
        let hint = if policy.multiplier > 0.0 { Some(policy.multiplier) } else { None };
        let out = optimize_powers_hinted(&quant, &theta, dist_e, avg_power, mode, dist_m, qs, hint)?;
        policy = out.0;
        value = out.1;
        if value > best.value {
            best = AscentRun {
                quantizer: quant.clone(),
                policy: policy.clone(),
                value,
                rounds: round as u64 + 1,
                final_improvement: value - prev_value,
            };
        }
        best.rounds = round as u64 + 1;
        if value - prev_value < opts.improve_tol {
            best.final_improvement = value - prev_value;
            break;
        }
    }
    Ok(best)
}

/// Perfect-CSI power policy: waterfilling-like allocation of the secrecy
/// kernel over a quantile grid of the main law.
pub fn perfect_csi_power_policy(
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    avg_power: f64,
    grid_size: usize,
    qs: &QuadratureSettings,
) -> Result<CsiPowerProfile> {
    if grid_size < 256 {
        return Err(Error::Domain(format!("grid_size must be >= 256, got {grid_size}")));
    }
    let grid: Vec<f64> = (1..=grid_size)
        .map(|i| dist_m.quantile(i as f64 / (grid_size + 1) as f64))
        .collect::<Result<Vec<f64>>>()?;
    let weights = vec![1.0 / grid_size as f64; grid_size];
    let kernel = |i: usize, p: f64| expected_secrecy_gain(grid[i], p, dist_e, qs);
    let sol = solve_power_allocation(&weights, kernel, avg_power, None)?;
    Ok(CsiPowerProfile {
        grid,
        powers: sol.powers,
        lagrange_multiplier: sol.multiplier,
        avg_power_budget: avg_power,
    })
}

/// Corollary capacity value for a perfect-CSI profile: the quantile-grid
/// average of the secrecy kernel at the profile's powers.
pub fn csi_profile_value(
    profile: &CsiPowerProfile,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let mut total = 0.0;
    for (&g, &p) in profile.grid.iter().zip(&profile.powers) {
        if p > 0.0 {
            total += expected_secrecy_gain(g, p, dist_e, qs)?;
        }
    }
    Ok(total / profile.grid.len() as f64)
}

// ---------------------------------------------------------------------------
// KKT certification
// ---------------------------------------------------------------------------

/// Per-cell stationarity check of a returned policy.
#[derive(Debug, Clone, Serialize)]
pub struct KktCell {
    pub cell: usize,
    pub power: f64,
    /// Numerical `dg_q/dP` at the returned power.
    pub derivative: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub multiplier: f64,
    pub cells: Vec<KktCell>,
    pub pass: bool,
}

/// Verify the complementary-slackness conditions of a power policy: active
/// cells must have `dg/dP = λ` (relative 1e-3 plus 1e-6 absolute), silent
/// cells `dg/dP(0⁺) ≤ λ + 1e-6`.
pub fn kkt_report(
    policy: &PowerPolicy,
    quant: &Quantizer,
    theta: &[f64],
    dist_e: &FadingDistribution,
    mode: OptMode,
    dist_m: &GainLaw,
    qs: &QuadratureSettings,
) -> Result<KktReport> {
    let tight = QuadratureSettings { rel_tol: qs.rel_tol.min(1e-10), ..*qs };
    let lambda = policy.multiplier;
    let first = active_range(mode);
    let budget = policy.avg_power_budget;
    let mut cells = Vec::new();
    let mut pass = true;
    for q in first..theta.len() {
        if theta[q] <= THETA_FLOOR {
            continue;
        }
        let g = |p: f64| cell_kernel(quant, theta, mode, dist_m, dist_e, &tight, q, p);
        let p_q = policy.powers[q];
        let (derivative, ok) = if p_q > 0.0 {
            let h = (1e-3 * p_q).max(1e-5 * budget);
            let d = (g(p_q + h)? - g((p_q - h).max(0.0))?) / (p_q + h - (p_q - h).max(0.0));
            (d, (d - lambda).abs() <= 1e-3 * lambda + 1e-6)
        } else {
            let h = 1e-5 * budget;
            let d = g(h)? / h;
            (d, d <= lambda + 1e-6)
        };
        pass &= ok;
        cells.push(KktCell { cell: q, power: p_q, derivative, ok });
    }
    Ok(KktReport { multiplier: lambda, cells, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::equiprobable_quantizer;
    use approx::assert_relative_eq;

    fn exp1() -> FadingDistribution {
        FadingDistribution::exponential_mean(1.0).unwrap()
    }

    fn law() -> GainLaw {
        GainLaw::Single(exp1())
    }

    #[test]
    fn vanishing_budget_gives_zero_policy() {
        let qs = QuadratureSettings::default();
        let quant = equiprobable_quantizer(&law(), 2).unwrap();
        let theta = quant.cell_probabilities(&law()).unwrap();
        let policy =
            optimize_powers(&quant, &theta, &exp1(), 1e-9, OptMode::LowerBound, &law(), &qs).unwrap();
        assert!(policy.powers.iter().all(|&p| p <= 1e-5));
        let value = policy_objective(&quant, &theta, &policy, OptMode::LowerBound, &law(), &exp1(), &qs)
            .unwrap();
        assert!(value < 1e-6);
        assert!(optimize_powers(&quant, &theta, &exp1(), 0.0, OptMode::LowerBound, &law(), &qs).is_err());
    }

    #[test]
    fn single_cell_takes_whole_budget() {
        // Q=1: one threshold, all transmit power on the top cell.
        let qs = QuadratureSettings::default();
        let quant = Quantizer::from_thresholds(vec![1.0]).unwrap();
        let theta = quant.cell_probabilities(&law()).unwrap();
        let p_avg = 10.0;
        let policy =
            optimize_powers(&quant, &theta, &exp1(), p_avg, OptMode::LowerBound, &law(), &qs).unwrap();
        assert_eq!(policy.powers[0], 0.0);
        assert_relative_eq!(policy.powers[1], p_avg / theta[1], max_relative = 1e-6);
        assert!(policy.average_power(&theta) <= p_avg + 1e-9);
    }

    #[test]
    fn budget_is_respected_and_multiplier_positive() {
        let qs = QuadratureSettings::default();
        let quant = equiprobable_quantizer(&law(), 3).unwrap();
        let theta = quant.cell_probabilities(&law()).unwrap();
        for mode in [OptMode::LowerBound, OptMode::UpperBound] {
            let policy = optimize_powers(&quant, &theta, &exp1(), 5.0, mode, &law(), &qs).unwrap();
            assert!(policy.average_power(&theta) <= 5.0 + 1e-9);
            assert!(policy.multiplier > 0.0);
            if mode == OptMode::LowerBound {
                assert_eq!(policy.powers[0], 0.0);
            }
        }
    }

    #[test]
    fn ascent_never_loses_to_equiprobable_start() {
        let qs = QuadratureSettings::default();
        let quant = equiprobable_quantizer(&law(), 1).unwrap();
        let theta = quant.cell_probabilities(&law()).unwrap();
        let (_, equi_value) = optimize_powers_hinted(
            &quant, &theta, &exp1(), 10.0, OptMode::LowerBound, &law(), &qs, None,
        )
        .unwrap();
        let joint = optimize_thresholds_and_powers(
            &law(), &exp1(), 1, 10.0, OptMode::LowerBound, &qs, &AscentOptions::default(),
        )
        .unwrap();
        assert!(joint.value >= equi_value - 1e-12, "{} < {}", joint.value, equi_value);
    }

    #[test]
    fn joint_optimizer_is_deterministic() {
        let qs = QuadratureSettings::default();
        let opts = AscentOptions::default();
        let a = optimize_thresholds_and_powers(&law(), &exp1(), 1, 3.0, OptMode::LowerBound, &qs, &opts)
            .unwrap();
        let b = optimize_thresholds_and_powers(&law(), &exp1(), 1, 3.0, OptMode::LowerBound, &qs, &opts)
            .unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.quantizer, b.quantizer);
        assert_eq!(a.policy.powers, b.policy.powers);
    }

    #[test]
    fn rejects_out_of_range_bits() {
        let qs = QuadratureSettings::default();
        let opts = AscentOptions::default();
        assert!(optimize_thresholds_and_powers(&law(), &exp1(), 0, 1.0, OptMode::LowerBound, &qs, &opts)
            .is_err());
        assert!(optimize_thresholds_and_powers(&law(), &exp1(), 9, 1.0, OptMode::LowerBound, &qs, &opts)
            .is_err());
    }

    #[test]
    fn perfect_csi_profile_respects_budget_and_grid_floor() {
        let qs = QuadratureSettings::default();
        assert!(perfect_csi_power_policy(&law(), &exp1(), 1.0, 128, &qs).is_err());
        let profile = perfect_csi_power_policy(&law(), &exp1(), 1e-9, 256, &qs).unwrap();
        assert!(profile.powers.iter().all(|&p| p <= 1e-5));
        let profile = perfect_csi_power_policy(&law(), &exp1(), 2.0, 256, &qs).unwrap();
        let mean_p = profile.powers.iter().sum::<f64>() / profile.powers.len() as f64;
        assert!(mean_p <= 2.0 + 1e-9);
        assert_relative_eq!(mean_p, 2.0, max_relative = 1e-4);
    }

    #[test]
    fn perfect_csi_policy_monotone_in_gain() {
        let qs = QuadratureSettings::default();
        let profile = perfect_csi_power_policy(&law(), &exp1(), 10.0, 256, &qs).unwrap();
        for w in profile.powers.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "policy not monotone: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn kkt_holds_for_optimized_powers() {
        let qs = QuadratureSettings::default();
        let quant = equiprobable_quantizer(&law(), 2).unwrap();
        let theta = quant.cell_probabilities(&law()).unwrap();
        let policy =
            optimize_powers(&quant, &theta, &exp1(), 10.0, OptMode::LowerBound, &law(), &qs).unwrap();
        let report =
            kkt_report(&policy, &quant, &theta, &exp1(), OptMode::LowerBound, &law(), &qs).unwrap();
        assert!(report.pass, "KKT failed: {:?}", report.cells);
    }
}
