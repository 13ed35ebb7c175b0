//! The positive-part log-ratio secrecy expectations inside every bound.
//!
//! Everything is in nats. The clamp `{ln((1+γ_m P)/(1+γ_e P))}^+` makes the
//! integrands C⁰ but not C¹ at `γ_e = γ_m`; both expectations below split
//! their integrals exactly at that kink (the positive part vanishes for
//! `γ_e ≥ γ_m`), so the quadrature only ever sees smooth pieces. Double
//! integrals run as nested adaptive 1-D passes because the inner kink
//! location depends on the outer variable.

use crate::dist::{FadingDistribution, GainLaw};
use crate::quad;
use crate::{Error, Result};

/// Tolerances and limits for the adaptive quadrature passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Improper integrals over the gain truncate at this quantile of the
    /// integrating distribution; the integrands grow only logarithmically,
    /// so the discarded mass contributes below 1e-8 npcu.
    pub tail_quantile: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            tail_quantile: 1.0 - 1e-10,
            max_subdivisions: 1 << 16,
        }
    }
}

impl QuadratureSettings {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::Config("quadrature tolerances must be positive".into()));
        }
        if !(self.tail_quantile < 1.0) || !(self.tail_quantile > 0.0) {
            return Err(Error::Config("tail quantile must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `{ln((1+γ_m P)/(1+γ_e P))}^+` — the per-realization secrecy increment.
pub fn pos_log_ratio(gain_main: f64, gain_eve: f64, power: f64) -> f64 {
    debug_assert!(gain_main >= 0.0 && gain_eve >= 0.0 && power >= 0.0);
    ((gain_main * power).ln_1p() - (gain_eve * power).ln_1p()).max(0.0)
}

/// `E_{γ_e}[{ln((1+τP)/(1+γ_e P))}^+]`: the secrecy rate guaranteed by a
/// reconstruction point `τ` against eavesdropper law `dist_e`.
///
/// Equals `∫_0^τ [ln(1+τP) − ln(1+xP)] f_e(x) dx`; the positive part kills
/// the integrand beyond `τ`. Nonnegative and bounded by `ln(1+τP)`.
pub fn expected_secrecy_gain(
    threshold: f64,
    power: f64,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    if threshold < 0.0 || power < 0.0 {
        return Err(Error::Domain("threshold and power must be nonnegative".into()));
    }
    qs.validate()?;
    if threshold == 0.0 || power == 0.0 {
        return Ok(0.0);
    }
    let rate = (threshold * power).ln_1p();
    let upper = threshold.min(dist_e.quantile_unchecked(qs.tail_quantile));
    let f = |x: f64| (rate - (x * power).ln_1p()) * dist_e.pdf(x);
    let q = quad::integrate(&f, 0.0, upper, qs.rel_tol, qs.abs_tol, qs.max_subdivisions)?;
    Ok(q.value.clamp(0.0, rate))
}

/// `E[{ln((1+γ_m P)/(1+γ_e P))}^+ | τ_lo ≤ γ_m < τ_hi]` against `dist_e`.
///
/// `cell_hi = ∞` is allowed; the outer integral then truncates at the tail
/// quantile of `dist_m`. Errors on an empty or zero-probability cell.
pub fn conditional_upper_gain(
    cell_lo: f64,
    cell_hi: f64,
    power: f64,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    let mass = cell_mass(cell_lo, cell_hi, dist_m)?;
    Ok(weighted_upper_gain(cell_lo, cell_hi, power, dist_m, dist_e, qs)? / mass)
}

/// Probability of the cell under `dist_m`, validated.
pub(crate) fn cell_mass(cell_lo: f64, cell_hi: f64, dist_m: &GainLaw) -> Result<f64> {
    if cell_lo < 0.0 || !(cell_lo < cell_hi) {
        return Err(Error::Domain(format!("invalid cell [{cell_lo}, {cell_hi})")));
    }
    let hi_cdf = if cell_hi.is_infinite() { 1.0 } else { dist_m.cdf_unchecked(cell_hi) };
    let mass = hi_cdf - dist_m.cdf_unchecked(cell_lo);
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilityCell { lo: cell_lo, hi: cell_hi });
    }
    Ok(mass)
}

/// Unnormalized conditional term `Θ_cell · E[{·}^+ | cell]`, i.e. the exact
/// summand of the upper bounds. Bound assembly and threshold line searches
/// use this form so that cell mass and kernel stay consistent.
pub(crate) fn weighted_upper_gain(
    cell_lo: f64,
    cell_hi: f64,
    power: f64,
    dist_m: &GainLaw,
    dist_e: &FadingDistribution,
    qs: &QuadratureSettings,
) -> Result<f64> {
    if power < 0.0 {
        return Err(Error::Domain("power must be nonnegative".into()));
    }
    qs.validate()?;
    if power == 0.0 {
        return Ok(0.0);
    }
    let outer_hi = if cell_hi.is_infinite() {
        dist_m.quantile_unchecked(qs.tail_quantile).max(cell_lo)
    } else {
        cell_hi
    };
    // Inner pass tolerances one notch tighter than the outer so the nested
    // error stays within the caller's budget.
    let inner_qs = QuadratureSettings {
        rel_tol: qs.rel_tol * 0.1,
        abs_tol: qs.abs_tol * 0.1,
        ..*qs
    };
    let eve_tail = dist_e.quantile_unchecked(qs.tail_quantile);
    let outer = |g: f64| {
        let density = dist_m.pdf(g);
        if density == 0.0 || g <= 0.0 {
            return 0.0;
        }
        let rate = (g * power).ln_1p();
        let upper = g.min(eve_tail);
        let inner = |x: f64| (rate - (x * power).ln_1p()) * dist_e.pdf(x);
        let q = quad::integrate(&inner, 0.0, upper, inner_qs.rel_tol, inner_qs.abs_tol, inner_qs.max_subdivisions)
            .map(|q| q.value)
            .unwrap_or(f64::NAN);
        density * q.clamp(0.0, rate)
    };
    let q = quad::integrate(&outer, cell_lo, outer_hi, qs.rel_tol, qs.abs_tol, qs.max_subdivisions)?;
    if q.value.is_nan() {
        return Err(Error::Numeric("inner quadrature failed inside conditional expectation".into()));
    }
    Ok(q.value.max(0.0))
}
