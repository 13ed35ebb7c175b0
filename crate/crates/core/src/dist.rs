//! Fading-gain distributions, order statistics and sampling.
//!
//! Squared channel gains live on `[0, ∞)`. Two families cover the scope:
//! exponential (Rayleigh fading amplitude; parameterized by its mean) and
//! integer-shape Gamma (Erlang), which arises as the squared norm of the
//! channel vector of colluding eavesdroppers. The law of the best of K
//! i.i.d. receivers is exposed as [`GainLaw::MaxOfIid`] with CDF `F(x)^K`.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::{Error, Result};

/// Probability law of one squared channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FadingDistribution {
    /// Exponential with the given mean (Rayleigh fading power).
    ExponentialMean(f64),
    /// Gamma with integer shape and positive scale (Erlang).
    Gamma { shape: u32, scale: f64 },
}

impl FadingDistribution {
    /// Exponential law with mean `mean`.
    pub fn exponential_mean(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("exponential mean must be positive, got {mean}")));
        }
        Ok(FadingDistribution::ExponentialMean(mean))
    }

    /// Gamma law with integer shape and scale.
    pub fn gamma(shape: u32, scale: f64) -> Result<Self> {
        if shape == 0 {
            return Err(Error::Domain("gamma shape must be >= 1".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("gamma scale must be positive, got {scale}")));
        }
        Ok(FadingDistribution::Gamma { shape, scale })
    }

    /// Mean of the distribution (exact).
    pub fn mean(&self) -> f64 {
        match *self {
            FadingDistribution::ExponentialMean(m) => m,
            FadingDistribution::Gamma { shape, scale } => shape as f64 * scale,
        }
    }

    /// `Pr[γ ≤ x]`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("cdf argument must be nonnegative, got {x}")));
        }
        Ok(self.cdf_unchecked(x))
    }

    /// Density at `x`; zero off the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return 0.0;
        }
        match *self {
            FadingDistribution::ExponentialMean(m) => (-x / m).exp() / m,
            FadingDistribution::Gamma { shape, scale } => {
                let y = x / scale;
                // y^{k-1} e^{-y} / (k-1)! built multiplicatively.
                let mut t = (-y).exp() / scale;
                for i in 1..shape {
                    t *= y / i as f64;
                }
                t
            }
        }
    }

    /// Smallest `x` with `CDF(x) ≥ p`, for `0 ≤ p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level must lie in [0,1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// One draw via inverse-transform sampling (deterministic in the stream).
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            FadingDistribution::ExponentialMean(m) => -m * (-stream.next_f64()).ln_1p(),
            FadingDistribution::Gamma { shape, scale } => {
                // Sum of `shape` i.i.d. exponentials.
                let mut acc = 0.0;
                for _ in 0..shape {
                    acc += -scale * (-stream.next_f64()).ln_1p();
                }
                acc
            }
        }
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            FadingDistribution::ExponentialMean(m) => -(-x / m).exp_m1(),
            FadingDistribution::Gamma { shape, scale } => erlang_cdf(shape, x / scale),
        }
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        match *self {
            FadingDistribution::ExponentialMean(m) => -m * (-p).ln_1p(),
            FadingDistribution::Gamma { shape, scale } => {
                if p == 0.0 {
                    return 0.0;
                }
                scale * erlang_quantile(shape, p)
            }
        }
    }
}

/// Regularized lower incomplete gamma at integer shape, `P(k, y)`.
///
/// For `y < k+1` the ascending series keeps full relative accuracy at tiny
/// CDF values; otherwise the Erlang survival sum is free of cancellation.
fn erlang_cdf(shape: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let k = shape as f64;
    if y < k + 1.0 {
        // P(k,y) = y^k e^{-y}/k! * sum_{n>=0} y^n / prod_{j=1..n} (k+j)
        let mut log_front = k * y.ln() - y;
        for i in 1..=shape {
            log_front -= (i as f64).ln();
        }
        let front = log_front.exp();
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term > 1e-18 * sum {
            term *= y / (k + n);
            sum += term;
            n += 1.0;
            if n > 10_000.0 {
                break;
            }
        }
        (front * sum).min(1.0)
    } else {
        // survival = e^{-y} sum_{i<k} y^i/i!
        let mut term = (-y).exp();
        let mut surv = term;
        for i in 1..shape {
            term *= y / i as f64;
            surv += term;
        }
        (1.0 - surv).clamp(0.0, 1.0)
    }
}

/// Inverse of [`erlang_cdf`] in `y` by bracketed bisection.
fn erlang_quantile(shape: u32, p: f64) -> f64 {
    let k = shape as f64;
    let mut hi = k + 10.0 * k.sqrt() + 10.0;
    while erlang_cdf(shape, hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0_f64;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if erlang_cdf(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}

/// Law of a gain entering the bound machinery: either a single receiver's
/// gain or the maximum over K i.i.d. receivers (`γ_max`, CDF `F^K`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainLaw {
    Single(FadingDistribution),
    MaxOfIid { base: FadingDistribution, count: u32 },
}

/// Law of `max` over `count` i.i.d. draws of `dist`.
///
/// `count == 1` returns [`GainLaw::Single`], so downstream numerics are
/// bit-identical to using the base distribution directly.
pub fn max_order_statistic(dist: FadingDistribution, count: u32) -> Result<GainLaw> {
    match count {
        0 => Err(Error::Domain("order statistic over zero receivers".into())),
        1 => Ok(GainLaw::Single(dist)),
        _ => Ok(GainLaw::MaxOfIid { base: dist, count }),
    }
}

/// Aggregate eavesdropper law when `colluders` exponential eavesdroppers
/// combine their observations: the squared norm of the gain vector, i.e.
/// Gamma with shape `colluders`.
pub fn colluding_eavesdropper(dist: FadingDistribution, colluders: u32) -> Result<FadingDistribution> {
    if colluders == 0 {
        return Err(Error::Domain("collusion requires at least one eavesdropper".into()));
    }
    match dist {
        FadingDistribution::ExponentialMean(mean) => FadingDistribution::gamma(colluders, mean),
        other => Err(Error::UnsupportedFamily(format!(
            "colluding eavesdroppers need an exponential per-eavesdropper law, got {other:?}"
        ))),
    }
}

impl GainLaw {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("cdf argument must be nonnegative, got {x}")));
        }
        Ok(self.cdf_unchecked(x))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            GainLaw::Single(d) => d.pdf(x),
            GainLaw::MaxOfIid { base, count } => {
                if x < 0.0 || x.is_nan() {
                    return 0.0;
                }
                count as f64 * base.cdf_unchecked(x).powi(count as i32 - 1) * base.pdf(x)
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level must lie in [0,1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            GainLaw::Single(d) => d.sample(stream),
            GainLaw::MaxOfIid { base, count } => {
                base.quantile_unchecked(stream.next_f64().powf(1.0 / count as f64))
            }
        }
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            GainLaw::Single(d) => d.cdf_unchecked(x),
            GainLaw::MaxOfIid { base, count } => base.cdf_unchecked(x).powi(count as i32),
        }
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        match *self {
            GainLaw::Single(d) => d.quantile_unchecked(p),
            GainLaw::MaxOfIid { base, count } => {
                base.quantile_unchecked(p.powf(1.0 / count as f64))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp1() -> FadingDistribution {
        FadingDistribution::exponential_mean(1.0).unwrap()
    }

    #[test]
    fn exponential_cdf_endpoints() {
        let d = exp1();
        assert_eq!(d.cdf(0.0).unwrap(), 0.0);
        assert_relative_eq!(d.cdf(1.0).unwrap(), 1.0 - (-1.0_f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn gamma_cdf_tail_reaches_one() {
        let d = FadingDistribution::gamma(2, 1.0).unwrap();
        assert!((d.cdf(50.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cdf_rejects_negative_argument() {
        assert!(matches!(exp1().cdf(-0.5), Err(Error::Domain(_))));
        let law = max_order_statistic(exp1(), 2).unwrap();
        assert!(matches!(law.cdf(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_rejects_bad_levels() {
        assert!(matches!(exp1().quantile(1.0), Err(Error::Domain(_))));
        assert!(matches!(exp1().quantile(-0.1), Err(Error::Domain(_))));
        assert!(exp1().quantile(0.0).unwrap() == 0.0);
    }

    #[test]
    fn exponential_quantile_inverts_cdf() {
        let d = exp1();
        let p = 1.0 - (-1.0_f64).exp();
        assert_relative_eq!(d.quantile(p).unwrap(), 1.0, max_relative = 1e-12);
        let x = 2.5;
        assert_relative_eq!(d.quantile(d.cdf(x).unwrap()).unwrap(), x, max_relative = 1e-9);
    }

    #[test]
    fn gamma_quantile_inverts_cdf_across_support() {
        // Round trips are exact to 1e-9 relative up to quantile(1 - 1e-8);
        // past that the f64 resolution of the CDF near 1 dominates
        // (|Δx| ≈ ulp(1)/(2 f(x)) already exceeds 1e-9·x), so the last
        // decade of the tail is excluded for any CDF-mediated inverse.
        let d = FadingDistribution::gamma(3, 0.7).unwrap();
        let top = d.quantile(1.0 - 1e-8).unwrap();
        for &x in &[1e-6, 0.01, 0.3, 1.0, 2.1, 5.0, 12.0] {
            assert!(x < top);
            let p = d.cdf(x).unwrap();
            assert_relative_eq!(d.quantile(p).unwrap(), x, max_relative = 1e-9);
        }
        let edge = 0.999 * top;
        assert_relative_eq!(d.quantile(d.cdf(edge).unwrap()).unwrap(), edge, max_relative = 1e-9);
    }

    #[test]
    fn constructors_validate() {
        assert!(FadingDistribution::exponential_mean(0.0).is_err());
        assert!(FadingDistribution::exponential_mean(-1.0).is_err());
        assert!(FadingDistribution::gamma(0, 1.0).is_err());
        assert!(FadingDistribution::gamma(2, 0.0).is_err());
    }

    #[test]
    fn max_order_statistic_identity_at_one() {
        let d = exp1();
        let law = max_order_statistic(d, 1).unwrap();
        assert!(matches!(law, GainLaw::Single(_)));
        for &x in &[0.0, 0.3, 1.0, 4.0] {
            assert_eq!(law.cdf(x).unwrap(), d.cdf(x).unwrap());
        }
    }

    #[test]
    fn max_order_statistic_squares_the_cdf() {
        let law = max_order_statistic(exp1(), 2).unwrap();
        let f = 1.0 - (-1.0_f64).exp();
        assert_relative_eq!(law.cdf(1.0).unwrap(), f * f, max_relative = 1e-12);
        assert_relative_eq!(law.cdf(1.0).unwrap(), 0.399576, max_relative = 1e-5);
    }

    #[test]
    fn max_order_statistic_rejects_zero() {
        assert!(matches!(max_order_statistic(exp1(), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn max_cdf_dominated_by_base() {
        let d = exp1();
        for k in [1u32, 2, 5] {
            let law = max_order_statistic(d, k).unwrap();
            for &x in &[0.1, 0.5, 1.0, 2.0, 6.0] {
                assert!(law.cdf(x).unwrap() <= d.cdf(x).unwrap() + 1e-15);
            }
        }
    }

    #[test]
    fn colluding_identity_and_mean() {
        let d = FadingDistribution::exponential_mean(0.8).unwrap();
        let one = colluding_eavesdropper(d, 1).unwrap();
        for &x in &[0.0, 0.4, 1.7, 5.0] {
            assert_relative_eq!(one.cdf(x).unwrap(), d.cdf(x).unwrap(), max_relative = 1e-12, epsilon = 1e-15);
        }
        let three = colluding_eavesdropper(d, 3).unwrap();
        assert_eq!(three.mean(), 3.0 * d.mean());
    }

    #[test]
    fn colluding_erlang2_closed_form() {
        let two = colluding_eavesdropper(exp1(), 2).unwrap();
        // 1 - e^{-x}(1+x) at x=1
        let expect = 1.0 - 2.0 * (-1.0_f64).exp();
        assert_relative_eq!(two.cdf(1.0).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn colluding_rejects_gamma_input() {
        let g = FadingDistribution::gamma(2, 1.0).unwrap();
        assert!(matches!(colluding_eavesdropper(g, 2), Err(Error::UnsupportedFamily(_))));
        assert!(colluding_eavesdropper(exp1(), 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let d = FadingDistribution::gamma(2, 1.3).unwrap();
        let mut a = RngStream::substream(9, 4, 1);
        let mut b = RngStream::substream(9, 4, 1);
        for _ in 0..32 {
            assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
        }
    }
}
