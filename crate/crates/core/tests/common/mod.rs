//! Shared test oracles: independent implementations used to freeze or
//! cross-check expected values. Everything here deliberately avoids the
//! library's own quadrature/optimization paths.

#![allow(dead_code)]

use secfb_core::{FadingDistribution, RngStream};

/// Exponential integral E1(x) for x > 0.
///
/// Power series below 1, Lentz continued fraction above; matches
/// scipy.special.exp1 to ~1e-15 relative on the range used in tests.
pub fn exp1(x: f64) -> f64 {
    assert!(x > 0.0);
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=60 {
            term *= -x / k as f64;
            sum += term / k as f64;
            if term.abs() < 1e-18 {
                break;
            }
        }
        -EULER - x.ln() - sum
    } else {
        // E1(x) = e^{-x} * 1/(x+1-1/(x+3-4/(x+5-9/...)))  (Lentz)
        let mut b = x + 1.0;
        let mut c = 1e308;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -(i as f64) * (i as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x).exp() * h
    }
}

/// Closed form of the lower-bound kernel for an Exp(1) eavesdropper:
/// `ln(1+τP) − e^{1/P} (E1(1/P) − E1(1/P + τ))`.
pub fn secrecy_gain_closed_form_exp1(tau: f64, power: f64) -> f64 {
    (tau * power).ln_1p() - (1.0 / power).exp() * (exp1(1.0 / power) - exp1(1.0 / power + tau))
}

/// Composite Simpson integration: an oracle path independent of the
/// library's adaptive Gauss–Kronrod.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals % 2 == 0);
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Lower-bound kernel by Simpson quadrature over [0, τ].
pub fn secrecy_gain_simpson(tau: f64, power: f64, dist_e: &FadingDistribution, intervals: usize) -> f64 {
    if tau <= 0.0 || power <= 0.0 {
        return 0.0;
    }
    let rate = (tau * power).ln_1p();
    simpson(|x| (rate - (x * power).ln_1p()) * dist_e.pdf(x), 0.0, tau, intervals)
}

/// Chi-square critical values at the 1% level, indexed by degrees of
/// freedom (upper-tail). Source: standard tables.
pub fn chi2_crit_1pct(dof: usize) -> f64 {
    match dof {
        1 => 6.634_896_601,
        2 => 9.210_340_372,
        3 => 11.344_866_730,
        4 => 13.276_704_136,
        5 => 15.086_272_469,
        6 => 16.811_893_829,
        7 => 18.475_306_906,
        8 => 20.090_235_030,
        16 => 31.999_926_908,
        17 => 33.408_664_348,
        31 => 52.191_394_885,
        32 => 53.485_771_584,
        _ => panic!("no chi-square table entry for dof={dof}"),
    }
}

/// Pearson chi-square statistic for observed counts against expected
/// probabilities, merging cells with tiny expectation into a remainder.
pub fn chi2_statistic(counts: &[u64], probs: &[f64]) -> (f64, usize) {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut dof: isize = -1;
    let mut merged_count = 0.0;
    let mut merged_prob = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        let expect = p * n as f64;
        if expect < 5.0 {
            merged_count += c as f64;
            merged_prob += p;
            continue;
        }
        stat += (c as f64 - expect).powi(2) / expect;
        dof += 1;
    }
    let merged_expect = merged_prob * n as f64;
    if merged_expect >= 5.0 {
        stat += (merged_count - merged_expect).powi(2) / merged_expect;
        dof += 1;
    }
    (stat, dof.max(1) as usize)
}

/// Kolmogorov–Smirnov statistic of samples against an analytic CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut worst = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        worst = worst.max((f - lo).abs()).max((hi - f).abs());
    }
    worst
}

/// Mean and standard error of f applied to a Monte Carlo stream.
pub fn mc_mean<F: FnMut(&mut RngStream) -> f64>(seed: u64, n: u64, mut f: F) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..n {
        let mut stream = RngStream::substream(seed, i, 0);
        let v = f(&mut stream);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0);
    (mean, (var / n as f64).sqrt())
}
