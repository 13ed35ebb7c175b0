//! Adaptive Gauss–Kronrod quadrature (G7/K15 with interval bisection).
//!
//! The secrecy expectations integrate smooth-but-kinked densities against
//! log kernels whose curvature concentrates near the origin at high power,
//! so a globally refined rule wastes work; adaptive bisection driven by the
//! Kronrod error estimate keeps evaluation counts small. Callers split
//! integrands at known kinks and hand in smooth pieces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

// 15-point Kronrod abscissae on [-1,1], positive half, descending.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

// Kronrod weights matching XGK.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Embedded 7-point Gauss weights (nodes XGK[1], XGK[3], XGK[5], center).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug)]
pub(crate) struct Quad {
    pub value: f64,
    // Diagnostics; consumed by the tests.
    #[allow(dead_code)]
    pub abs_error: f64,
    #[allow(dead_code)]
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    seq: u64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.seq == other.seq
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on error; older panel wins ties so splitting order is
        // deterministic.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One K15 evaluation on [a, b]: returns (value, error estimate).
fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);

    let mut result_gauss = fc * WG[3];
    let mut result_kronrod = fc * WGK[7];
    let mut result_abs = result_kronrod.abs();

    let mut fv = [0.0_f64; 14];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = f1;
        fv[j + 7] = f2;
        let sum = f1 + f2;
        result_kronrod += WGK[j] * sum;
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * sum;
        }
    }

    let mean = 0.5 * result_kronrod;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[j + 7] - mean).abs());
    }

    let value = result_kronrod * half;
    let abs = result_abs * half.abs();
    let asc = result_asc * half.abs();

    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / asc).powf(1.5);
        err = if scale < 1.0 { asc * scale } else { asc };
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    (value, err)
}

/// Integrate `f` over [a, b] to `max(abs_tol, rel_tol * |I|)`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<Quad> {
    if a >= b {
        return Ok(Quad { value: 0.0, abs_error: 0.0, panels: 0 });
    }
    let (v, e) = kronrod15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e, seq: 0 });
    let mut total_value = v;
    let mut total_error = e;
    let mut seq = 1_u64;

    loop {
        let tol = abs_tol.max(rel_tol * total_value.abs());
        if total_error <= tol {
            let panels = heap.len();
            return Ok(Quad { value: total_value, abs_error: total_error, panels });
        }
        if heap.len() >= max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                residual: total_error,
                subdivisions: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap cannot be empty while error > 0");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel narrower than machine resolution: accept as-is.
            let mut rest = heap.into_vec();
            rest.push(worst);
            let panels = rest.len();
            return Ok(Quad { value: total_value, abs_error: total_error, panels });
        }
        let (v1, e1) = kronrod15(f, worst.a, mid);
        let (v2, e2) = kronrod15(f, mid, worst.b);
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1, seq });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2, seq: seq + 1 });
        seq += 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        // K15 integrates degree <= 22 exactly; x^5 over [0,2] = 32/3.
        let q = integrate(&|x: f64| x.powi(5), 0.0, 2.0, 1e-12, 1e-15, 64).unwrap();
        assert!((q.value - 32.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exp_decay_matches_closed_form() {
        let q = integrate(&|x: f64| (-x).exp(), 0.0, 30.0, 1e-12, 1e-15, 4096).unwrap();
        assert!((q.value - (1.0 - (-30.0_f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn steep_log_kernel_converges() {
        // ln(1+P x) e^{-x} with P = 1e4 concentrates curvature near 0.
        let p = 1e4;
        let q = integrate(&|x: f64| (p * x).ln_1p() * (-x).exp(), 0.0, 40.0, 1e-10, 1e-14, 1 << 16).unwrap();
        assert!(q.abs_error < 1e-8 * q.value.abs());
    }

    #[test]
    fn empty_interval_is_zero() {
        let q = integrate(&|_| 1.0, 1.0, 1.0, 1e-8, 1e-12, 8).unwrap();
        assert_eq!(q.value, 0.0);
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        // Highly oscillatory with a 1-panel budget cannot converge.
        let r = integrate(&|x: f64| (200.0 * x).sin(), 0.0, 10.0, 1e-14, 1e-16, 1);
        match r {
            Err(Error::QuadratureNonConvergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
