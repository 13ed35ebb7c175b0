//! Reconstruction points and feedback cells.
//!
//! A quantizer holds the ordered thresholds `τ_1 < … < τ_Q` that partition
//! `[0, ∞)` into `Q+1` cells, with implicit `τ_0 = 0` and `τ_{Q+1} = ∞`.
//! Cell `q` is the left-closed interval `[τ_q, τ_{q+1})`; a receiver whose
//! gain lands in cell `q` feeds back index `q`. Cell 0 (below `τ_1`) means
//! the gain fell under every reconstruction point; achievable-rate
//! evaluation treats it as "no transmission" while upper-bound evaluation
//! may still assign it power.

use serde::{Deserialize, Serialize};

use crate::dist::GainLaw;
use crate::{Error, Result};

/// Ordered reconstruction points with `Q = 2^b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    thresholds: Vec<f64>,
    bits: u32,
}

impl Quantizer {
    /// Build from explicit thresholds.
    ///
    /// The count must be a power of two (a single threshold is allowed for
    /// degenerate/test setups; bound assembly requires `b ≥ 1`), strictly
    /// increasing and positive.
    pub fn from_thresholds(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() || !thresholds.len().is_power_of_two() {
            return Err(Error::Config(format!(
                "threshold count must be a power of two >= 1, got {}",
                thresholds.len()
            )));
        }
        if !(thresholds[0] > 0.0) || thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite and positive".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly increasing".into()));
        }
        let bits = thresholds.len().trailing_zeros();
        Ok(Quantizer { thresholds, bits })
    }

    /// Feedback bits `b` with `Q = 2^b`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of reconstruction points `Q`.
    pub fn cell_count(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Reconstruction point `τ_q` for `q ≥ 1`; `τ_0 = 0`.
    pub fn threshold(&self, q: usize) -> f64 {
        if q == 0 {
            0.0
        } else {
            self.thresholds[q - 1]
        }
    }

    /// Cell edges `[τ_q, τ_{q+1})`; the top cell is unbounded.
    pub fn cell_edges(&self, q: usize) -> (f64, f64) {
        let q_max = self.thresholds.len();
        debug_assert!(q <= q_max);
        let lo = self.threshold(q);
        let hi = if q == q_max { f64::INFINITY } else { self.thresholds[q] };
        (lo, hi)
    }

    /// Index `q` of the cell containing `gain`: `τ_q ≤ gain < τ_{q+1}`.
    pub fn index_of(&self, gain: f64) -> usize {
        debug_assert!(gain >= 0.0);
        self.thresholds.partition_point(|t| *t <= gain)
    }

    /// `Pr[τ_q ≤ γ < τ_{q+1}]` for every cell, length `Q+1`.
    pub fn cell_probabilities(&self, dist: &GainLaw) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.thresholds.len() + 1);
        let mut prev = 0.0;
        for &t in &self.thresholds {
            let c = dist.cdf(t)?;
            out.push((c - prev).max(0.0));
            prev = c;
        }
        out.push((1.0 - prev).max(0.0));
        Ok(out)
    }

    /// Refine to a `2^bits`-point quantizer whose thresholds contain the
    /// current ones, placing the extra points at equal-mass quantiles
    /// inside each cell (cells receive extras in proportion to their mass,
    /// largest-remainder apportionment). Any policy feasible on the coarse
    /// quantizer embeds in the refined one, so warm-starting a finer
    /// optimization from the refinement cannot lose value.
    pub fn refine_to_bits(&self, dist: &GainLaw, bits: u32) -> Result<Quantizer> {
        let target = 1_usize
            .checked_shl(bits)
            .ok_or_else(|| Error::Config(format!("bits = {bits} out of range")))?;
        let current = self.thresholds.len();
        if target < current {
            return Err(Error::Config(format!(
                "cannot refine {current} thresholds down to {target}"
            )));
        }
        if target == current {
            return Ok(self.clone());
        }
        let extra = target - current;
        let mut levels = Vec::with_capacity(current + 2);
        levels.push(0.0);
        for &t in &self.thresholds {
            levels.push(dist.cdf(t)?);
        }
        levels.push(1.0);
        let masses: Vec<f64> = levels.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let total_mass: f64 = masses.iter().sum();

        // Largest-remainder apportionment of `extra` splits over cells.
        let quotas: Vec<f64> = masses.iter().map(|m| extra as f64 * m / total_mass).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let n_cells = counts.len();
        let mut cursor = 0;
        while assigned < extra {
            counts[order[cursor % n_cells]] += 1;
            assigned += 1;
            cursor += 1;
        }

        let mut out = Vec::with_capacity(target);
        for (cell, &n) in counts.iter().enumerate() {
            let (lo_p, hi_p) = (levels[cell], levels[cell + 1]);
            for j in 1..=n {
                let p = lo_p + (hi_p - lo_p) * j as f64 / (n + 1) as f64;
                out.push(dist.quantile(p)?);
            }
            if cell < current {
                out.push(self.thresholds[cell]);
            }
        }
        Quantizer::from_thresholds(out)
    }
}

/// Quantizer whose `Q+1` cells all carry probability `1/(Q+1)` under
/// `dist`: thresholds at the `q/(Q+1)` quantiles, `q = 1..Q`.
pub fn equiprobable_quantizer(dist: &GainLaw, bits: u32) -> Result<Quantizer> {
    if bits == 0 {
        return Err(Error::Domain("equiprobable quantizer needs b >= 1".into()));
    }
    if bits > 16 {
        return Err(Error::Domain(format!("b = {bits} exceeds the practical cap of 16")));
    }
    let q_count = 1_usize << bits;
    let mut thresholds = Vec::with_capacity(q_count);
    for q in 1..=q_count {
        thresholds.push(dist.quantile(q as f64 / (q_count + 1) as f64)?);
    }
    Quantizer::from_thresholds(thresholds)
}
