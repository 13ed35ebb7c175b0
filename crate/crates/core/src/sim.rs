//! Block-fading Monte Carlo simulator for the feedback protocols.
//!
//! Works at fading-block granularity: per block the gains are drawn, each
//! receiver feeds back its cell index, the transmitter picks the protocol
//! index (minimum reconstruction value for the common message, maximum for
//! independent messages), sends at rate `R_q = ln(1 + τ_q P_q)` with power
//! `P_q`, and the block contributes the secrecy increment
//! `{R_q − ln(1 + γ_e P_q)}^+`. Averaging over blocks estimates the
//! ergodic rate that the analytic bounds integrate in closed form.
//!
//! Blocks are keyed into the counter-based RNG by `(seed, block,
//! terminal)`, so any contiguous chunk can be produced independently;
//! chunk partial sums are combined in block order, which makes estimates
//! bit-identical across worker counts.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::FadingDistribution;
use crate::opt::PowerPolicy;
use crate::quantize::Quantizer;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Which selection rule the transmitter applies to the feedback vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    /// Serve everyone: adapt to the weakest quantized gain.
    Common,
    /// Serve the instantaneously best receiver (TDMA), ties uniform.
    Sum,
}

/// Simulation inputs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Number of fading blocks `L`.
    pub blocks: u64,
    /// Number of legitimate receivers `K`.
    pub receivers: usize,
    pub seed: u64,
    /// One shared quantizer, or one per receiver (all with equal `Q`).
    pub quantizers: Vec<Quantizer>,
    pub policy: PowerPolicy,
    /// One shared main law, or one per receiver.
    pub dists_main: Vec<FadingDistribution>,
    pub dist_e: FadingDistribution,
}

/// Per-block records of one simulation run, stored column-wise.
#[derive(Debug, Clone)]
pub struct BlockFadingTrace {
    pub receivers: usize,
    /// Row-major `blocks × receivers` main gains.
    pub gains_main: Vec<f64>,
    pub gains_eve: Vec<f64>,
    /// Row-major `blocks × receivers` feedback indices.
    pub feedback: Vec<u16>,
    /// Index the transmitter adapted to.
    pub selected: Vec<u16>,
    pub power: Vec<f64>,
    /// Codeword rate `ln(1 + τ_q P_q)` of the selected cell (0 for q=0).
    pub rate: Vec<f64>,
    /// `{rate − ln(1 + γ_e P_q)}^+`.
    pub increment: Vec<f64>,
}

impl BlockFadingTrace {
    pub fn blocks(&self) -> usize {
        self.gains_eve.len()
    }
}

/// Estimate plus the artifacts needed to audit it.
#[derive(Debug)]
pub struct SimOutcome {
    pub trace: BlockFadingTrace,
    /// Mean secrecy increment over blocks (npcu).
    pub rate_estimate: f64,
    pub std_error: f64,
    /// Mean transmit power over blocks.
    pub avg_power: f64,
    pub power_std_error: f64,
}

/// Ergodic rate of the common-message protocol.
pub fn simulate_common(cfg: &SimConfig) -> Result<SimOutcome> {
    simulate(cfg, Scenario::Common)
}

/// Ergodic sum rate of the TDMA independent-messages protocol.
pub fn simulate_sum(cfg: &SimConfig) -> Result<SimOutcome> {
    simulate(cfg, Scenario::Sum)
}

/// Terminal ids feeding the per-block RNG streams: receivers take
/// `0..K`, the eavesdropper and the tie-break draw sit above them.
const EVE_TERMINAL_OFFSET: u64 = 0;
const TIE_TERMINAL_OFFSET: u64 = 1;

const CHUNK: u64 = 1 << 14;

fn simulate(cfg: &SimConfig, scenario: Scenario) -> Result<SimOutcome> {
    validate(cfg)?;
    let k = cfg.receivers;
    let blocks = cfg.blocks as usize;
    let quant_of = |r: usize| -> &Quantizer {
        if cfg.quantizers.len() == 1 { &cfg.quantizers[0] } else { &cfg.quantizers[r] }
    };
    let dist_of = |r: usize| -> &FadingDistribution {
        if cfg.dists_main.len() == 1 { &cfg.dists_main[0] } else { &cfg.dists_main[r] }
    };

    struct ChunkOut {
        gains_main: Vec<f64>,
        gains_eve: Vec<f64>,
        feedback: Vec<u16>,
        selected: Vec<u16>,
        power: Vec<f64>,
        rate: Vec<f64>,
        increment: Vec<f64>,
        sum_inc: f64,
        sum_inc_sq: f64,
        sum_pow: f64,
        sum_pow_sq: f64,
    }

    let n_chunks = cfg.blocks.div_ceil(CHUNK);
    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(cfg.blocks);
            let len = (hi - lo) as usize;
            let mut out = ChunkOut {
                gains_main: Vec::with_capacity(len * k),
                gains_eve: Vec::with_capacity(len),
                feedback: Vec::with_capacity(len * k),
                selected: Vec::with_capacity(len),
                power: Vec::with_capacity(len),
                rate: Vec::with_capacity(len),
                increment: Vec::with_capacity(len),
                sum_inc: 0.0,
                sum_inc_sq: 0.0,
                sum_pow: 0.0,
                sum_pow_sq: 0.0,
            };
            for block in lo..hi {
                let mut sel_r = 0usize;
                let mut sel_q = 0usize;
                let mut sel_tau = 0.0_f64;
                let mut ties = 0u64;
                for r in 0..k {
                    let mut stream = RngStream::substream(cfg.seed, block, r as u64);
                    let gain = dist_of(r).sample(&mut stream);
                    let q = quant_of(r).index_of(gain);
                    let tau = quant_of(r).threshold(q);
                    out.gains_main.push(gain);
                    out.feedback.push(q as u16);
                    let better = match scenario {
                        Scenario::Common => r == 0 || tau < sel_tau,
                        Scenario::Sum => r == 0 || tau > sel_tau,
                    };
                    if better {
                        sel_r = r;
                        sel_q = q;
                        sel_tau = tau;
                        ties = 1;
                    } else if scenario == Scenario::Sum && tau == sel_tau {
                        // Reservoir-style uniform choice among maximizers.
                        ties += 1;
                        let mut tie = RngStream::substream(
                            cfg.seed,
                            block,
                            k as u64 + TIE_TERMINAL_OFFSET + r as u64,
                        );
                        if tie.next_below(ties) == 0 {
                            sel_r = r;
                            sel_q = q;
                            sel_tau = tau;
                        }
                    }
                }
                let _ = sel_r;
                let mut eve_stream =
                    RngStream::substream(cfg.seed, block, k as u64 + EVE_TERMINAL_OFFSET);
                let gain_eve = cfg.dist_e.sample(&mut eve_stream);
                let (power, rate) = if sel_q == 0 {
                    (0.0, 0.0)
                } else {
                    let p = cfg.policy.powers[sel_q];
                    (p, (sel_tau * p).ln_1p())
                };
                let increment = (rate - (gain_eve * power).ln_1p()).max(0.0);
                out.gains_eve.push(gain_eve);
                out.selected.push(sel_q as u16);
                out.power.push(power);
                out.rate.push(rate);
                out.increment.push(increment);
                out.sum_inc += increment;
                out.sum_inc_sq += increment * increment;
                out.sum_pow += power;
                out.sum_pow_sq += power * power;
            }
            out
        })
        .collect();

    let mut trace = BlockFadingTrace {
        receivers: k,
        gains_main: Vec::with_capacity(blocks * k),
        gains_eve: Vec::with_capacity(blocks),
        feedback: Vec::with_capacity(blocks * k),
        selected: Vec::with_capacity(blocks),
        power: Vec::with_capacity(blocks),
        rate: Vec::with_capacity(blocks),
        increment: Vec::with_capacity(blocks),
    };
    let mut sum_inc = 0.0;
    let mut sum_inc_sq = 0.0;
    let mut sum_pow = 0.0;
    let mut sum_pow_sq = 0.0;
    for c in chunks {
        trace.gains_main.extend_from_slice(&c.gains_main);
        trace.gains_eve.extend_from_slice(&c.gains_eve);
        trace.feedback.extend_from_slice(&c.feedback);
        trace.selected.extend_from_slice(&c.selected);
        trace.power.extend_from_slice(&c.power);
        trace.rate.extend_from_slice(&c.rate);
        trace.increment.extend_from_slice(&c.increment);
        sum_inc += c.sum_inc;
        sum_inc_sq += c.sum_inc_sq;
        sum_pow += c.sum_pow;
        sum_pow_sq += c.sum_pow_sq;
    }

    let n = cfg.blocks as f64;
    let mean = sum_inc / n;
    let mean_pow = sum_pow / n;
    let (std_error, power_std_error) = if cfg.blocks > 1 {
        let var = ((sum_inc_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        let var_p = ((sum_pow_sq - n * mean_pow * mean_pow) / (n - 1.0)).max(0.0);
        ((var / n).sqrt(), (var_p / n).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(SimOutcome {
        trace,
        rate_estimate: mean,
        std_error,
        avg_power: mean_pow,
        power_std_error,
    })
}

fn validate(cfg: &SimConfig) -> Result<()> {
    if cfg.blocks == 0 {
        return Err(Error::Config("simulation needs at least one block".into()));
    }
    if cfg.receivers == 0 {
        return Err(Error::Config("simulation needs at least one receiver".into()));
    }
    if cfg.quantizers.is_empty()
        || (cfg.quantizers.len() != 1 && cfg.quantizers.len() != cfg.receivers)
    {
        return Err(Error::Config(format!(
            "need 1 or {} quantizers, got {}",
            cfg.receivers,
            cfg.quantizers.len()
        )));
    }
    let q0 = cfg.quantizers[0].cell_count();
    if cfg.quantizers.iter().any(|q| q.cell_count() != q0) {
        return Err(Error::Config("per-receiver quantizers must share one cell count".into()));
    }
    if cfg.policy.powers.len() != q0 + 1 {
        return Err(Error::Config(format!(
            "policy has {} powers for {} cells",
            cfg.policy.powers.len(),
            q0 + 1
        )));
    }
    if cfg.dists_main.is_empty()
        || (cfg.dists_main.len() != 1 && cfg.dists_main.len() != cfg.receivers)
    {
        return Err(Error::Config(format!(
            "need 1 or {} main distributions, got {}",
            cfg.receivers,
            cfg.dists_main.len()
        )));
    }
    Ok(())
}

/// Frequency of each selected cell in a trace; length `Q+1`.
pub fn empirical_cell_occupancy(trace: &BlockFadingTrace, cells: usize) -> Vec<f64> {
    let mut counts = vec![0u64; cells];
    for &q in &trace.selected {
        counts[q as usize] += 1;
    }
    let n = trace.selected.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Recompute the rate estimate from the stored per-block records. Returns
/// bit-identical results to the original run; use it to audit a trace.
pub fn replay_rate_estimate(trace: &BlockFadingTrace) -> f64 {
    let blocks = trace.blocks() as u64;
    let n_chunks = blocks.div_ceil(CHUNK);
    let mut total = 0.0;
    for c in 0..n_chunks {
        let lo = (c * CHUNK) as usize;
        let hi = ((c + 1) * CHUNK).min(blocks) as usize;
        let mut chunk_sum = 0.0;
        for b in lo..hi {
            chunk_sum += (trace.rate[b] - (trace.gains_eve[b] * trace.power[b]).ln_1p()).max(0.0);
        }
        total += chunk_sum;
    }
    total / blocks as f64
}

/// Write a trace as CSV: `block,gamma_1..gamma_K,gamma_e,q_sel,power,rate,increment`.
pub fn write_trace_csv<W: std::io::Write>(trace: &BlockFadingTrace, out: &mut W) -> std::io::Result<()> {
    write!(out, "block")?;
    for r in 1..=trace.receivers {
        write!(out, ",gamma_{r}")?;
    }
    writeln!(out, ",gamma_e,q_sel,power,rate,increment")?;
    for b in 0..trace.blocks() {
        write!(out, "{b}")?;
        for r in 0..trace.receivers {
            write!(out, ",{}", trace.gains_main[b * trace.receivers + r])?;
        }
        writeln!(
            out,
            ",{},{},{},{},{}",
            trace.gains_eve[b], trace.selected[b], trace.power[b], trace.rate[b], trace.increment[b]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::GainLaw;
    use crate::quantize::equiprobable_quantizer;

    fn cfg(blocks: u64, receivers: usize, seed: u64) -> SimConfig {
        let d = FadingDistribution::exponential_mean(1.0).unwrap();
        let quant = equiprobable_quantizer(&GainLaw::Single(d), 2).unwrap();
        let cells = quant.cell_count() + 1;
        SimConfig {
            blocks,
            receivers,
            seed,
            quantizers: vec![quant],
            policy: PowerPolicy {
                powers: (0..cells).map(|q| q as f64).collect(),
                avg_power_budget: 10.0,
                multiplier: 0.0,
            },
            dists_main: vec![d],
            dist_e: d,
        }
    }

    #[test]
    fn zero_policy_gives_zero_rate() {
        let mut c = cfg(1000, 2, 7);
        c.policy.powers.iter_mut().for_each(|p| *p = 0.0);
        let out = simulate_common(&c).unwrap();
        assert_eq!(out.rate_estimate, 0.0);
        assert_eq!(out.avg_power, 0.0);
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let c = cfg(5000, 3, 41);
        let a = simulate_common(&c).unwrap();
        let b = simulate_common(&c).unwrap();
        assert_eq!(a.rate_estimate.to_bits(), b.rate_estimate.to_bits());
        assert_eq!(a.trace.gains_main, b.trace.gains_main);
        assert_eq!(a.trace.selected, b.trace.selected);
    }

    #[test]
    fn k1_common_and_sum_traces_match() {
        let c = cfg(4000, 1, 13);
        let a = simulate_common(&c).unwrap();
        let b = simulate_sum(&c).unwrap();
        assert_eq!(a.trace.selected, b.trace.selected);
        assert_eq!(a.rate_estimate.to_bits(), b.rate_estimate.to_bits());
    }

    #[test]
    fn increment_clamps_when_eavesdropper_wins() {
        let c = cfg(20_000, 2, 3);
        let out = simulate_common(&c).unwrap();
        for b in 0..out.trace.blocks() {
            let q = out.trace.selected[b] as usize;
            if q > 0 && out.trace.gains_eve[b] >= c.quantizers[0].threshold(q) {
                assert_eq!(out.trace.increment[b], 0.0, "block {b} should leak everything");
            }
            assert!(out.trace.increment[b] >= 0.0);
        }
    }

    #[test]
    fn replay_matches_original_estimate() {
        let c = cfg(30_000, 2, 99);
        let out = simulate_sum(&c).unwrap();
        assert_eq!(replay_rate_estimate(&out.trace).to_bits(), out.rate_estimate.to_bits());
    }

    #[test]
    fn occupancy_sums_to_one() {
        let c = cfg(10_000, 2, 5);
        let out = simulate_common(&c).unwrap();
        let occ = empirical_cell_occupancy(&out.trace, c.quantizers[0].cell_count() + 1);
        assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation_catches_mismatches() {
        let mut c = cfg(10, 2, 1);
        c.policy.powers.pop();
        assert!(simulate_common(&c).is_err());
        let mut c = cfg(10, 3, 1);
        c.dists_main = vec![c.dists_main[0]; 2];
        assert!(simulate_common(&c).is_err());
        let mut c = cfg(0, 1, 1);
        c.blocks = 0;
        assert!(simulate_common(&c).is_err());
    }

    #[test]
    fn trace_csv_has_documented_header() {
        let c = cfg(3, 2, 8);
        let out = simulate_common(&c).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&out.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block,gamma_1,gamma_2,gamma_e,q_sel,power,rate,increment\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
