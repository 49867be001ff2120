//! Monte-Carlo check that measurement-matrix entries have a sub-Gaussian tail.
//!
//! With fixed one-bit networks and a single combiner column, the entry
//! `ã[m,n] = w_rf * sum_i p[m,i] f_rf[n,i]` is a weighted sum of bounded
//! zero-mean pilots. Its real part is compared against
//! `exp(-t^2 N_t N_t^RF N_r / (2 N_s))`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{sample_phase_networks, sample_pilots, TransceiverConfig};
use crate::seed::{rng_for, TAG_TAIL};

pub const MIN_TRIALS: usize = 10_000;
pub const GRID_POINTS: usize = 20;
/// Grid ends where the bound reaches this value.
pub const GRID_FLOOR: f64 = 1e-4;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical_prob: f64,
    pub bound: f64,
    /// Binomial standard error at the bound probability.
    pub stderr: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub trials: usize,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,empirical_prob,bound,stderr,flagged")?;
        for r in &self.rows {
            writeln!(w, "{:.6e},{:.6e},{:.6e},{:.6e},{}", r.t, r.empirical_prob, r.bound, r.stderr, r.flagged)?;
        }
        Ok(())
    }
}

/// Exponent rate `c` in `exp(-c t^2)`.
pub fn bound_rate(cfg: &TransceiverConfig) -> f64 {
    (cfg.n_tx * cfg.n_tx_rf * cfg.n_rx) as f64 / (2.0 * cfg.n_streams as f64)
}

pub fn tail_bound(cfg: &TransceiverConfig, t: f64) -> f64 {
    (-bound_rate(cfg) * t * t).exp()
}

/// `GRID_POINTS` evenly spaced thresholds from 0 to the point where the bound
/// equals [`GRID_FLOOR`].
pub fn threshold_grid(cfg: &TransceiverConfig) -> Vec<f64> {
    let t_max = ((1.0 / GRID_FLOOR).ln() / bound_rate(cfg)).sqrt();
    (0..GRID_POINTS).map(|i| t_max * i as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Draws one phase-network pair, then `trials` independent pilot sets, and
/// tallies `Re ã[0,0] >= t` over the threshold grid. A threshold is flagged
/// when the empirical frequency exceeds the bound by more than three
/// standard errors.
pub fn subgaussian_tail_check(cfg: &TransceiverConfig, trials: usize, seed: u64) -> Result<TailReport> {
    cfg.validate()?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidConfig(format!("tail check needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let pilot_cfg = TransceiverConfig { n_frames: 1, n_f: 1, ..cfg.clone() };
    let (f_rf, w_rf) = sample_phase_networks(cfg, &mut rng_for(seed, &[TAG_TAIL, u64::MAX]))?;
    let w = w_rf[(0, 0)].re;
    let coeffs: Vec<f64> = (0..cfg.n_streams).map(|i| w * f_rf[(0, i)].re).collect();
    let grid = threshold_grid(cfg);
    let n_chunks = trials.div_ceil(CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<usize>> {
            let mut rng = rng_for(seed, &[TAG_TAIL, c as u64]);
            let mut hits = vec![0usize; grid.len()];
            let len = CHUNK.min(trials - c * CHUNK);
            for _ in 0..len {
                let p = sample_pilots(&pilot_cfg, 1.0, &mut rng)?;
                let a: f64 = p.symbol(0, 0).iter().zip(&coeffs).map(|(p, c)| p.re * c).sum();
                for (h, &t) in hits.iter_mut().zip(&grid) {
                    if a >= t {
                        *h += 1;
                    }
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let hits: usize = counts.iter().map(|c| c[i]).sum();
            let empirical_prob = hits as f64 / n;
            let bound = tail_bound(cfg, t);
            let stderr = (bound * (1.0 - bound) / n).sqrt();
            TailRow { t, empirical_prob, bound, stderr, flagged: empirical_prob > bound + 3.0 * stderr }
        })
        .collect();
    Ok(TailReport { trials, rows })
}
