//! Channel estimation by inverting a trained generator.
//!
//! Minimizes `L(z) = ||y - A G(z)||^2` over the latent vector from several
//! Gaussian starts run side by side as one batch. Steps are taken on
//! `L / ||y||^2` so the step size does not depend on the signal level. Each
//! restart remembers the best point it has visited, so the returned loss
//! never exceeds any restart's starting loss.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, ReceivedSignal};
use crate::numeric::CVector;
use crate::seed::Rng;
use crate::wgan::{sample_latent, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentOptimizer {
    #[serde(rename = "plain-gd")]
    PlainGd,
    #[serde(rename = "rmsprop-on-z")]
    RmspropOnZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub step: f64,
    pub optimizer: LatentOptimizer,
    /// Backtracking Armijo search with step growth after each success
    /// (plain gradient descent only).
    pub line_search: bool,
    pub rms_decay: f64,
    pub rms_eps: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            iterations: 200,
            step: 0.5,
            optimizer: LatentOptimizer::PlainGd,
            line_search: false,
            rms_decay: 0.9,
            rms_eps: 1e-8,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig("restarts and iterations must be at least 1".into()));
        }
        if !(self.step >= 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!("step must be a nonnegative number, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanEstimate {
    pub estimate: ChannelRealization,
    pub z: Array1<f64>,
    /// `||y - A G(z*)||^2`.
    pub loss: f64,
    /// Best loss reached by each restart.
    pub restart_losses: Vec<f64>,
    pub initial_losses: Vec<f64>,
    /// Current loss of every restart after each iteration.
    pub history: Vec<Vec<f64>>,
}

fn features_to_vec(x: ArrayView1<'_, f64>) -> CVector {
    let n = x.len() / 2;
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

struct Batch {
    trace: crate::neural::ForwardTrace,
    residuals: Vec<CVector>,
    losses: Vec<f64>,
}

fn evaluate(op: &MeasurementOperator, y: &CVector, gen: &Generator, z: &Array2<f64>) -> Result<Batch> {
    let trace = gen.net.forward_traced(z.view())?;
    let mut residuals = Vec::with_capacity(z.nrows());
    let mut losses = Vec::with_capacity(z.nrows());
    for row in trace.output.rows() {
        let h = features_to_vec(row).mapv(|v| v * gen.output_scale);
        let r = y - &op.forward_vec(&h)?;
        losses.push(r.iter().map(|c| c.norm_sqr()).sum());
        residuals.push(r);
    }
    Ok(Batch { trace, residuals, losses })
}

/// Raw loss gradients for every row of the batch.
fn gradients(op: &MeasurementOperator, gen: &Generator, b: &Batch) -> Result<Array2<f64>> {
    let out_dim = b.trace.output.ncols();
    let n = out_dim / 2;
    let mut upstream = Array2::zeros((b.residuals.len(), out_dim));
    for (mut u, r) in upstream.rows_mut().into_iter().zip(&b.residuals) {
        let g = op.adjoint_vec(r)?;
        for j in 0..n {
            u[j] = -2.0 * gen.output_scale * g[j].re;
            u[n + j] = -2.0 * gen.output_scale * g[j].im;
        }
    }
    let grads = gen.net.backward_traced(&b.trace, upstream.view(), false, true)?;
    Ok(grads.input.expect("input gradient requested"))
}

fn check(op: &MeasurementOperator, gen: &Generator, y: &CVector) -> Result<()> {
    if gen.dims != op.dims() {
        return Err(Error::Shape(format!("generator emits {:?}, operator expects {:?}", gen.dims, op.dims())));
    }
    if y.len() != op.n_rows() {
        return Err(Error::Shape(format!("observation {} != {} rows", y.len(), op.n_rows())));
    }
    Ok(())
}

/// `||y - A G(z)||^2`.
pub fn inversion_loss(op: &MeasurementOperator, y: &CVector, gen: &Generator, z: &Array1<f64>) -> Result<f64> {
    check(op, gen, y)?;
    let zb = z.view().insert_axis(Axis(0)).to_owned();
    Ok(evaluate(op, y, gen, &zb)?.losses[0])
}

/// `∇_z ||y - A G(z)||^2 = -2 J_G(z)^T [Re; Im](A^H (y - A G(z)))`.
pub fn inversion_gradient(
    op: &MeasurementOperator,
    y: &CVector,
    gen: &Generator,
    z: &Array1<f64>,
) -> Result<Array1<f64>> {
    check(op, gen, y)?;
    let zb = z.view().insert_axis(Axis(0)).to_owned();
    let b = evaluate(op, y, gen, &zb)?;
    Ok(gradients(op, gen, &b)?.index_axis_move(Axis(0), 0))
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const MAX_STEP: f64 = 1e6;

pub fn estimate_gan(
    op: &MeasurementOperator,
    received: &ReceivedSignal,
    gen: &Generator,
    cfg: &InversionConfig,
    rng: &mut Rng,
) -> Result<GanEstimate> {
    cfg.validate()?;
    let y = &received.y;
    check(op, gen, y)?;
    let r = cfg.restarts;
    let y2 = y.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let norm = if y2 > 0.0 { 1.0 / y2 } else { 1.0 };
    let mut z = sample_latent(r, gen.latent_dim(), rng);
    let mut best_z = z.clone();
    let mut rms = Array2::<f64>::zeros(z.dim());
    let mut steps = vec![cfg.step; r];
    let mut batch = evaluate(op, y, gen, &z)?;
    let initial_losses = batch.losses.clone();
    let mut best = batch.losses.clone();
    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut g = gradients(op, gen, &batch)?;
        g *= norm;
        match (cfg.optimizer, cfg.line_search) {
            (LatentOptimizer::PlainGd, false) => z.scaled_add(-cfg.step, &g),
            (LatentOptimizer::RmspropOnZ, _) => {
                ndarray::Zip::from(&mut z).and(&mut rms).and(&g).for_each(|zi, s, &gi| {
                    *s = cfg.rms_decay * *s + (1.0 - cfg.rms_decay) * gi * gi;
                    *zi -= cfg.step * gi / (*s + cfg.rms_eps).sqrt();
                });
            }
            (LatentOptimizer::PlainGd, true) => {
                let gnorm2: Vec<f64> = g.rows().into_iter().map(|row| row.dot(&row)).collect();
                let current: Vec<f64> = batch.losses.iter().map(|l| l * norm).collect();
                let mut pending: Vec<usize> = (0..r).filter(|&i| gnorm2[i] > 0.0 && steps[i] > 0.0).collect();
                for _ in 0..MAX_BACKTRACKS {
                    if pending.is_empty() {
                        break;
                    }
                    let mut cand = Array2::zeros((pending.len(), z.ncols()));
                    for (c, &i) in pending.iter().enumerate() {
                        let mut row = cand.row_mut(c);
                        row.assign(&z.row(i));
                        row.scaled_add(-steps[i], &g.row(i));
                    }
                    let trial = evaluate(op, y, gen, &cand)?;
                    let mut still = Vec::new();
                    for (c, &i) in pending.iter().enumerate() {
                        if trial.losses[c] * norm <= current[i] - ARMIJO_C * steps[i] * gnorm2[i] {
                            z.row_mut(i).assign(&cand.row(c));
                            steps[i] = (steps[i] * 2.0).min(MAX_STEP);
                        } else {
                            steps[i] *= 0.5;
                            still.push(i);
                        }
                    }
                    pending = still;
                }
            }
        }
        batch = evaluate(op, y, gen, &z)?;
        history.push(batch.losses.clone());
        for i in 0..r {
            if batch.losses[i] < best[i] {
                best[i] = batch.losses[i];
                best_z.row_mut(i).assign(&z.row(i));
            }
        }
    }
    let winner = (0..r).fold(0, |w, i| if best[i] < best[w] { i } else { w });
    let z_star = best_z.row(winner).to_owned();
    Ok(GanEstimate {
        estimate: gen.channel(&z_star)?,
        z: z_star,
        loss: best[winner],
        restart_losses: best,
        initial_losses,
        history,
    })
}
