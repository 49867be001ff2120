//! Channel estimators and the NMSE metric.
//!
//! Every estimator maps a noisy observation and its measurement operator to
//! a channel estimate through [`Estimator::estimate`].

mod gan;
mod lmmse;
mod ls;
mod omp;

pub use gan::{estimate_gan, inversion_gradient, inversion_loss, GanEstimate, InversionConfig, LatentOptimizer};
pub use lmmse::{
    estimate_lmmse, gamma_blocks, gamma_dense_reference, sample_covariance, shrink_covariance, CovarianceSource,
    SHRINKAGE,
};
pub use ls::{estimate_ls, ls_gram_blocks};
pub use omp::{estimate_omp, omp_dictionary, omp_sensing_matrix, orthogonal_matching_pursuit, OmpResult, NULL_ATOM_RTOL};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, ReceivedSignal};
use crate::numeric::{vector_norm, CMatrix};
use crate::seed::Rng;
use crate::wgan::Generator;

/// CSV stand-in for an NMSE of minus infinity.
pub const NMSE_SENTINEL_DB: f64 = -200.0;

/// `||h - ĥ||^2 / ||h||^2`.
pub fn nmse_ratio(truth: &ChannelRealization, estimate: &ChannelRealization) -> Result<f64> {
    estimate.check_dims(truth.dims())?;
    let t = truth.to_vector();
    let den = t.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("NMSE of an all-zero channel".into()));
    }
    let e = estimate.to_vector();
    let num = t.iter().zip(e.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    Ok(num / den)
}

/// NMSE in dB; an exact estimate gives `-inf`.
pub fn nmse(truth: &ChannelRealization, estimate: &ChannelRealization) -> Result<f64> {
    Ok(10.0 * nmse_ratio(truth, estimate)?.log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Gan,
    Ls,
    Lmmse,
    Omp,
}

impl EstimatorKind {
    pub fn id(self) -> &'static str {
        match self {
            EstimatorKind::Gan => "gan",
            EstimatorKind::Ls => "ls",
            EstimatorKind::Lmmse => "lmmse",
            EstimatorKind::Omp => "omp",
        }
    }
}

/// What an estimator sees: the observation and the operator that made it.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub received: &'a ReceivedSignal,
    pub operator: &'a MeasurementOperator,
}

impl EstimatorInput<'_> {
    /// `||y - A ĥ||`.
    pub fn residual(&self, estimate: &ChannelRealization) -> Result<f64> {
        let fit = self.operator.apply_forward(estimate)?;
        Ok(vector_norm(&(&self.received.y - &fit)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub estimate: ChannelRealization,
    /// `None` when no ground truth was supplied.
    pub nmse_db: Option<f64>,
    pub residual: f64,
    /// Final measurement loss of every restart (GAN only).
    pub restart_losses: Vec<f64>,
}

pub trait Estimator {
    fn kind(&self) -> EstimatorKind;

    fn estimate(&self, input: &EstimatorInput<'_>, rng: &mut Rng) -> Result<(ChannelRealization, Vec<f64>)>;

    fn report(
        &self,
        input: &EstimatorInput<'_>,
        truth: Option<&ChannelRealization>,
        rng: &mut Rng,
    ) -> Result<EstimateReport> {
        let (estimate, restart_losses) = self.estimate(input, rng)?;
        let nmse_db = truth.map(|t| nmse(t, &estimate)).transpose()?;
        Ok(EstimateReport {
            estimator: self.kind(),
            residual: input.residual(&estimate)?,
            estimate,
            nmse_db,
            restart_losses,
        })
    }
}

pub struct Ls;

impl Estimator for Ls {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Ls
    }
    fn estimate(&self, input: &EstimatorInput<'_>, _: &mut Rng) -> Result<(ChannelRealization, Vec<f64>)> {
        Ok((estimate_ls(input.operator, input.received)?, Vec::new()))
    }
}

pub struct Lmmse<'a> {
    /// Channel covariance with shrinkage already applied.
    pub covariance: &'a CMatrix,
}

impl Estimator for Lmmse<'_> {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Lmmse
    }
    fn estimate(&self, input: &EstimatorInput<'_>, _: &mut Rng) -> Result<(ChannelRealization, Vec<f64>)> {
        Ok((estimate_lmmse(input.operator, input.received, self.covariance)?, Vec::new()))
    }
}

pub struct Omp {
    pub sparsity: usize,
}

impl Estimator for Omp {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Omp
    }
    fn estimate(&self, input: &EstimatorInput<'_>, _: &mut Rng) -> Result<(ChannelRealization, Vec<f64>)> {
        Ok((estimate_omp(input.operator, input.received, self.sparsity)?.estimate, Vec::new()))
    }
}

pub struct Gan<'a> {
    pub generator: &'a Generator,
    pub config: &'a InversionConfig,
}

impl Estimator for Gan<'_> {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Gan
    }
    fn estimate(&self, input: &EstimatorInput<'_>, rng: &mut Rng) -> Result<(ChannelRealization, Vec<f64>)> {
        let g = estimate_gan(input.operator, input.received, self.generator, self.config, rng)?;
        Ok((g.estimate, g.restart_losses))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelDims;
    use num_complex::Complex64;

    fn ch(vals: &[f64]) -> ChannelRealization {
        let dims = ChannelDims { n_f: 1, n_rx: 1, n_tx: vals.len() };
        ChannelRealization::from_vector(dims, &vals.iter().map(|&v| Complex64::new(v, -v)).collect()).unwrap()
    }

    #[test]
    fn nmse_reference_values() {
        let h = ch(&[1.0, 2.0, -3.0]);
        assert_eq!(nmse(&h, &h).unwrap(), f64::NEG_INFINITY);
        assert_eq!(nmse(&h, &ch(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(nmse(&h, &ch(&[2.0, 4.0, -6.0])).unwrap().abs() < 1e-12);
        assert!(matches!(nmse(&ch(&[0.0, 0.0]), &ch(&[1.0, 0.0])), Err(Error::UndefinedMetric(_))));
        assert!(nmse(&h, &ch(&[1.0])).is_err());
    }
}
