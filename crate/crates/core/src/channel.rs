//! Geometric cluster-ray channel model for frequency-selective MIMO links.
//!
//! Each cluster is pinned to one delay tap; its rays scatter around the
//! cluster's departure and arrival angles with a Gaussian spread and add
//! rank-one terms `alpha * a_r * a_t^H` to that tap. Taps are mapped to
//! per-subcarrier matrices with a DFT over the tap axis.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{CMatrix, CVector, ZERO};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterRayConfig {
    pub n_clusters: usize,
    pub n_rays: usize,
    /// Standard deviation of the per-ray angle offsets, in degrees.
    pub angle_spread_deg: f64,
    pub n_tx_h: usize,
    pub n_tx_v: usize,
    pub n_rx_h: usize,
    pub n_rx_v: usize,
    pub n_subcarriers: usize,
    pub n_taps: usize,
    /// Exponential power-delay profile rate: tap `l` has power `exp(-decay * l)`.
    pub delay_profile_decay: f64,
    pub antenna_spacing_wavelengths: f64,
    /// Path gains are redrawn when `|alpha|` exceeds this many standard deviations.
    pub gain_truncation_sigma: f64,
}

impl Default for ClusterRayConfig {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            n_rays: 2,
            angle_spread_deg: 5.0,
            n_tx_h: 4,
            n_tx_v: 4,
            n_rx_h: 2,
            n_rx_v: 2,
            n_subcarriers: 16,
            n_taps: 4,
            delay_profile_decay: 0.5,
            antenna_spacing_wavelengths: 0.5,
            gain_truncation_sigma: 6.0,
        }
    }
}

impl ClusterRayConfig {
    pub fn n_tx(&self) -> usize {
        self.n_tx_h * self.n_tx_v
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx_h * self.n_rx_v
    }

    pub fn dims(&self) -> ChannelDims {
        ChannelDims { n_f: self.n_subcarriers, n_rx: self.n_rx(), n_tx: self.n_tx() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clusters", self.n_clusters),
            ("n_rays", self.n_rays),
            ("n_tx_h", self.n_tx_h),
            ("n_tx_v", self.n_tx_v),
            ("n_rx_h", self.n_rx_h),
            ("n_rx_v", self.n_rx_v),
            ("n_subcarriers", self.n_subcarriers),
            ("n_taps", self.n_taps),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.n_taps > self.n_subcarriers {
            return Err(Error::InvalidConfig(format!(
                "n_taps {} exceeds n_subcarriers {}",
                self.n_taps, self.n_subcarriers
            )));
        }
        let scalars = [
            ("angle_spread_deg", self.angle_spread_deg),
            ("delay_profile_decay", self.delay_profile_decay),
            ("antenna_spacing_wavelengths", self.antenna_spacing_wavelengths),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(format!("{name} must be finite and nonnegative")));
        }
        if !(self.gain_truncation_sigma > 0.0) {
            return Err(Error::InvalidConfig("gain_truncation_sigma must be positive".into()));
        }
        Ok(())
    }

    /// Tap index of cluster `i`.
    pub fn cluster_tap(&self, i: usize) -> usize {
        i * self.n_taps / self.n_clusters
    }

    pub fn tap_power(&self, l: usize) -> f64 {
        (-self.delay_profile_decay * l as f64).exp()
    }

    /// Normalization constant making `E ||H_k||_F^2 = N_r N_t` for unit-power gains.
    pub fn gamma(&self) -> f64 {
        self.n_rays as f64 * (0..self.n_clusters).map(|i| self.tap_power(self.cluster_tap(i))).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDims {
    pub n_f: usize,
    pub n_rx: usize,
    pub n_tx: usize,
}

impl ChannelDims {
    /// Complex entries per realization.
    pub fn len(&self) -> usize {
        self.n_f * self.n_rx * self.n_tx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of `H_k[r, t]` in the stacked vector.
    pub fn index(&self, k: usize, r: usize, t: usize) -> usize {
        (k * self.n_rx + r) * self.n_tx + t
    }
}

/// One channel draw: `H_k` for every subcarrier, optionally with the taps
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub per_subcarrier: Vec<CMatrix>,
    pub taps: Option<Vec<CMatrix>>,
}

impl ChannelRealization {
    pub fn zeros(dims: ChannelDims) -> Self {
        Self {
            per_subcarrier: vec![Array2::from_elem((dims.n_rx, dims.n_tx), ZERO); dims.n_f],
            taps: None,
        }
    }

    pub fn from_taps(taps: Vec<CMatrix>, n_f: usize) -> Result<Self> {
        let per_subcarrier = taps_to_subcarriers(&taps, n_f)?;
        Ok(Self { per_subcarrier, taps: Some(taps) })
    }

    pub fn dims(&self) -> ChannelDims {
        let (n_rx, n_tx) = self.per_subcarrier.first().map(|h| h.dim()).unwrap_or((0, 0));
        ChannelDims { n_f: self.per_subcarrier.len(), n_rx, n_tx }
    }

    /// Stacks `H_0, H_1, ...`, each row-major: the estimation target vector.
    pub fn to_vector(&self) -> CVector {
        self.per_subcarrier.iter().flat_map(|h| h.iter().copied()).collect()
    }

    pub fn from_vector(dims: ChannelDims, v: &CVector) -> Result<Self> {
        if v.len() != dims.len() {
            return Err(Error::Shape(format!("vector length {} != channel size {}", v.len(), dims.len())));
        }
        let block = dims.n_rx * dims.n_tx;
        let per_subcarrier = (0..dims.n_f)
            .map(|k| {
                Array2::from_shape_vec(
                    (dims.n_rx, dims.n_tx),
                    v.slice(ndarray::s![k * block..(k + 1) * block]).to_vec(),
                )
                .expect("block shape")
            })
            .collect();
        Ok(Self { per_subcarrier, taps: None })
    }

    pub fn energy(&self) -> f64 {
        self.per_subcarrier.iter().flat_map(|h| h.iter()).map(|z| z.norm_sqr()).sum()
    }

    pub fn check_dims(&self, dims: ChannelDims) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::Shape(format!("channel dims {:?} != expected {:?}", self.dims(), dims)));
        }
        Ok(())
    }
}

/// Normalized steering vector of a uniform rectangular array.
///
/// Element `(p, q)` (horizontal index `p`, vertical `q`) sits at position
/// `q * n_h + p` and has phase `2 pi d (p sin(az) sin(el) + q cos(el))`.
pub fn array_response_ura(azimuth: f64, elevation: f64, n_h: usize, n_v: usize, spacing: f64) -> CVector {
    let norm = 1.0 / ((n_h * n_v) as f64).sqrt();
    let u = azimuth.sin() * elevation.sin();
    let v = elevation.cos();
    let mut out = Array1::from_elem(n_h * n_v, ZERO);
    for q in 0..n_v {
        for p in 0..n_h {
            let phase = 2.0 * PI * spacing * (p as f64 * u + q as f64 * v);
            out[q * n_h + p] = Complex64::from_polar(norm, phase);
        }
    }
    out
}

fn complex_gain(rng: &mut Rng, truncation: f64) -> Complex64 {
    loop {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let g = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        if g.norm() <= truncation {
            return g;
        }
    }
}

/// Draws the `L_c` tap matrices of one channel realization.
pub fn sample_geometric_taps(cfg: &ClusterRayConfig, rng: &mut Rng) -> Result<Vec<CMatrix>> {
    cfg.validate()?;
    let (n_rx, n_tx) = (cfg.n_rx(), cfg.n_tx());
    let amplitude = ((n_rx * n_tx) as f64 / cfg.gamma()).sqrt();
    let spread = cfg.angle_spread_deg.to_radians();
    let d = cfg.antenna_spacing_wavelengths;
    let mut taps = vec![Array2::from_elem((n_rx, n_tx), ZERO); cfg.n_taps];
    for i in 0..cfg.n_clusters {
        let l = cfg.cluster_tap(i);
        let tap_amp = amplitude * cfg.tap_power(l).sqrt();
        let az_t = rng.random_range(-PI..PI);
        let el_t = rng.random_range(0.0..PI);
        let az_r = rng.random_range(-PI..PI);
        let el_r = rng.random_range(0.0..PI);
        for _ in 0..cfg.n_rays {
            let mut jitter = || -> f64 { spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) };
            let (da_t, de_t, da_r, de_r) = (jitter(), jitter(), jitter(), jitter());
            let alpha = complex_gain(rng, cfg.gain_truncation_sigma) * tap_amp;
            let a_t = array_response_ura(az_t + da_t, el_t + de_t, cfg.n_tx_h, cfg.n_tx_v, d);
            let a_r = array_response_ura(az_r + da_r, el_r + de_r, cfg.n_rx_h, cfg.n_rx_v, d);
            let tap = &mut taps[l];
            for r in 0..n_rx {
                let ar = alpha * a_r[r];
                for t in 0..n_tx {
                    tap[(r, t)] += ar * a_t[t].conj();
                }
            }
        }
    }
    Ok(taps)
}

/// `H_k = sum_l C_l exp(-i 2 pi k l / n_f)`.
pub fn taps_to_subcarriers(taps: &[CMatrix], n_f: usize) -> Result<Vec<CMatrix>> {
    if taps.is_empty() || n_f == 0 {
        return Err(Error::InvalidDimension("need at least one tap and one subcarrier".into()));
    }
    if taps.len() > n_f {
        return Err(Error::Shape(format!("{} taps exceed {} subcarriers", taps.len(), n_f)));
    }
    let dim = taps[0].dim();
    if taps.iter().any(|t| t.dim() != dim) {
        return Err(Error::Shape("taps have mismatched dimensions".into()));
    }
    Ok((0..n_f)
        .map(|k| {
            let mut h = Array2::from_elem(dim, ZERO);
            for (l, c) in taps.iter().enumerate() {
                let m = (k * l) % n_f;
                let w = Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n_f as f64);
                h.zip_mut_with(c, |acc, &x| *acc += w * x);
            }
            h
        })
        .collect())
}

pub fn sample_channel(cfg: &ClusterRayConfig, rng: &mut Rng) -> Result<ChannelRealization> {
    let taps = sample_geometric_taps(cfg, rng)?;
    ChannelRealization::from_taps(taps, cfg.n_subcarriers)
}

/// A reproducible collection of channel draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub config: ClusterRayConfig,
    pub realizations: Vec<ChannelRealization>,
    pub master_seed: u64,
}

impl ChannelDataset {
    pub fn dims(&self) -> ChannelDims {
        self.config.dims()
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    /// Mean `||H_k||_F^2 / (N_r N_t)` over all realizations and subcarriers.
    pub fn mean_normalized_power(&self) -> f64 {
        let dims = self.dims();
        let total: f64 = self.realizations.iter().map(|r| r.energy()).sum();
        total / (self.len() * dims.len()) as f64
    }
}

/// Draws `count` realizations; realization `i` uses its own stream derived
/// from `(master_seed, i)`, so the result does not depend on thread count.
/// Taps are not retained.
pub fn generate_dataset(cfg: &ClusterRayConfig, count: usize, master_seed: u64) -> Result<ChannelDataset> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::InvalidConfig("dataset count must be at least 1".into()));
    }
    let realizations = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(master_seed, &[seed::TAG_DATASET, i as u64]);
            sample_channel(cfg, &mut rng).map(|mut r| {
                r.taps = None;
                r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelDataset { config: cfg.clone(), realizations, master_seed })
}
