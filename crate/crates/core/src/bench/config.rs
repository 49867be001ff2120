use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ClusterRayConfig;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, InversionConfig, LatentOptimizer};
use crate::measurement::TransceiverConfig;
use crate::wgan::WganConfig;

/// Channel parameters swept at test time while the generator stays fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralizationGrid {
    pub clusters: Vec<usize>,
    pub rays: Vec<usize>,
    pub trials: usize,
}

impl Default for GeneralizationGrid {
    fn default() -> Self {
        Self { clusters: vec![4, 6, 8, 10], rays: vec![1, 2, 4], trials: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub epochs: usize,
    pub samples: usize,
    pub batch_size: usize,
}

impl AblationPoint {
    pub fn label(&self) -> String {
        format!("e{}-d{}-b{}", self.epochs, self.samples, self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub points: Vec<AblationPoint>,
    /// Held-out channels evaluated per trained generator.
    pub test_channels: usize,
    pub snr_db: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let p = |epochs, samples, batch_size| AblationPoint { epochs, samples, batch_size };
        Self {
            points: vec![p(100, 2000, 64), p(500, 500, 64), p(500, 1000, 64), p(500, 2000, 64), p(500, 2000, 200)],
            test_channels: 100,
            snr_db: -5.0,
        }
    }
}

/// Everything a benchmark run needs; JSON with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub channel: ClusterRayConfig,
    pub transceiver: TransceiverConfig,
    pub wgan: WganConfig,
    pub inversion: InversionConfig,
    /// Training set size for the generator.
    pub train_samples: usize,
    /// Channels behind the LMMSE sample covariance (a prefix of the
    /// training stream).
    pub covariance_samples: usize,
    /// Pilot frames of the fully digital LS/LMMSE baseline; 0 means `2 N_t`.
    pub baseline_frames: usize,
    pub omp_sparsity: usize,
    pub snr_grid_db: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Fixed SNR of the pilot-ratio sweep.
    pub pilot_snr_db: f64,
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub generalization: GeneralizationGrid,
    pub ablation: AblationConfig,
    pub tail_trials: usize,
    /// Generated channels compared against real ones when picking the
    /// best checkpoint.
    pub stat_match_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 16x4 URA link, 16 subcarriers, one receive RF chain.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            channel: ClusterRayConfig::default(),
            transceiver: TransceiverConfig::default(),
            wgan: WganConfig { batch_size: 64, checkpoint_every: 50, ..WganConfig::default() },
            inversion: InversionConfig::default(),
            train_samples: 2000,
            covariance_samples: 2000,
            baseline_frames: 0,
            omp_sparsity: 8,
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            eta_grid: vec![0.3, 0.5, 0.7, 1.0],
            pilot_snr_db: -5.0,
            trials: 100,
            estimators: vec![EstimatorKind::Gan, EstimatorKind::Ls, EstimatorKind::Lmmse, EstimatorKind::Omp],
            master_seed: 1,
            output_dir: PathBuf::from("out"),
            generalization: GeneralizationGrid::default(),
            ablation: AblationConfig::default(),
            tail_trials: 100_000,
            stat_match_samples: 500,
        }
    }

    /// 64x16 link over 64 subcarriers with 20 clusters of 2 rays, a 5000
    /// channel training set and 3000 epochs. Not meant for CI.
    pub fn full_scale() -> Self {
        let channel = ClusterRayConfig {
            n_clusters: 20,
            n_rays: 2,
            n_tx_h: 8,
            n_tx_v: 8,
            n_rx_h: 4,
            n_rx_v: 4,
            n_subcarriers: 64,
            n_taps: 16,
            ..ClusterRayConfig::default()
        };
        Self {
            name: "full-scale".into(),
            channel,
            transceiver: TransceiverConfig { n_tx: 64, n_rx: 16, n_tx_rf: 16, n_rx_rf: 1, n_streams: 16, n_f: 64, n_frames: 4 },
            wgan: WganConfig { epochs: 3000, batch_size: 200, latent_dim: 15, checkpoint_every: 100, ..WganConfig::default() },
            train_samples: 5000,
            covariance_samples: 5000,
            omp_sparsity: 40,
            generalization: GeneralizationGrid { clusters: vec![10, 15, 20, 25], rays: vec![1, 2, 4, 8], trials: 100 },
            ..Self::desk()
        }
    }

    /// Single-subcarrier, closely spaced (0.1 wavelength) variant of
    /// [`Self::full_scale`] for the cluster and ray generalization study.
    pub fn full_scale_narrowband() -> Self {
        let base = Self::full_scale();
        let channel = ClusterRayConfig { n_subcarriers: 1, n_taps: 1, antenna_spacing_wavelengths: 0.1, ..base.channel };
        Self {
            name: "full-scale-narrowband".into(),
            channel,
            transceiver: TransceiverConfig { n_f: 1, ..base.transceiver },
            ..base
        }
    }

    /// Tiny link for fast end-to-end checks.
    pub fn smoke() -> Self {
        let channel = ClusterRayConfig {
            n_clusters: 3,
            n_rays: 2,
            n_tx_h: 2,
            n_tx_v: 2,
            n_rx_h: 2,
            n_rx_v: 1,
            n_subcarriers: 4,
            n_taps: 2,
            ..ClusterRayConfig::default()
        };
        Self {
            name: "smoke".into(),
            channel,
            transceiver: TransceiverConfig { n_tx: 4, n_rx: 2, n_tx_rf: 2, n_rx_rf: 1, n_streams: 2, n_f: 4, n_frames: 4 },
            wgan: WganConfig {
                epochs: 5,
                batch_size: 20,
                latent_dim: 4,
                generator_hidden: vec![16],
                critic_hidden: vec![16],
                checkpoint_every: 5,
                ..WganConfig::default()
            },
            inversion: InversionConfig {
                restarts: 2,
                iterations: 20,
                optimizer: LatentOptimizer::PlainGd,
                ..InversionConfig::default()
            },
            train_samples: 100,
            covariance_samples: 100,
            omp_sparsity: 3,
            snr_grid_db: vec![0.0, 10.0],
            eta_grid: vec![0.5, 1.0],
            pilot_snr_db: 0.0,
            trials: 4,
            generalization: GeneralizationGrid { clusters: vec![2, 3], rays: vec![1, 2], trials: 3 },
            ablation: AblationConfig {
                points: vec![AblationPoint { epochs: 2, samples: 60, batch_size: 20 }],
                test_channels: 3,
                snr_db: 0.0,
            },
            tail_trials: 10_000,
            stat_match_samples: 50,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full-scale" => Some(Self::full_scale()),
            "full-scale-narrowband" => Some(Self::full_scale_narrowband()),
            "smoke" => Some(Self::smoke()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::InvalidConfig(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn baseline_frame_count(&self) -> usize {
        if self.baseline_frames == 0 {
            2 * self.transceiver.n_tx
        } else {
            self.baseline_frames
        }
    }

    /// Fully digital transceiver seeing the same channel.
    pub fn baseline_transceiver(&self) -> TransceiverConfig {
        let t = &self.transceiver;
        TransceiverConfig::fully_digital(t.n_tx, t.n_rx, t.n_f, self.baseline_frame_count())
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.transceiver.validate()?;
        self.wgan.validate()?;
        self.inversion.validate()?;
        if self.channel.dims() != self.transceiver.channel_dims() {
            return Err(Error::InvalidConfig(format!(
                "channel dims {:?} disagree with transceiver dims {:?}",
                self.channel.dims(),
                self.transceiver.channel_dims()
            )));
        }
        if self.snr_grid_db.is_empty() || self.eta_grid.is_empty() {
            return Err(Error::InvalidConfig("snr and pilot-ratio grids must be nonempty".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidConfig("snr grid contains NaN".into()));
        }
        if let Some(e) = self.eta_grid.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidConfig(format!("pilot ratio {e} outside (0, 1]")));
        }
        if self.trials == 0 || self.generalization.trials == 0 || self.ablation.test_channels == 0 {
            return Err(Error::InvalidConfig("trial counts must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        if self.omp_sparsity == 0 {
            return Err(Error::InvalidConfig("OMP sparsity must be at least 1".into()));
        }
        if self.train_samples == 0 || self.covariance_samples == 0 {
            return Err(Error::InvalidConfig("sample counts must be at least 1".into()));
        }
        if self.ablation.points.iter().any(|p| p.epochs == 0 || p.samples < p.batch_size || p.batch_size == 0) {
            return Err(Error::InvalidConfig("each ablation point needs epochs >= 1 and samples >= batch size".into()));
        }
        Ok(())
    }
}
