use rayon::prelude::*;

use crate::bench::config::{AblationPoint, ExperimentConfig};
use crate::bench::result::{Outcome, SweepResult, SweepRow};
use crate::channel::{generate_dataset, sample_channel, ChannelDataset, ChannelRealization, ClusterRayConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    nmse_ratio, CovarianceSource, Estimator, EstimatorInput, EstimatorKind, Gan, Lmmse, Ls, Omp,
};
use crate::measurement::{
    add_awgn, build_operator, identity_networks, sample_phase_networks, sample_pilots, MeasurementOperator,
    ReceivedSignal,
};
use crate::numeric::CMatrix;
use crate::seed::{rng_for, TAG_ESTIMATOR, TAG_NOISE, TAG_SCENARIO, TAG_STATS, TAG_TEST_CHANNEL};
use crate::wgan::{sample_channels, stat_match_report, train_with_hook, Generator, TrainingLog, WganConfig};

/// Experiment identifiers mixed into noise and estimator seeds.
const EXP_SNR: u64 = 1;
const EXP_PILOT: u64 = 2;
const EXP_GENERALIZATION: u64 = 3;
const EXP_ABLATION: u64 = 4;
const EXP_SINGLE: u64 = 5;

/// Learned or estimated side information the estimators need.
#[derive(Debug, Clone, Default)]
pub struct Priors {
    pub generator: Option<Generator>,
    /// Shrunk sample covariance for LMMSE.
    pub covariance: Option<CMatrix>,
}

impl Priors {
    /// Fails with a config error when a requested estimator lacks its prior.
    pub fn check(&self, estimators: &[EstimatorKind]) -> Result<()> {
        if estimators.contains(&EstimatorKind::Gan) && self.generator.is_none() {
            return Err(Error::InvalidConfig("GAN estimator requested but no generator checkpoint was given".into()));
        }
        if estimators.contains(&EstimatorKind::Lmmse) && self.covariance.is_none() {
            return Err(Error::InvalidConfig("LMMSE estimator requested but no channel covariance is available".into()));
        }
        Ok(())
    }
}

pub fn training_dataset(cfg: &ExperimentConfig) -> Result<ChannelDataset> {
    generate_dataset(&cfg.channel, cfg.train_samples, cfg.master_seed)
}

/// Shrunk sample covariance over the first `covariance_samples` channels of
/// the training stream.
pub fn covariance_prior(cfg: &ExperimentConfig) -> Result<CMatrix> {
    let ds = generate_dataset(&cfg.channel, cfg.covariance_samples, cfg.master_seed)?;
    CovarianceSource::Dataset(&ds).resolve()
}

#[derive(Debug, Clone)]
pub struct TrainedGenerator {
    pub generator: Generator,
    /// Checkpoint with the smallest statistical discrepancy, if any were
    /// scored: `(epoch, generator, max discrepancy)`.
    pub best: Option<(usize, Generator, f64)>,
    pub log: TrainingLog,
}

/// Trains on `dataset`, scoring a generated batch against the real set every
/// `checkpoint_every` epochs.
pub fn train_generator(
    dataset: &ChannelDataset,
    wgan: &WganConfig,
    stat_samples: usize,
    master_seed: u64,
) -> Result<TrainedGenerator> {
    let real: Vec<ChannelRealization> = dataset.realizations.iter().take(stat_samples.max(1)).cloned().collect();
    let mut best: Option<(usize, Generator, f64)> = None;
    let out = train_with_hook(dataset, wgan, master_seed, |epoch, g| {
        let mut rng = rng_for(master_seed, &[TAG_STATS, epoch as u64]);
        let fake = sample_channels(g, real.len(), &mut rng)?;
        let score = stat_match_report(&fake, &real)?.max_discrepancy();
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((epoch, g.clone(), score));
        }
        Ok(())
    })?;
    Ok(TrainedGenerator { generator: out.generator, best, log: out.log })
}

/// One Monte Carlo draw: a test channel and the operators observing it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: ChannelRealization,
    pub hybrid: MeasurementOperator,
    /// Fully digital baseline; present when LS or LMMSE is requested.
    pub digital: Option<MeasurementOperator>,
}

/// Channel from `(TAG_TEST_CHANNEL, group, trial)`, operators from
/// `(TAG_SCENARIO, trial)`, so SNR points share draws.
pub fn draw_scenario(
    cfg: &ExperimentConfig,
    channel: &ClusterRayConfig,
    group: u64,
    trial: u64,
    eta: f64,
    with_digital: bool,
) -> Result<Scenario> {
    let truth = sample_channel(channel, &mut rng_for(cfg.master_seed, &[TAG_TEST_CHANNEL, group, trial]))?;
    let mut rng = rng_for(cfg.master_seed, &[TAG_SCENARIO, trial]);
    let t = &cfg.transceiver;
    let pilots = sample_pilots(t, eta, &mut rng)?;
    let (f, w) = sample_phase_networks(t, &mut rng)?;
    let hybrid = build_operator(pilots, f, w, t)?;
    let digital = if with_digital {
        let bt = cfg.baseline_transceiver();
        let pilots = sample_pilots(&bt, eta, &mut rng)?;
        let (f, w) = identity_networks(&bt)?;
        Some(build_operator(pilots, f, w, &bt)?)
    } else {
        None
    };
    Ok(Scenario { truth, hybrid, digital })
}

fn needs_digital(estimators: &[EstimatorKind]) -> bool {
    estimators.iter().any(|e| matches!(e, EstimatorKind::Ls | EstimatorKind::Lmmse))
}

/// Noisy observations of one scenario at one SNR.
pub struct Observation {
    pub hybrid: ReceivedSignal,
    pub digital: Option<ReceivedSignal>,
}

pub fn observe(cfg: &ExperimentConfig, sc: &Scenario, snr_db: f64, exp: u64, point: u64, trial: u64) -> Result<Observation> {
    let mut rng = rng_for(cfg.master_seed, &[TAG_NOISE, exp, point, trial]);
    let hybrid = add_awgn(&sc.hybrid, &sc.hybrid.apply_forward(&sc.truth)?, snr_db, &mut rng)?;
    let digital = match &sc.digital {
        Some(op) => Some(add_awgn(op, &op.apply_forward(&sc.truth)?, snr_db, &mut rng)?),
        None => None,
    };
    Ok(Observation { hybrid, digital })
}

/// Runs one estimator; ill-posed failures become `Err(IllPosed)` for the
/// caller to record.
pub fn run_estimator(
    cfg: &ExperimentConfig,
    priors: &Priors,
    kind: EstimatorKind,
    sc: &Scenario,
    obs: &Observation,
    rng: &mut crate::seed::Rng,
) -> Result<(ChannelRealization, f64)> {
    let (operator, received) = match kind {
        EstimatorKind::Gan | EstimatorKind::Omp => (&sc.hybrid, &obs.hybrid),
        EstimatorKind::Ls | EstimatorKind::Lmmse => match (&sc.digital, &obs.digital) {
            (Some(op), Some(y)) => (op, y),
            _ => return Err(Error::InvalidConfig("digital baseline was not drawn".into())),
        },
    };
    let input = EstimatorInput { received, operator };
    let missing = || Error::InvalidConfig(format!("missing prior for {}", kind.id()));
    let (estimate, _) = match kind {
        EstimatorKind::Gan => {
            let generator = priors.generator.as_ref().ok_or_else(missing)?;
            Gan { generator, config: &cfg.inversion }.estimate(&input, rng)?
        }
        EstimatorKind::Ls => Ls.estimate(&input, rng)?,
        EstimatorKind::Lmmse => {
            let covariance = priors.covariance.as_ref().ok_or_else(missing)?;
            Lmmse { covariance }.estimate(&input, rng)?
        }
        EstimatorKind::Omp => Omp { sparsity: cfg.omp_sparsity }.estimate(&input, rng)?,
    };
    let residual = input.residual(&estimate)?;
    Ok((estimate, residual))
}

/// One row group of a sweep.
#[derive(Debug, Clone)]
struct Point {
    sweep_param: String,
    value: String,
    snr_db: f64,
    eta: f64,
    channel: ClusterRayConfig,
    group: u64,
    /// Index mixed into noise and estimator seeds.
    seed_index: u64,
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

fn run_points(
    cfg: &ExperimentConfig,
    priors: &Priors,
    experiment: &str,
    exp: u64,
    points: &[Point],
    estimators: &[EstimatorKind],
    trials: usize,
) -> Result<SweepResult> {
    priors.check(estimators)?;
    let digital = needs_digital(estimators);
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..trials).map(move |t| (p, t))).collect();
    // collect() keeps job order, so results do not depend on scheduling
    let outcomes: Vec<Vec<Outcome>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let pt = &points[p];
            let sc = draw_scenario(cfg, &pt.channel, pt.group, t as u64, pt.eta, digital)?;
            let obs = observe(cfg, &sc, pt.snr_db, exp, pt.seed_index, t as u64)?;
            let mut rng = rng_for(cfg.master_seed, &[TAG_ESTIMATOR, exp, pt.seed_index, t as u64]);
            estimators
                .iter()
                .map(|&kind| match run_estimator(cfg, priors, kind, &sc, &obs, &mut rng) {
                    Ok((est, _)) => Ok(Outcome::Ratio(nmse_ratio(&sc.truth, &est)?)),
                    Err(Error::IllPosed(_)) => Ok(Outcome::IllPosed),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(points.len() * estimators.len());
    for (p, pt) in points.iter().enumerate() {
        let block = &outcomes[p * trials..(p + 1) * trials];
        for (e, &kind) in estimators.iter().enumerate() {
            rows.push(SweepRow {
                experiment: experiment.into(),
                sweep_param: pt.sweep_param.clone(),
                value: pt.value.clone(),
                estimator: kind,
                snr_db: pt.snr_db,
                eta: pt.eta,
                outcomes: block.iter().map(|o| o[e]).collect(),
            });
        }
    }
    Ok(SweepResult { rows })
}

/// Every configured estimator at each SNR of the grid, full pilots.
pub fn run_snr_sweep(cfg: &ExperimentConfig, priors: &Priors) -> Result<SweepResult> {
    cfg.validate()?;
    let points: Vec<Point> = cfg
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| Point {
            sweep_param: "snr_db".into(),
            value: fmt_value(snr),
            snr_db: snr,
            eta: 1.0,
            channel: cfg.channel.clone(),
            group: 0,
            seed_index: i as u64,
        })
        .collect();
    run_points(cfg, priors, "snr", EXP_SNR, &points, &cfg.estimators, cfg.trials)
}

/// Every configured estimator at each pilot ratio, fixed SNR.
pub fn run_pilot_sweep(cfg: &ExperimentConfig, priors: &Priors) -> Result<SweepResult> {
    cfg.validate()?;
    let points: Vec<Point> = cfg
        .eta_grid
        .iter()
        .enumerate()
        .map(|(i, &eta)| Point {
            sweep_param: "eta".into(),
            value: fmt_value(eta),
            snr_db: cfg.pilot_snr_db,
            eta,
            channel: cfg.channel.clone(),
            group: 0,
            seed_index: i as u64,
        })
        .collect();
    run_points(cfg, priors, "pilots", EXP_PILOT, &points, &cfg.estimators, cfg.trials)
}

/// GAN estimation on channels with other cluster and ray counts than the
/// generator was trained on. The configured channel is the training point;
/// each test value replaces one of its two counts.
pub fn run_generalization_sweep(cfg: &ExperimentConfig, priors: &Priors) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = &cfg.generalization;
    let variants = grid
        .clusters
        .iter()
        .map(|&c| ("clusters", c, ClusterRayConfig { n_clusters: c, ..cfg.channel.clone() }))
        .chain(grid.rays.iter().map(|&r| ("rays", r, ClusterRayConfig { n_rays: r, ..cfg.channel.clone() })));
    let mut points = Vec::new();
    for (g, (param, value, channel)) in variants.enumerate() {
        channel.validate()?;
        for &snr in &cfg.snr_grid_db {
            points.push(Point {
                sweep_param: param.into(),
                value: value.to_string(),
                snr_db: snr,
                eta: 1.0,
                channel: channel.clone(),
                group: g as u64 + 1,
                seed_index: points.len() as u64,
            });
        }
    }
    run_points(cfg, priors, "generalization", EXP_GENERALIZATION, &points, &[EstimatorKind::Gan], grid.trials)
}

/// Trains one generator per ablation point and scores it on held-out
/// channels at the ablation SNR.
pub fn run_training_ablation(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ab = &cfg.ablation;
    let trained: Vec<(AblationPoint, Generator)> = ab
        .points
        .par_iter()
        .map(|p| {
            let ds = generate_dataset(&cfg.channel, p.samples, cfg.master_seed)?;
            let wgan = WganConfig { epochs: p.epochs, batch_size: p.batch_size, checkpoint_every: 0, ..cfg.wgan.clone() };
            Ok((*p, train_generator(&ds, &wgan, cfg.stat_match_samples, cfg.master_seed)?.generator))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, (p, generator)) in trained.into_iter().enumerate() {
        let point = Point {
            sweep_param: "training".into(),
            value: p.label(),
            snr_db: ab.snr_db,
            eta: 1.0,
            channel: cfg.channel.clone(),
            group: 0,
            seed_index: i as u64,
        };
        let priors = Priors { generator: Some(generator), covariance: None };
        rows.extend(
            run_points(cfg, &priors, "ablation", EXP_ABLATION, &[point], &[EstimatorKind::Gan], ab.test_channels)?.rows,
        );
    }
    Ok(SweepResult { rows })
}

/// Outcome of one estimator in [`estimate_once`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleEstimate {
    pub estimator: EstimatorKind,
    /// `None` when ill-posed.
    pub nmse_db: Option<f64>,
    pub residual: Option<f64>,
}

/// Every configured estimator on a single drawn scenario.
pub fn estimate_once(cfg: &ExperimentConfig, priors: &Priors, snr_db: f64, eta: f64, trial: u64) -> Result<Vec<SingleEstimate>> {
    cfg.validate()?;
    priors.check(&cfg.estimators)?;
    let sc = draw_scenario(cfg, &cfg.channel, 0, trial, eta, needs_digital(&cfg.estimators))?;
    let obs = observe(cfg, &sc, snr_db, EXP_SINGLE, 0, trial)?;
    let mut rng = rng_for(cfg.master_seed, &[TAG_ESTIMATOR, EXP_SINGLE, 0, trial]);
    cfg.estimators
        .iter()
        .map(|&kind| match run_estimator(cfg, priors, kind, &sc, &obs, &mut rng) {
            Ok((est, residual)) => Ok(SingleEstimate {
                estimator: kind,
                nmse_db: Some(10.0 * nmse_ratio(&sc.truth, &est)?.log10()),
                residual: Some(residual),
            }),
            Err(Error::IllPosed(_)) => Ok(SingleEstimate { estimator: kind, nmse_db: None, residual: None }),
            Err(e) => Err(e),
        })
        .collect()
}
