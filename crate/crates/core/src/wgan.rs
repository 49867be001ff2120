//! Weight-clipped Wasserstein GAN training on channel datasets.
//!
//! Training data are real feature vectors divided by one global scale so
//! their mean square is 1. The generator keeps that scale and multiplies it
//! back in whenever it emits channels.

use std::io::Write;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDataset, ChannelDims, ChannelRealization};
use crate::error::{Error, Result};
use crate::neural::{
    channel_to_real, clip_weights, mlp_specs, real_to_channel, rmsprop_step, Activation, Checkpoint, NetworkParams,
    RmsPropConfig, RmsPropState, LEAK,
};
use crate::numeric::{dft_matrix, CMatrix, ZERO};
use crate::seed::{rng_for, Rng, TAG_INIT, TAG_TRAIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WganConfig {
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub batch_size: usize,
    /// One epoch is one pass over the shuffled dataset in minibatches.
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Checkpoint hook period in epochs (0 disables the hook).
    pub checkpoint_every: usize,
    /// Record elapsed seconds in the log; off keeps logs reproducible.
    pub log_wall_time: bool,
}

impl Default for WganConfig {
    fn default() -> Self {
        Self {
            critic_steps: 5,
            batch_size: 200,
            epochs: 500,
            lr: 5e-5,
            clip: 0.01,
            latent_dim: 8,
            generator_hidden: vec![128, 512],
            critic_hidden: vec![256, 64],
            rms_decay: 0.9,
            rms_eps: 1e-8,
            checkpoint_every: 0,
            log_wall_time: false,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.critic_steps == 0 || self.batch_size == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidConfig("critic_steps, batch_size and latent_dim must be positive".into()));
        }
        if !(self.lr > 0.0 && self.clip > 0.0 && self.rms_eps > 0.0) || !(0.0..1.0).contains(&self.rms_decay) {
            return Err(Error::InvalidConfig(format!("invalid optimizer settings in {self:?}")));
        }
        if self.generator_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig { lr: self.lr, decay: self.rms_decay, eps: self.rms_eps }
    }

    pub fn generator_specs(&self, out_dim: usize) -> Vec<crate::neural::LayerSpec> {
        let mut w = vec![self.latent_dim];
        w.extend(&self.generator_hidden);
        w.push(out_dim);
        mlp_specs(&w, Activation::Relu, Activation::Linear)
    }

    pub fn critic_specs(&self, in_dim: usize) -> Vec<crate::neural::LayerSpec> {
        let mut w = vec![in_dim];
        w.extend(&self.critic_hidden);
        w.push(1);
        mlp_specs(&w, Activation::LeakyRelu(LEAK), Activation::Linear)
    }
}

/// Generator network plus the channel shape and output scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: NetworkParams,
    pub dims: ChannelDims,
    pub output_scale: f64,
}

impl Generator {
    pub fn new(net: NetworkParams, dims: ChannelDims, output_scale: f64) -> Result<Self> {
        if net.out_dim() != 2 * dims.len() {
            return Err(Error::Shape(format!(
                "generator emits {} features, channel needs {}",
                net.out_dim(),
                2 * dims.len()
            )));
        }
        Ok(Self { net, dims, output_scale })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.in_dim()
    }

    /// Scaled real features for a `batch x d` latent block.
    pub fn features(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.net.forward_batch(z)? * self.output_scale)
    }

    pub fn channel(&self, z: &Array1<f64>) -> Result<ChannelRealization> {
        let x = self.net.forward(z.view())? * self.output_scale;
        real_to_channel(self.dims, x.view())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { dims: self.dims, output_scale: self.output_scale, net: self.net.clone() }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        Self::new(ck.net, ck.dims, ck.output_scale)
    }
}

pub fn sample_latent(n: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(rng))
}

/// `z ~ N(0, I_d)` pushed through the generator.
pub fn sample_channels(generator: &Generator, n: usize, rng: &mut Rng) -> Result<Vec<ChannelRealization>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let z = sample_latent(n, generator.latent_dim(), rng);
    let x = generator.features(z.view())?;
    x.rows().into_iter().map(|r| real_to_channel(generator.dims, r)).collect()
}

/// Real feature matrix (`count x 2 N_f N_r N_t`) of a dataset.
pub fn dataset_features(ds: &ChannelDataset) -> Array2<f64> {
    let n = 2 * ds.dims().len();
    let mut out = Array2::zeros((ds.len(), n));
    for (mut row, r) in out.rows_mut().into_iter().zip(&ds.realizations) {
        row.assign(&channel_to_real(r));
    }
    out
}

/// Root mean square of all entries.
pub fn standardization_scale(x: ArrayView2<'_, f64>) -> f64 {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if ms > 0.0 {
        ms.sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    /// Mean over the epoch of `mean D(real) - mean D(fake)`.
    pub critic_objective: f64,
    pub gen_norm: f64,
    pub critic_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,critic_objective,gen_norm,critic_norm,seconds")?;
        for r in &self.rows {
            writeln!(w, "{},{:.9e},{:.9e},{:.9e},{:.3}", r.epoch, r.critic_objective, r.gen_norm, r.critic_norm, r.seconds)?;
        }
        Ok(())
    }
}

/// Networks, optimizer states and the training stream.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: NetworkParams,
    pub critic: NetworkParams,
    pub gen_opt: RmsPropState,
    pub critic_opt: RmsPropState,
    pub rng: Rng,
}

impl TrainState {
    /// He-initialized networks; the critic starts inside the clip box.
    pub fn init(data_dim: usize, cfg: &WganConfig, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = rng_for(master_seed, &[TAG_INIT]);
        let generator = NetworkParams::init_he(&cfg.generator_specs(data_dim), &mut init)?;
        let mut critic = NetworkParams::init_he(&cfg.critic_specs(data_dim), &mut init)?;
        clip_weights(&mut critic, cfg.clip)?;
        Ok(Self {
            gen_opt: RmsPropState::new(&generator),
            critic_opt: RmsPropState::new(&critic),
            generator,
            critic,
            rng: rng_for(master_seed, &[TAG_TRAIN]),
        })
    }
}

/// One critic update on a standardized real batch; returns the objective
/// `mean D(real) - mean D(G(z))` measured before the update.
pub fn critic_step(state: &mut TrainState, real: ArrayView2<'_, f64>, cfg: &WganConfig) -> Result<f64> {
    let m = real.nrows();
    if m == 0 {
        return Err(Error::InvalidConfig("empty real batch".into()));
    }
    let z = sample_latent(m, cfg.latent_dim, &mut state.rng);
    let fake = state.generator.forward_batch(z.view())?;
    let mut both = Array2::zeros((2 * m, real.ncols()));
    both.slice_mut(s![..m, ..]).assign(&real);
    both.slice_mut(s![m.., ..]).assign(&fake);
    let trace = state.critic.forward_traced(both.view())?;
    let scores = trace.output.column(0);
    let objective = scores.slice(s![..m]).mean().unwrap_or(0.0) - scores.slice(s![m..]).mean().unwrap_or(0.0);
    // descend on -objective
    let inv = 1.0 / m as f64;
    let upstream = Array2::from_shape_fn((2 * m, 1), |(i, _)| if i < m { -inv } else { inv });
    let grads = state.critic.backward_traced(&trace, upstream.view(), true, false)?;
    rmsprop_step(&mut state.critic, &grads, &mut state.critic_opt, &cfg.rmsprop())?;
    clip_weights(&mut state.critic, cfg.clip)?;
    Ok(objective)
}

/// One generator update descending `-mean D(G(z))`.
pub fn generator_step(state: &mut TrainState, cfg: &WganConfig) -> Result<()> {
    let m = cfg.batch_size;
    let z = sample_latent(m, cfg.latent_dim, &mut state.rng);
    let g_trace = state.generator.forward_traced(z.view())?;
    let c_trace = state.critic.forward_traced(g_trace.output.view())?;
    let upstream = Array2::from_elem((m, 1), -1.0 / m as f64);
    let through = state.critic.backward_traced(&c_trace, upstream.view(), false, true)?;
    let d_fake = through.input.expect("input gradient requested");
    let grads = state.generator.backward_traced(&g_trace, d_fake.view(), true, false)?;
    rmsprop_step(&mut state.generator, &grads, &mut state.gen_opt, &cfg.rmsprop())
}

/// Trains on a standardized real feature matrix. Each epoch shuffles the rows,
/// walks them in full minibatches with a critic step per batch, and takes a
/// generator step after every `critic_steps` critic steps (at least one per
/// epoch). `hook` runs every `checkpoint_every` epochs.
pub fn train_features(
    data: ArrayView2<'_, f64>,
    cfg: &WganConfig,
    master_seed: u64,
    mut hook: impl FnMut(usize, &TrainState) -> Result<()>,
) -> Result<(TrainState, TrainingLog)> {
    cfg.validate()?;
    if data.nrows() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "dataset of {} is smaller than batch size {}",
            data.nrows(),
            cfg.batch_size
        )));
    }
    let mut state = TrainState::init(data.ncols(), cfg, master_seed)?;
    let mut log = TrainingLog::default();
    let start = Instant::now();
    let batches = data.nrows() / cfg.batch_size;
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut state.rng);
        let mut objective = 0.0;
        let mut since_gen = 0usize;
        let mut gen_steps = 0usize;
        for b in 0..batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let batch = data.select(Axis(0), idx);
            objective += critic_step(&mut state, batch.view(), cfg)?;
            since_gen += 1;
            if since_gen == cfg.critic_steps {
                generator_step(&mut state, cfg)?;
                since_gen = 0;
                gen_steps += 1;
            }
        }
        if gen_steps == 0 {
            generator_step(&mut state, cfg)?;
        }
        log.rows.push(LogRow {
            epoch,
            critic_objective: objective / batches as f64,
            gen_norm: state.generator.param_norm(),
            critic_norm: state.critic.param_norm(),
            seconds: if cfg.log_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            hook(epoch, &state)?;
        }
    }
    Ok((state, log))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub generator: Generator,
    pub critic: NetworkParams,
    pub log: TrainingLog,
}

pub fn train(dataset: &ChannelDataset, cfg: &WganConfig, master_seed: u64) -> Result<TrainOutput> {
    train_with_hook(dataset, cfg, master_seed, |_, _| Ok(()))
}

/// As [`train`], with `hook` receiving the current generator every
/// `checkpoint_every` epochs.
pub fn train_with_hook(
    dataset: &ChannelDataset,
    cfg: &WganConfig,
    master_seed: u64,
    mut hook: impl FnMut(usize, &Generator) -> Result<()>,
) -> Result<TrainOutput> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    let mut x = dataset_features(dataset);
    let scale = standardization_scale(x.view());
    x /= scale;
    let dims = dataset.dims();
    let (state, log) = train_features(x.view(), cfg, master_seed, |epoch, st| {
        hook(epoch, &Generator::new(st.generator.clone(), dims, scale)?)
    })?;
    Ok(TrainOutput { generator: Generator::new(state.generator, dims, scale)?, critic: state.critic, log })
}

// Distribution comparison.

/// Tail thresholds in units of the pooled real RMS.
pub const TAIL_THRESHOLDS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const MAX_LAG: usize = 4;

/// Discrepancies between a generated and a reference channel set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    /// `||m_g - m_r|| / ||m_r||` over per-entry mean powers.
    pub second_moment: f64,
    /// `|rho_g(l) - rho_r(l)|` of the normalized frequency autocorrelation,
    /// lags `1..=min(4, N_f - 1)`.
    pub freq_autocorr: Vec<f64>,
    /// Total-variation distance between normalized transmit beam spectra.
    pub tx_spectrum: f64,
    pub rx_spectrum: f64,
    /// `|P_g(|x| > t) - P_r(|x| > t)|` over [`TAIL_THRESHOLDS`].
    pub tail: Vec<f64>,
}

impl StatReport {
    pub fn max_discrepancy(&self) -> f64 {
        [self.second_moment, self.tx_spectrum, self.rx_spectrum]
            .into_iter()
            .chain(self.freq_autocorr.iter().copied())
            .chain(self.tail.iter().copied())
            .fold(0.0, f64::max)
    }
}

struct Stats {
    power: Array1<f64>,
    autocorr: Vec<f64>,
    tx: Array1<f64>,
    rx: Array1<f64>,
}

fn beam_spectrum(cov: &CMatrix) -> Result<Array1<f64>> {
    let f = dft_matrix(cov.nrows())?;
    let b = f.dot(cov).dot(&f.t().mapv(|z| z.conj()));
    let d: Array1<f64> = b.diag().mapv(|z| z.re.max(0.0));
    let total = d.sum();
    Ok(if total > 0.0 { d / total } else { d })
}

fn set_stats(set: &[ChannelRealization]) -> Result<Stats> {
    let dims = set[0].dims();
    let (nf, nr, nt) = (dims.n_f, dims.n_rx, dims.n_tx);
    let mut power = Array1::zeros(dims.len());
    let lags = MAX_LAG.min(nf.saturating_sub(1));
    let mut ac = vec![ZERO; lags + 1];
    let mut tx = CMatrix::from_elem((nt, nt), ZERO);
    let mut rx = CMatrix::from_elem((nr, nr), ZERO);
    for ch in set {
        ch.check_dims(dims)?;
        let v = ch.to_vector();
        power += &v.mapv(|z| z.norm_sqr());
        for (l, acc) in ac.iter_mut().enumerate() {
            for k in 0..nf {
                let (a, b) = (&ch.per_subcarrier[(k + l) % nf], &ch.per_subcarrier[k]);
                *acc += a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum::<num_complex::Complex64>();
            }
        }
        for h in &ch.per_subcarrier {
            tx += &h.t().mapv(|z| z.conj()).dot(h);
            rx += &h.dot(&h.t().mapv(|z| z.conj()));
        }
    }
    power /= set.len() as f64;
    let autocorr = if ac[0].norm() > 0.0 { ac[1..].iter().map(|c| (c / ac[0]).norm()).collect() } else { vec![0.0; lags] };
    Ok(Stats { power, autocorr, tx: beam_spectrum(&tx)?, rx: beam_spectrum(&rx)? })
}

fn exceedance(set: &[ChannelRealization], rms: f64) -> Vec<f64> {
    let mut hits = vec![0usize; TAIL_THRESHOLDS.len()];
    let mut n = 0usize;
    for ch in set {
        for h in &ch.per_subcarrier {
            for z in h.iter() {
                for x in [z.re, z.im] {
                    n += 1;
                    for (c, t) in hits.iter_mut().zip(TAIL_THRESHOLDS) {
                        if x.abs() > t * rms {
                            *c += 1;
                        }
                    }
                }
            }
        }
    }
    hits.into_iter().map(|c| c as f64 / n as f64).collect()
}

/// Compares per-entry power, frequency autocorrelation, beam-domain spatial
/// spectra and entry tails of `generated` against `real`.
pub fn stat_match_report(generated: &[ChannelRealization], real: &[ChannelRealization]) -> Result<StatReport> {
    if generated.is_empty() || real.is_empty() {
        return Err(Error::InvalidConfig("stat report needs two nonempty sets".into()));
    }
    if generated[0].dims() != real[0].dims() {
        return Err(Error::Shape("generated and real channel shapes differ".into()));
    }
    let g = set_stats(generated)?;
    let r = set_stats(real)?;
    let norm = |a: &Array1<f64>| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let second_moment = norm(&(&g.power - &r.power)) / norm(&r.power).max(f64::MIN_POSITIVE);
    let freq_autocorr = g.autocorr.iter().zip(&r.autocorr).map(|(a, b)| (a - b).abs()).collect();
    let tv = |a: &Array1<f64>, b: &Array1<f64>| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let rms = (r.power.sum() / r.power.len() as f64 / 2.0).sqrt();
    let tg = exceedance(generated, rms);
    let tr = exceedance(real, rms);
    Ok(StatReport {
        second_moment,
        freq_autocorr,
        tx_spectrum: tv(&g.tx, &r.tx),
        rx_spectrum: tv(&g.rx, &r.rx),
        tail: tg.iter().zip(&tr).map(|(a, b)| (a - b).abs()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_dataset, ClusterRayConfig};
    use rand::SeedableRng;

    fn toy_gaussian(n: usize, mean: [f64; 2], seed: u64) -> Array2<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |(_, j)| {
            let g: f64 = StandardNormal.sample(&mut rng);
            mean[j] + 0.5 * g
        })
    }

    fn toy_cfg() -> WganConfig {
        WganConfig {
            batch_size: 64,
            epochs: 0,
            lr: 5e-3,
            latent_dim: 2,
            generator_hidden: vec![16],
            critic_hidden: vec![32],
            clip: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = toy_gaussian(128, [1.0, -1.0], 1);
        let cfg = toy_cfg();
        let (state, log) = train_features(data.view(), &cfg, 9, |_, _| Ok(())).unwrap();
        let init = TrainState::init(2, &cfg, 9).unwrap();
        assert_eq!(state.generator, init.generator);
        assert!(log.rows.is_empty());
        assert!(init.critic.max_abs_param() <= cfg.clip);
    }

    #[test]
    fn dataset_smaller_than_batch_rejected() {
        let data = toy_gaussian(10, [0.0, 0.0], 1);
        assert!(matches!(train_features(data.view(), &toy_cfg(), 0, |_, _| Ok(())), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn critic_stays_clipped_and_learns() {
        let data = toy_gaussian(256, [2.0, -2.0], 2);
        let cfg = toy_cfg();
        let mut state = TrainState::init(2, &cfg, 3).unwrap();
        let fixed = data.slice(s![..64, ..]).to_owned();
        let first = critic_step(&mut state.clone(), fixed.view(), &cfg).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = critic_step(&mut state, fixed.view(), &cfg).unwrap();
            assert!(state.critic.max_abs_param() <= cfg.clip);
        }
        assert!(last > first, "objective {first} -> {last}");
    }

    #[test]
    fn constant_critic_leaves_generator_unchanged() {
        let cfg = toy_cfg();
        let mut state = TrainState::init(2, &cfg, 4).unwrap();
        for l in &mut state.critic.layers {
            l.weight.fill(0.0);
        }
        let before = state.generator.clone();
        generator_step(&mut state, &cfg).unwrap();
        assert_eq!(state.generator, before);
        // a zero-gradient critic batch only re-clips
        let data = toy_gaussian(64, [0.0, 0.0], 5);
        let c_before = state.critic.clone();
        critic_step(&mut state, data.view(), &cfg).unwrap();
        let last = state.critic.layers.len() - 1;
        assert_eq!(state.critic.layers[..last], c_before.layers[..last]);
    }

    #[test]
    fn generator_step_is_reproducible() {
        let cfg = toy_cfg();
        let mut a = TrainState::init(2, &cfg, 6).unwrap();
        let mut b = a.clone();
        generator_step(&mut a, &cfg).unwrap();
        generator_step(&mut b, &cfg).unwrap();
        assert_eq!(a.generator, b.generator);
    }

    #[test]
    fn toy_mean_is_matched() {
        let mean = [1.5, -0.5];
        let data = toy_gaussian(1024, mean, 7);
        let cfg = WganConfig { epochs: 300, lr: 2e-3, clip: 0.1, ..toy_cfg() };
        let (state, log) = train_features(data.view(), &cfg, 8, |_, _| Ok(())).unwrap();
        assert_eq!(log.rows.len(), 300);
        let z = sample_latent(4000, 2, &mut Rng::seed_from_u64(9));
        let out = state.generator.forward_batch(z.view()).unwrap();
        let m = out.mean_axis(Axis(0)).unwrap();
        for j in 0..2 {
            assert!((m[j] - mean[j]).abs() < 0.1, "dim {j}: {} vs {}", m[j], mean[j]);
        }
    }

    fn small_channels() -> ChannelDataset {
        let cfg = ClusterRayConfig {
            n_tx_h: 2,
            n_tx_v: 2,
            n_rx_h: 2,
            n_rx_v: 1,
            n_subcarriers: 4,
            n_taps: 2,
            ..Default::default()
        };
        generate_dataset(&cfg, 400, 11).unwrap()
    }

    #[test]
    fn stat_report_identity_split_and_untrained() {
        let ds = small_channels();
        let all = &ds.realizations;
        let same = stat_match_report(all, all).unwrap();
        assert_eq!(same.max_discrepancy(), 0.0);
        let split = stat_match_report(&all[..200], &all[200..]).unwrap();
        let cfg = WganConfig { latent_dim: 4, generator_hidden: vec![16], ..Default::default() };
        let net = NetworkParams::init_he(&cfg.generator_specs(2 * ds.dims().len()), &mut Rng::seed_from_u64(1)).unwrap();
        let untrained = Generator::new(net, ds.dims(), 3.0).unwrap();
        let fake = sample_channels(&untrained, 200, &mut Rng::seed_from_u64(2)).unwrap();
        let bad = stat_match_report(&fake, &all[200..]).unwrap();
        assert!(bad.max_discrepancy() > 3.0 * split.max_discrepancy(), "{bad:?} vs {split:?}");
    }

    #[test]
    fn sampled_channels_shape_and_determinism() {
        let ds = small_channels();
        let cfg = WganConfig { latent_dim: 4, generator_hidden: vec![16], ..Default::default() };
        let net = NetworkParams::init_he(&cfg.generator_specs(2 * ds.dims().len()), &mut Rng::seed_from_u64(1)).unwrap();
        let g = Generator::new(net, ds.dims(), 1.0).unwrap();
        let a = sample_channels(&g, 1000, &mut Rng::seed_from_u64(3)).unwrap();
        let b = sample_channels(&g, 1000, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|c| c.dims() == ds.dims() && c.to_vector().iter().all(|z| z.is_finite())));
        assert!(sample_channels(&g, 0, &mut Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn log_csv_has_one_row_per_epoch() {
        let ds = small_channels();
        let cfg = WganConfig {
            epochs: 3,
            batch_size: 100,
            latent_dim: 4,
            generator_hidden: vec![16],
            critic_hidden: vec![16],
            checkpoint_every: 1,
            ..Default::default()
        };
        let mut hooks = 0;
        let out = train_with_hook(&ds, &cfg, 5, |_, _| {
            hooks += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(hooks, 3);
        let mut buf = Vec::new();
        out.log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        let again = train(&ds, &cfg, 5).unwrap();
        assert_eq!(again.generator, out.generator);
    }
}
