//! Python bindings: configs, datasets, measurement operators, generators,
//! the four estimators and the sweeps.
//!
//! Channel and observation vectors cross the boundary as lists of `complex`
//! in stacked per-subcarrier order.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use chanest_core::bench::{self, ExperimentConfig, Priors};
use chanest_core::channel::{self, ChannelDims, ChannelRealization};
use chanest_core::estimators::{self, InversionConfig, LatentOptimizer};
use chanest_core::measurement::{self, MeasurementOperator, ReceivedSignal};
use chanest_core::neural;
use chanest_core::seed::{rng_for, Rng, TAG_ESTIMATOR, TAG_NOISE, TAG_SCENARIO};
use chanest_core::{dataset_io, tail, wgan, Error};

create_exception!(chanest, ConfigError, PyException, "Invalid configuration.");
create_exception!(chanest, IllPosedError, PyException, "Too few measurements for the estimator.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(m) => ConfigError::new_err(m),
        Error::Json(j) => ConfigError::new_err(j.to_string()),
        Error::IllPosed(m) => IllPosedError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

type Res<T> = PyResult<T>;

fn realization(dims: ChannelDims, v: Vec<Complex64>) -> Res<ChannelRealization> {
    ChannelRealization::from_vector(dims, &v.into()).map_err(to_py)
}

#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Named preset: desk, full-scale, full-scale-narrowband or smoke.
    #[staticmethod]
    fn preset(name: &str) -> Res<Self> {
        ExperimentConfig::preset(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| ConfigError::new_err(format!("unknown preset {name:?}")))
    }

    #[staticmethod]
    fn from_json(text: &str) -> Res<Self> {
        ExperimentConfig::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> Res<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, v: u64) {
        self.inner.master_seed = v;
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }

    #[setter]
    fn set_trials(&mut self, v: usize) {
        self.inner.trials = v;
    }

    /// `(n_f, n_rx, n_tx)`.
    #[getter]
    fn channel_dims(&self) -> (usize, usize, usize) {
        let d = self.inner.channel.dims();
        (d.n_f, d.n_rx, d.n_tx)
    }
}

#[pyclass(name = "ChannelDataset")]
struct PyDataset {
    inner: channel::ChannelDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn generate(config: &PyConfig, count: usize, seed: u64) -> Res<Self> {
        channel::generate_dataset(&config.inner.channel, count, seed).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> Res<Self> {
        dataset_io::load_dataset(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: &str) -> Res<()> {
        dataset_io::save_dataset(&self.inner, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn channel(&self, index: usize) -> Res<Vec<Complex64>> {
        self.inner
            .realizations
            .get(index)
            .map(|r| r.to_vector().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))
    }

    fn mean_normalized_power(&self) -> f64 {
        self.inner.mean_normalized_power()
    }
}

#[pyclass(name = "MeasurementOperator")]
struct PyOperator {
    inner: MeasurementOperator,
}

#[pymethods]
impl PyOperator {
    /// Hybrid operator of trial `trial`, drawn as in the sweeps.
    #[staticmethod]
    #[pyo3(signature = (config, trial=0, eta=1.0, digital=false))]
    fn draw(config: &PyConfig, trial: u64, eta: f64, digital: bool) -> Res<Self> {
        let c = &config.inner;
        let sc = bench::draw_scenario(c, &c.channel, 0, trial, eta, digital).map_err(to_py)?;
        Ok(Self { inner: if digital { sc.digital.expect("drawn") } else { sc.hybrid } })
    }

    /// Random one-bit networks and pilots from `seed`.
    #[staticmethod]
    #[pyo3(signature = (config, seed, eta=1.0))]
    fn random(config: &PyConfig, seed: u64, eta: f64) -> Res<Self> {
        let t = &config.inner.transceiver;
        let mut rng = rng_for(seed, &[TAG_SCENARIO]);
        let p = measurement::sample_pilots(t, eta, &mut rng).map_err(to_py)?;
        let (f, w) = measurement::sample_phase_networks(t, &mut rng).map_err(to_py)?;
        measurement::build_operator(p, f, w, t).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn forward(&self, h: Vec<Complex64>) -> Res<Vec<Complex64>> {
        self.inner.forward_vec(&h.into()).map(|v| v.to_vec()).map_err(to_py)
    }

    fn adjoint(&self, y: Vec<Complex64>) -> Res<Vec<Complex64>> {
        self.inner.adjoint_vec(&y.into()).map(|v| v.to_vec()).map_err(to_py)
    }

    /// `A h` plus noise at `snr_db`; returns `(y, noise_var)`.
    fn observe(&self, h: Vec<Complex64>, snr_db: f64, seed: u64) -> Res<(Vec<Complex64>, f64)> {
        let clean = self.inner.forward_vec(&h.into()).map_err(to_py)?;
        let mut rng = rng_for(seed, &[TAG_NOISE]);
        let r = measurement::add_awgn(&self.inner, &clean, snr_db, &mut rng).map_err(to_py)?;
        Ok((r.y.to_vec(), r.noise_var))
    }
}

#[pyclass(name = "Generator")]
struct PyGenerator {
    inner: wgan::Generator,
}

#[pymethods]
impl PyGenerator {
    #[staticmethod]
    fn load(path: &str) -> Res<Self> {
        neural::load_checkpoint(path).and_then(wgan::Generator::from_checkpoint).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Trains on `dataset` with the config's WGAN settings.
    #[staticmethod]
    fn train(dataset: &PyDataset, config: &PyConfig) -> Res<Self> {
        let c = &config.inner;
        bench::train_generator(&dataset.inner, &c.wgan, c.stat_match_samples, c.master_seed)
            .map(|t| Self { inner: t.generator })
            .map_err(to_py)
    }

    fn save(&self, path: &str) -> Res<()> {
        neural::save_checkpoint(&self.inner.to_checkpoint(), path).map_err(to_py)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn channel(&self, z: Vec<f64>) -> Res<Vec<Complex64>> {
        self.inner.channel(&z.into()).map(|h| h.to_vector().to_vec()).map_err(to_py)
    }
}

fn received(y: Vec<Complex64>, noise_var: f64) -> ReceivedSignal {
    ReceivedSignal { y: y.into(), noise_var }
}

#[pyfunction]
fn estimate_ls(op: &PyOperator, y: Vec<Complex64>) -> Res<Vec<Complex64>> {
    let r = received(y, 0.0);
    estimators::estimate_ls(&op.inner, &r).map(|h| h.to_vector().to_vec()).map_err(to_py)
}

/// LMMSE with the sample covariance of `dataset`.
#[pyfunction]
fn estimate_lmmse(op: &PyOperator, y: Vec<Complex64>, noise_var: f64, dataset: &PyDataset) -> Res<Vec<Complex64>> {
    let cov = estimators::CovarianceSource::Dataset(&dataset.inner).resolve().map_err(to_py)?;
    let r = received(y, noise_var);
    estimators::estimate_lmmse(&op.inner, &r, &cov).map(|h| h.to_vector().to_vec()).map_err(to_py)
}

#[pyfunction]
fn estimate_omp(op: &PyOperator, y: Vec<Complex64>, noise_var: f64, sparsity: usize) -> Res<Vec<Complex64>> {
    let r = received(y, noise_var);
    estimators::estimate_omp(&op.inner, &r, sparsity).map(|o| o.estimate.to_vector().to_vec()).map_err(to_py)
}

/// Latent-space inversion; returns `(estimate, z, loss)`.
#[pyfunction]
#[pyo3(signature = (op, y, generator, restarts=5, iterations=200, step=0.5, optimizer="plain-gd", line_search=false, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_gan(
    op: &PyOperator,
    y: Vec<Complex64>,
    generator: &PyGenerator,
    restarts: usize,
    iterations: usize,
    step: f64,
    optimizer: &str,
    line_search: bool,
    seed: u64,
) -> Res<(Vec<Complex64>, Vec<f64>, f64)> {
    let optimizer = match optimizer {
        "plain-gd" => LatentOptimizer::PlainGd,
        "rmsprop-on-z" => LatentOptimizer::RmspropOnZ,
        other => return Err(ConfigError::new_err(format!("unknown optimizer {other:?}"))),
    };
    let cfg = InversionConfig { restarts, iterations, step, optimizer, line_search, ..InversionConfig::default() };
    let r = received(y, 0.0);
    let mut rng: Rng = rng_for(seed, &[TAG_ESTIMATOR]);
    let g = estimators::estimate_gan(&op.inner, &r, &generator.inner, &cfg, &mut rng).map_err(to_py)?;
    Ok((g.estimate.to_vector().to_vec(), g.z.to_vec(), g.loss))
}

/// NMSE in dB between two stacked channel vectors of the config's shape.
#[pyfunction]
fn nmse_db(config: &PyConfig, truth: Vec<Complex64>, estimate: Vec<Complex64>) -> Res<f64> {
    let d = config.inner.channel.dims();
    estimators::nmse(&realization(d, truth)?, &realization(d, estimate)?).map_err(to_py)
}

fn sweep_priors(config: &ExperimentConfig, generator: Option<&PyGenerator>) -> Res<Priors> {
    let covariance = if config.estimators.contains(&estimators::EstimatorKind::Lmmse) {
        Some(bench::covariance_prior(config).map_err(to_py)?)
    } else {
        None
    };
    Ok(Priors { generator: generator.map(|g| g.inner.clone()), covariance })
}

/// SNR sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (config, generator=None))]
fn run_snr_sweep(py: Python<'_>, config: &PyConfig, generator: Option<&PyGenerator>) -> Res<String> {
    let priors = sweep_priors(&config.inner, generator)?;
    let c = config.inner.clone();
    py.detach(|| bench::run_snr_sweep(&c, &priors)).map(|r| r.to_csv()).map_err(to_py)
}

/// Pilot-ratio sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (config, generator=None))]
fn run_pilot_sweep(py: Python<'_>, config: &PyConfig, generator: Option<&PyGenerator>) -> Res<String> {
    let priors = sweep_priors(&config.inner, generator)?;
    let c = config.inner.clone();
    py.detach(|| bench::run_pilot_sweep(&c, &priors)).map(|r| r.to_csv()).map_err(to_py)
}

/// `(t, empirical, bound, stderr, flagged)` rows.
#[pyfunction]
fn subgaussian_tail_check(config: &PyConfig, trials: usize, seed: u64) -> Res<Vec<(f64, f64, f64, f64, bool)>> {
    let rep = tail::subgaussian_tail_check(&config.inner.transceiver, trials, seed).map_err(to_py)?;
    Ok(rep.rows.iter().map(|r| (r.t, r.empirical_prob, r.bound, r.stderr, r.flagged)).collect())
}

#[pymodule]
fn chanest(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyGenerator>()?;
    m.add_function(wrap_pyfunction!(estimate_ls, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_lmmse, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_omp, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_gan, m)?)?;
    m.add_function(wrap_pyfunction!(nmse_db, m)?)?;
    m.add_function(wrap_pyfunction!(run_snr_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_pilot_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(subgaussian_tail_check, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("IllPosedError", m.py().get_type::<IllPosedError>())?;
    Ok(())
}
