//! `chanest`: dataset generation, generator training, estimator sweeps and
//! report emission.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 when
//! every requested estimate was ill-posed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chanest_core::bench::{
    covariance_prior, csv_to_dat, estimate_once, parse_csv, run_generalization_sweep, run_pilot_sweep, run_snr_sweep,
    run_training_ablation, train_generator, training_dataset, ExperimentConfig, Priors, SweepResult,
};
use chanest_core::channel::generate_dataset;
use chanest_core::dataset_io::{load_dataset, save_dataset};
use chanest_core::estimators::EstimatorKind;
use chanest_core::neural::{load_checkpoint, save_checkpoint};
use chanest_core::tail::subgaussian_tail_check;
use chanest_core::wgan::Generator;
use chanest_core::{Error, Result};

const THREADS_ENV: &str = "GENEST_THREADS";

#[derive(Parser)]
#[command(name = "chanest", version, about = "Generative-prior channel estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; omitted fields take desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CheckpointArg {
    /// Generator checkpoint; defaults to `<out>/generator.gnet`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a training dataset and write `dataset.gchd`.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of channels; defaults to `train_samples`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the generator; writes `generator.gnet`, `generator_best.gnet`
    /// and `training_log.csv`.
    TrainGan {
        #[command(flatten)]
        common: Common,
        /// Dataset to train on; defaults to `<out>/dataset.gchd`, else a fresh draw.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run every configured estimator on one drawn scenario.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
        /// Defaults to `pilot_snr_db`.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// NMSE against SNR; writes `snr_sweep.csv`.
    SweepSnr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// NMSE against pilot ratio; writes `pilot_sweep.csv`.
    SweepPilots {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// GAN NMSE on mismatched cluster and ray counts; writes `generalization.csv`.
    SweepGen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Train one generator per ablation point; writes `ablation.csv`.
    AblateTraining {
        #[command(flatten)]
        common: Common,
    },
    /// Empirical tail of one measurement entry against its bound; writes `subgaussian.csv`.
    CheckSubgaussian {
        #[command(flatten)]
        common: Common,
        /// Defaults to `tail_trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Print a named preset (desk, full-scale, full-scale-narrowband, smoke) as JSON.
    Preset {
        name: String,
    },
    /// Convert every CSV in a directory to gnuplot `.dat` files.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory to scan; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) => 2,
        Error::IllPosed(_) => 3,
        _ => 1,
    }
}

fn load_config(common: &Common, required: bool) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if required => return Err(Error::InvalidConfig("missing --config <path>".into())),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn load_generator(path: &Path) -> Result<Generator> {
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "generator checkpoint {} not found (run train-gan first or pass --checkpoint)",
            path.display()
        )));
    }
    Generator::from_checkpoint(load_checkpoint(path)?)
}

fn priors_for(cfg: &ExperimentConfig, estimators: &[EstimatorKind], ckpt: &CheckpointArg, out: &Path) -> Result<Priors> {
    let generator = if estimators.contains(&EstimatorKind::Gan) {
        let path = ckpt.checkpoint.clone().unwrap_or_else(|| out.join("generator.gnet"));
        let g = load_generator(&path)?;
        if g.dims != cfg.channel.dims() {
            return Err(Error::InvalidConfig(format!(
                "checkpoint emits {:?} channels, config expects {:?}",
                g.dims,
                cfg.channel.dims()
            )));
        }
        Some(g)
    } else {
        None
    };
    let covariance = if estimators.contains(&EstimatorKind::Lmmse) { Some(covariance_prior(cfg)?) } else { None };
    Ok(Priors { generator, covariance })
}

fn write_sweep(res: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, res.to_csv())?;
    for r in &res.rows {
        let mean = r.mean_db().map_or("ill-posed".to_string(), |m| format!("{m:8.3} dB"));
        println!("{:<14} {:<9} {:>6} {:<6} {}", r.experiment, r.sweep_param, r.value, r.estimator.id(), mean);
    }
    println!("wrote {}", path.display());
    if res.all_ill_posed() {
        return Err(Error::IllPosed("every sweep point was ill-posed".into()));
    }
    Ok(())
}

/// Comma-separated file to whitespace columns with a commented header.
fn plain_csv_to_dat(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&line.replace(',', " "));
        out.push('\n');
    }
    out
}

fn report(dir: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!("no CSV files in {}", dir.display())));
    }
    for f in files {
        let text = fs::read_to_string(&f)?;
        let dat = match parse_csv(&text) {
            Ok(records) => csv_to_dat(&records),
            Err(_) => plain_csv_to_dat(&text),
        };
        let target = f.with_extension("dat");
        fs::write(&target, dat)?;
        println!("wrote {}", target.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, count } => {
            let (cfg, out) = load_config(&common, true)?;
            let n = count.unwrap_or(cfg.train_samples);
            let ds = generate_dataset(&cfg.channel, n, cfg.master_seed)?;
            let path = out.join("dataset.gchd");
            save_dataset(&ds, &path)?;
            println!("{} channels of {:?}, mean power {:.4}", ds.len(), ds.dims(), ds.mean_normalized_power());
            println!("wrote {}", path.display());
        }
        Command::TrainGan { common, data } => {
            let (cfg, out) = load_config(&common, true)?;
            let default_data = out.join("dataset.gchd");
            let ds = match data {
                Some(p) => load_dataset(p)?,
                None if default_data.exists() => load_dataset(&default_data)?,
                None => training_dataset(&cfg)?,
            };
            if ds.dims() != cfg.channel.dims() {
                return Err(Error::InvalidConfig(format!(
                    "dataset holds {:?} channels, config expects {:?}",
                    ds.dims(),
                    cfg.channel.dims()
                )));
            }
            let trained = train_generator(&ds, &cfg.wgan, cfg.stat_match_samples, cfg.master_seed)?;
            save_checkpoint(&trained.generator.to_checkpoint(), out.join("generator.gnet"))?;
            if let Some((epoch, g, score)) = &trained.best {
                save_checkpoint(&g.to_checkpoint(), out.join("generator_best.gnet"))?;
                println!("best statistics at epoch {epoch} (max discrepancy {score:.4})");
            }
            trained.log.write_csv(fs::File::create(out.join("training_log.csv"))?)?;
            if let Some(last) = trained.log.rows.last() {
                println!("epoch {} critic objective {:.4e}", last.epoch, last.critic_objective);
            }
            println!("wrote {}", out.join("generator.gnet").display());
        }
        Command::Estimate { common, ckpt, snr, eta, trial } => {
            let (cfg, out) = load_config(&common, true)?;
            let priors = priors_for(&cfg, &cfg.estimators, &ckpt, &out)?;
            let snr = snr.unwrap_or(cfg.pilot_snr_db);
            let results = estimate_once(&cfg, &priors, snr, eta, trial)?;
            let mut csv = String::from("estimator,snr_db,eta,nmse_db,residual,flags\n");
            for r in &results {
                let (nmse, res, flag) = match (r.nmse_db, r.residual) {
                    (Some(n), Some(res)) => (format!("{n:.6}"), format!("{res:.6e}"), ""),
                    _ => (String::new(), String::new(), "ill-posed"),
                };
                csv.push_str(&format!("{},{snr},{eta},{nmse},{res},{flag}\n", r.estimator.id()));
                println!("{:<6} {}", r.estimator.id(), if flag.is_empty() { format!("{nmse} dB") } else { flag.into() });
            }
            let path = out.join("estimate.csv");
            fs::write(&path, csv)?;
            println!("wrote {}", path.display());
            if results.iter().all(|r| r.nmse_db.is_none()) {
                return Err(Error::IllPosed("every requested estimator was ill-posed".into()));
            }
        }
        Command::SweepSnr { common, ckpt } => {
            let (cfg, out) = load_config(&common, true)?;
            let priors = priors_for(&cfg, &cfg.estimators, &ckpt, &out)?;
            write_sweep(&run_snr_sweep(&cfg, &priors)?, &out.join("snr_sweep.csv"))?;
        }
        Command::SweepPilots { common, ckpt } => {
            let (cfg, out) = load_config(&common, true)?;
            let priors = priors_for(&cfg, &cfg.estimators, &ckpt, &out)?;
            write_sweep(&run_pilot_sweep(&cfg, &priors)?, &out.join("pilot_sweep.csv"))?;
        }
        Command::SweepGen { common, ckpt } => {
            let (cfg, out) = load_config(&common, true)?;
            let priors = priors_for(&cfg, &[EstimatorKind::Gan], &ckpt, &out)?;
            write_sweep(&run_generalization_sweep(&cfg, &priors)?, &out.join("generalization.csv"))?;
        }
        Command::AblateTraining { common } => {
            let (cfg, out) = load_config(&common, true)?;
            write_sweep(&run_training_ablation(&cfg)?, &out.join("ablation.csv"))?;
        }
        Command::CheckSubgaussian { common, trials } => {
            let (cfg, out) = load_config(&common, true)?;
            let rep = subgaussian_tail_check(&cfg.transceiver, trials.unwrap_or(cfg.tail_trials), cfg.master_seed)?;
            let path = out.join("subgaussian.csv");
            rep.write_csv(fs::File::create(&path)?)?;
            let flagged = rep.rows.iter().filter(|r| r.flagged).count();
            println!("{} thresholds, {flagged} above bound + 3 stderr", rep.rows.len());
            println!("wrote {}", path.display());
        }
        Command::Preset { name } => {
            let cfg = ExperimentConfig::preset(&name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name:?}")))?;
            println!("{}", cfg.to_json()?);
        }
        Command::Report { common, input } => {
            let (_, out) = load_config(&common, false)?;
            report(&input.unwrap_or(out))?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
