use chanest_core::bench::*;
use chanest_core::estimators::EstimatorKind;
use chanest_core::Error;

fn smoke_priors(cfg: &ExperimentConfig) -> Priors {
    let ds = training_dataset(cfg).unwrap();
    let trained = train_generator(&ds, &cfg.wgan, cfg.stat_match_samples, cfg.master_seed).unwrap();
    Priors { generator: Some(trained.generator), covariance: Some(covariance_prior(cfg).unwrap()) }
}

#[test]
fn snr_sweep_emits_one_row_per_point_and_estimator() {
    let cfg = ExperimentConfig::smoke();
    let priors = smoke_priors(&cfg);
    let res = run_snr_sweep(&cfg, &priors).unwrap();
    assert_eq!(res.rows.len(), cfg.snr_grid_db.len() * cfg.estimators.len());
    for r in &res.rows {
        assert_eq!(r.outcomes.len(), cfg.trials);
        assert_eq!(r.sweep_param, "snr_db");
    }
    let csv = res.to_csv();
    assert_eq!(csv.lines().count(), res.rows.len() + 1);
    assert_eq!(parse_csv(&csv).unwrap().len(), res.rows.len());
}

#[test]
fn sweeps_are_reproducible_across_thread_counts() {
    let cfg = ExperimentConfig::smoke();
    let priors = smoke_priors(&cfg);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (run_snr_sweep(&cfg, &priors).unwrap().to_csv(), run_pilot_sweep(&cfg, &priors).unwrap().to_csv()))
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn missing_generator_is_a_config_error() {
    let cfg = ExperimentConfig::smoke();
    let priors = Priors { generator: None, covariance: Some(covariance_prior(&cfg).unwrap()) };
    assert!(matches!(run_snr_sweep(&cfg, &priors), Err(Error::InvalidConfig(_))));
    let no_gan = ExperimentConfig { estimators: vec![EstimatorKind::Ls, EstimatorKind::Lmmse], ..cfg };
    assert!(run_snr_sweep(&no_gan, &priors).is_ok());
}

#[test]
fn low_pilot_ratio_gives_explicit_ill_posed_rows() {
    let cfg = ExperimentConfig {
        eta_grid: vec![0.2, 1.0],
        estimators: vec![EstimatorKind::Ls, EstimatorKind::Omp],
        ..ExperimentConfig::smoke()
    };
    let res = run_pilot_sweep(&cfg, &Priors::default()).unwrap();
    assert_eq!(res.rows.len(), 4);
    let ls_low = res.find(EstimatorKind::Ls, |r| r.eta == 0.2).unwrap();
    assert!(ls_low.summary().is_none());
    assert_eq!(ls_low.flags(), "ill-posed");
    assert!(res.to_csv().contains(",ls,0,0.2,,,0,ill-posed"));
    assert!(res.find(EstimatorKind::Omp, |r| r.eta == 0.2).unwrap().summary().is_some());
    assert!(res.find(EstimatorKind::Ls, |r| r.eta == 1.0).unwrap().summary().is_some());
}

#[test]
fn full_ratio_pilot_row_matches_snr_sweep_within_sampling_error() {
    let cfg = ExperimentConfig {
        trials: 40,
        snr_grid_db: vec![0.0],
        pilot_snr_db: 0.0,
        eta_grid: vec![1.0],
        estimators: vec![EstimatorKind::Ls],
        ..ExperimentConfig::smoke()
    };
    let snr = run_snr_sweep(&cfg, &Priors::default()).unwrap();
    let pil = run_pilot_sweep(&cfg, &Priors::default()).unwrap();
    let a = snr.rows[0].summary().unwrap();
    let b = pil.rows[0].summary().unwrap();
    let se = (a.stderr_db.unwrap().powi(2) + b.stderr_db.unwrap().powi(2)).sqrt();
    assert!((a.mean_db - b.mean_db).abs() < 4.0 * se, "{a:?} vs {b:?}");
}

#[test]
fn ls_error_decreases_with_snr() {
    let cfg = ExperimentConfig {
        trials: 30,
        snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        estimators: vec![EstimatorKind::Ls],
        ..ExperimentConfig::smoke()
    };
    let res = run_snr_sweep(&cfg, &Priors::default()).unwrap();
    let means: Vec<f64> = res.rows.iter().map(|r| r.mean_db().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn generalization_sweep_includes_the_training_point() {
    let cfg = ExperimentConfig::smoke();
    let priors = smoke_priors(&cfg);
    let res = run_generalization_sweep(&cfg, &priors).unwrap();
    let g = &cfg.generalization;
    assert_eq!(res.rows.len(), (g.clusters.len() + g.rays.len()) * cfg.snr_grid_db.len());
    assert!(res.rows.iter().all(|r| r.estimator == EstimatorKind::Gan && r.outcomes.len() == g.trials));
    let matched = cfg.channel.n_clusters.to_string();
    assert!(res.rows.iter().any(|r| r.sweep_param == "clusters" && r.value == matched));
}

#[test]
fn ablation_with_one_point_gives_one_row() {
    let cfg = ExperimentConfig::smoke();
    assert_eq!(cfg.ablation.points.len(), 1);
    let res = run_training_ablation(&cfg).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert_eq!(res.rows[0].value, cfg.ablation.points[0].label());
    assert_eq!(res.rows[0].outcomes.len(), cfg.ablation.test_channels);
}

#[test]
fn single_estimate_reports_every_estimator() {
    let cfg = ExperimentConfig::smoke();
    let priors = smoke_priors(&cfg);
    let out = estimate_once(&cfg, &priors, 10.0, 1.0, 0).unwrap();
    assert_eq!(out.iter().map(|e| e.estimator).collect::<Vec<_>>(), cfg.estimators);
    assert!(out.iter().all(|e| e.nmse_db.is_some_and(f64::is_finite)));
    let low = estimate_once(&cfg, &priors, 10.0, 0.2, 0).unwrap();
    assert!(low.iter().find(|e| e.estimator == EstimatorKind::Ls).unwrap().nmse_db.is_none());
}
