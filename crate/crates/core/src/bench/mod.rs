//! Seeded Monte Carlo sweeps over SNR, pilot ratio, channel mismatch and
//! training budget, with CSV and gnuplot output.
//!
//! Trial `t` of every point sees the same test channel and operators, so
//! estimators and neighbouring points are compared on paired draws. Results
//! are gathered in `(point, trial)` order and never depend on thread count.

mod config;
mod result;
mod sweep;

pub use config::{AblationConfig, AblationPoint, ExperimentConfig, GeneralizationGrid};
pub use result::{csv_to_dat, parse_csv, CsvRecord, NmseSummary, Outcome, SweepResult, SweepRow, CSV_HEADER};
pub use sweep::{
    covariance_prior, draw_scenario, estimate_once, observe, run_estimator, run_generalization_sweep,
    run_pilot_sweep, run_snr_sweep, run_training_ablation, train_generator, training_dataset, Observation, Priors,
    Scenario, SingleEstimate, TrainedGenerator,
};
