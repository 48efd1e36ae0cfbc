//! Experiment harness: configuration, Monte Carlo averaging and result files.

pub mod config;
pub mod monte_carlo;
pub mod output;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use monte_carlo::{
    monte_carlo, run_realization, timesharing_sweep, AggregateRow, MonteCarloReport, RealizationResult, Series,
    SweepOptimum, SweepReport,
};
pub use output::{emit_results, read_csv, Manifest};

/// Every cell of one realization with traces switched on.
pub fn single_realization(config: &ExperimentConfig, index: usize) -> crate::error::Result<RealizationResult> {
    config.validate()?;
    let mut config = config.clone();
    config.traces = true;
    run_realization(&config, index)
}
