//! Monte Carlo averaging over channel realizations.
//!
//! Realization `r` draws its channels from `derive_seed(seed, 2r)` and its
//! random initializations from `derive_seed(seed, 2r + 1)`, so every power
//! and timesharing value sees the same channels. Realizations run in
//! parallel; results are reduced in realization order, so the output does
//! not depend on the number of threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pipeline::{init_seed, upper_bound_from, Instance, VariantId};
use crate::solver::TraceRecord;
use crate::topology::{build_topology, derive_seed, sample_channels};

/// A reported curve: one of the variants, or the second-hop upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Series {
    Variant(VariantId),
    UpperBound,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Series::Variant(v) => v.fmt(f),
            Series::UpperBound => f.write_str("upper_bound"),
        }
    }
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "upper_bound" {
            Ok(Series::UpperBound)
        } else {
            s.parse().map(Series::Variant)
        }
    }
}

impl TryFrom<String> for Series {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Series> for String {
    fn from(s: Series) -> String {
        s.to_string()
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub power_db: f64,
    pub t: f64,
    #[serde(rename = "variant")]
    pub series: Series,
    pub n_init: usize,
    pub mean_sum_rate_bits: f64,
    /// Sample standard deviation over `sqrt(realizations)`.
    pub stderr_bits: f64,
    pub realizations: usize,
}

/// Trace of the first initialization for one (realization, power, t, variant).
#[derive(Debug, Clone)]
pub struct TraceSet {
    pub realization: usize,
    pub power_db: f64,
    pub t: f64,
    pub variant: VariantId,
    pub records: Vec<TraceRecord>,
}

/// Solver runs that hit an iteration cap, per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverFlags {
    pub phase1_unconverged: usize,
    pub phase2_unconverged: usize,
    pub phase3_unconverged: usize,
}

impl SolverFlags {
    fn add(&mut self, other: &SolverFlags) {
        self.phase1_unconverged += other.phase1_unconverged;
        self.phase2_unconverged += other.phase2_unconverged;
        self.phase3_unconverged += other.phase3_unconverged;
    }
}

/// Key of one aggregated cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub power_db: f64,
    pub t: f64,
    pub series: Series,
    pub n_init: usize,
}

/// Iterations taken by one power-control run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerControlCount {
    pub power_db: f64,
    pub t: f64,
    pub variant: VariantId,
    pub init: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// All per-cell values of one realization, in the config's cell order.
#[derive(Debug, Clone)]
pub struct RealizationResult {
    pub index: usize,
    pub values: Vec<f64>,
    pub power_control: Vec<PowerControlCount>,
    pub traces: Vec<TraceSet>,
    pub flags: SolverFlags,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub rows: Vec<AggregateRow>,
    pub realizations: Vec<RealizationResult>,
    pub flags: SolverFlags,
}

impl MonteCarloReport {
    pub fn row(&self, power_db: f64, t: f64, series: Series, n_init: usize) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.power_db == power_db && r.t == t && r.series == series && r.n_init == n_init)
    }
}

/// Cell order: power, then t, then each variant for each N, then the upper bound.
pub fn cell_keys(config: &ExperimentConfig) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for &power_db in &config.power_db {
        for &t in &config.timesharing {
            for &variant in &config.variants {
                for &n_init in &config.n_init {
                    keys.push(CellKey {
                        power_db,
                        t,
                        series: Series::Variant(variant),
                        n_init,
                    });
                }
            }
            keys.push(CellKey {
                power_db,
                t,
                series: Series::UpperBound,
                n_init: 1,
            });
        }
    }
    keys
}

/// Channel and initialization seeds of realization `index`.
pub fn realization_seeds(master: u64, index: usize) -> (u64, u64) {
    let i = 2 * index as u64;
    (derive_seed(master, i), derive_seed(master, i + 1))
}

/// Runs every cell of the config on realization `index`.
pub fn run_realization(config: &ExperimentConfig, index: usize) -> Result<RealizationResult> {
    let topology = build_topology(&config.system);
    let (channel_seed, init_base) = realization_seeds(config.seed, index);
    let channels = sample_channels(&topology, &config.system, channel_seed);
    let n_max = config.max_n_init();
    let variants = &config.variants;

    let mut values = Vec::new();
    let mut power_control = Vec::new();
    let mut traces = Vec::new();
    let mut flags = SolverFlags::default();

    for &power_db in &config.power_db {
        let spec = config.system_at(power_db, config.timesharing[0]);
        let instance = Instance::new(&channels, &topology, &spec).with_options(config.options);
        // best[t][variant][init] sum-rates; upper bound from init 0.
        let mut rates = vec![vec![Vec::with_capacity(n_max); variants.len()]; config.timesharing.len()];
        let mut upper = vec![0.0; config.timesharing.len()];
        for init in 0..n_max {
            let prepared = instance.prepare(init, init_seed(init_base, init), variants)?;
            flags.phase1_unconverged += usize::from(!prepared.second_hop.state.converged);
            for (ti, &t) in config.timesharing.iter().enumerate() {
                if init == 0 {
                    upper[ti] = upper_bound_from(&prepared.second_hop, t);
                }
                for (vi, outcome) in instance.run(&prepared, t, variants)?.into_iter().enumerate() {
                    flags.phase2_unconverged += usize::from(!outcome.converged.phase2);
                    flags.phase3_unconverged += usize::from(outcome.converged.phase3 == Some(false));
                    if let (Some(iterations), Some(converged)) =
                        (outcome.phase3_iterations, outcome.converged.phase3)
                    {
                        power_control.push(PowerControlCount {
                            power_db,
                            t,
                            variant: outcome.variant,
                            init,
                            iterations,
                            converged,
                        });
                    }
                    rates[ti][vi].push(outcome.sum_rate());
                    if config.traces && init == 0 {
                        traces.push(TraceSet {
                            realization: index,
                            power_db,
                            t,
                            variant: outcome.variant,
                            records: outcome.trace,
                        });
                    }
                }
            }
        }
        for (ti, per_variant) in rates.iter().enumerate() {
            for per_init in per_variant {
                for &n in &config.n_init {
                    values.push(per_init[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                }
            }
            values.push(upper[ti]);
        }
    }
    Ok(RealizationResult {
        index,
        values,
        power_control,
        traces,
        flags,
    })
}

/// Mean and standard error in input order.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs all realizations on `config.parallel` threads and aggregates them.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let realizations: Vec<RealizationResult> = pool.install(|| {
        (0..config.realizations)
            .into_par_iter()
            .map(|r| {
                let out = run_realization(config, r);
                log::debug!("realization {r} done");
                out
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let keys = cell_keys(config);
    let mut flags = SolverFlags::default();
    for r in &realizations {
        flags.add(&r.flags);
    }
    if flags != SolverFlags::default() {
        log::warn!("runs stopped at an iteration cap: {flags:?}");
    }
    let rows = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let samples: Vec<f64> = realizations.iter().map(|r| r.values[i]).collect();
            let (mean, se) = mean_and_stderr(&samples);
            AggregateRow {
                power_db: key.power_db,
                t: key.t,
                series: key.series,
                n_init: key.n_init,
                mean_sum_rate_bits: mean,
                stderr_bits: se,
                realizations: samples.len(),
            }
        })
        .collect();
    Ok(MonteCarloReport {
        rows,
        realizations,
        flags,
    })
}

/// Best timesharing value of one curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptimum {
    pub power_db: f64,
    pub series: Series,
    pub n_init: usize,
    pub t: f64,
    pub mean_sum_rate_bits: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub report: MonteCarloReport,
    pub optima: Vec<SweepOptimum>,
}

/// Argmax over t of every (power, series, N) curve; ties go to the smaller t.
pub fn sweep_optima(rows: &[AggregateRow]) -> Vec<SweepOptimum> {
    let mut optima: Vec<SweepOptimum> = Vec::new();
    for row in rows {
        let same = |o: &SweepOptimum| o.power_db == row.power_db && o.series == row.series && o.n_init == row.n_init;
        match optima.iter_mut().find(|o| same(o)) {
            Some(o) => {
                let better = row.mean_sum_rate_bits > o.mean_sum_rate_bits
                    || (row.mean_sum_rate_bits == o.mean_sum_rate_bits && row.t < o.t);
                if better {
                    o.t = row.t;
                    o.mean_sum_rate_bits = row.mean_sum_rate_bits;
                }
            }
            None => optima.push(SweepOptimum {
                power_db: row.power_db,
                series: row.series,
                n_init: row.n_init,
                t: row.t,
                mean_sum_rate_bits: row.mean_sum_rate_bits,
            }),
        }
    }
    optima
}

/// Monte Carlo over the config's t grid plus the best t of every curve.
pub fn timesharing_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let report = monte_carlo(config)?;
    let optima = sweep_optima(&report.rows);
    Ok(SweepReport { report, optima })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::SystemSpec;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(SystemSpec::new((2, 2), (2, 4), (2, 4), 1, 1).unwrap());
        cfg.power_db = vec![10.0];
        cfg.realizations = 3;
        cfg.n_init = vec![1, 2];
        cfg.seed = 17;
        cfg
    }

    #[test]
    fn stderr_examples() {
        assert_eq!(mean_and_stderr(&[2.5]), (2.5, 0.0));
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn series_names() {
        for s in [Series::UpperBound, Series::Variant(VariantId::BaselinePc)] {
            assert_eq!(s.to_string().parse::<Series>().unwrap(), s);
        }
    }

    #[test]
    fn rows_follow_cell_order() {
        let cfg = tiny();
        let report = monte_carlo(&cfg).unwrap();
        assert_eq!(report.rows.len(), 4 * 2 + 1);
        assert_eq!(report.rows.last().unwrap().series, Series::UpperBound);
        for v in VariantId::ALL {
            let one = report.row(10.0, 0.5, Series::Variant(v), 1).unwrap();
            let two = report.row(10.0, 0.5, Series::Variant(v), 2).unwrap();
            assert!(two.mean_sum_rate_bits >= one.mean_sum_rate_bits);
            assert_eq!(one.realizations, 3);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = tiny();
        let a = monte_carlo(&cfg).unwrap().rows;
        cfg.parallel = 3;
        let b = monte_carlo(&cfg).unwrap().rows;
        assert_eq!(a, b);
    }

    #[test]
    fn optima_pick_largest_mean() {
        let row = |t: f64, m: f64| AggregateRow {
            power_db: 0.0,
            t,
            series: Series::UpperBound,
            n_init: 1,
            mean_sum_rate_bits: m,
            stderr_bits: 0.0,
            realizations: 1,
        };
        let optima = sweep_optima(&[row(0.3, 1.0), row(0.4, 2.0), row(0.5, 2.0), row(0.6, 1.5)]);
        assert_eq!(optima.len(), 1);
        assert_eq!(optima[0].t, 0.4);
    }
}
