//! The four compared designs and best-of-N restarts.
//!
//! Every variant starts from the same second-hop design and the same random
//! first-hop precoders:
//!
//! | variant        | first hop                                  |
//! |----------------|--------------------------------------------|
//! | `baseline`     | sum-rate WMMSE, ignores `t` and second hop |
//! | `baseline_pc`  | `baseline`, then rate-matching power control |
//! | `after_phase2` | smoothed end-to-end utility                |
//! | `final`        | `after_phase2`, then power control         |

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_hop::{solve_first_hop, FirstHopSolution, RateMatchTargets};
use crate::hop::Hop;
use crate::linalg::CMatrix;
use crate::power_control::{decompose_precoders, run_power_control, PowerControlProblem};
use crate::rates::{rate_report, PrecoderSet, RateReport};
use crate::second_hop::{solve_second_hop, SecondHopSolution};
use crate::solver::{SolverOptions, TraceRecord};
use crate::topology::{derive_seed, rng_from_seed, ChannelSet, SystemSpec, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    Baseline,
    BaselinePc,
    AfterPhase2,
    Final,
}

impl VariantId {
    pub const ALL: [VariantId; 4] = [
        VariantId::Baseline,
        VariantId::BaselinePc,
        VariantId::AfterPhase2,
        VariantId::Final,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantId::Baseline => "baseline",
            VariantId::BaselinePc => "baseline_pc",
            VariantId::AfterPhase2 => "after_phase2",
            VariantId::Final => "final",
        }
    }

    fn uses_baseline_first_hop(self) -> bool {
        matches!(self, VariantId::Baseline | VariantId::BaselinePc)
    }

    fn uses_power_control(self) -> bool {
        matches!(self, VariantId::BaselinePc | VariantId::Final)
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub phase1: SolverOptions,
    pub phase2: SolverOptions,
    pub phase3_max_iter: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            phase1: SolverOptions::default(),
            phase2: SolverOptions::default(),
            phase3_max_iter: crate::power_control::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceFlags {
    pub phase1: bool,
    pub phase2: bool,
    /// `None` when the variant has no power control.
    pub phase3: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub variant: VariantId,
    pub report: RateReport,
    pub precoders: PrecoderSet,
    /// Phase 1, 2 and 3 records in that order.
    pub trace: Vec<TraceRecord>,
    pub wall_time: Duration,
    pub converged: ConvergenceFlags,
    pub phase3_iterations: Option<usize>,
    pub seed: u64,
    pub init_id: usize,
}

impl RunOutcome {
    pub fn sum_rate(&self) -> f64 {
        self.report.sum_rate
    }
}

/// Seed of the `index`-th random initialization drawn from `seed`.
pub fn init_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        seed
    } else {
        derive_seed(seed, index as u64)
    }
}

/// Random starting precoders for both hops, budgets met with equality.
pub fn initial_precoders(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    seed: u64,
) -> PrecoderSet {
    let mut rng = rng_from_seed(seed);
    let second_hop = Hop::second(channels, topology, spec).random_precoders(spec.second_hop_streams, &mut rng);
    let first_hop = Hop::first(channels, topology, spec).random_precoders(spec.first_hop_streams, &mut rng);
    PrecoderSet { first_hop, second_hop }
}

/// Work shared by all variants for one initialization: the second-hop
/// design, the first-hop starting point and, when needed, the baseline first
/// hop. None of it depends on the timesharing value.
#[derive(Debug, Clone)]
pub struct PreparedInit {
    pub init_id: usize,
    pub seed: u64,
    pub second_hop: SecondHopSolution,
    pub first_hop_init: Vec<CMatrix>,
    pub baseline: Option<FirstHopSolution>,
    pub shared_time: Duration,
}

/// One channel realization with its solver settings.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub channels: &'a ChannelSet,
    pub topology: &'a Topology,
    pub spec: &'a SystemSpec,
    pub options: PipelineOptions,
}

impl<'a> Instance<'a> {
    pub fn new(channels: &'a ChannelSet, topology: &'a Topology, spec: &'a SystemSpec) -> Self {
        Instance {
            channels,
            topology,
            spec,
            options: PipelineOptions::default(),
        }
    }

    pub fn with_options(mut self, options: PipelineOptions) -> Self {
        self.options = options;
        self
    }

    /// Runs the second-hop design and, if any of `variants` needs it, the
    /// baseline first hop.
    pub fn prepare(&self, init_id: usize, seed: u64, variants: &[VariantId]) -> Result<PreparedInit> {
        let start = Instant::now();
        let init = initial_precoders(self.channels, self.topology, self.spec, seed);
        let second_hop = solve_second_hop(
            self.channels,
            self.topology,
            self.spec,
            &init.second_hop,
            self.options.phase1,
        )?;
        let baseline = if variants.iter().any(|v| v.uses_baseline_first_hop()) {
            // Objectives come out per unit time; `run` scales them to its `t`.
            let targets = RateMatchTargets::unbounded(self.topology.relays(), 1.0);
            Some(self.first_hop(&targets, &init.first_hop)?)
        } else {
            None
        };
        Ok(PreparedInit {
            init_id,
            seed,
            second_hop,
            first_hop_init: init.first_hop,
            baseline,
            shared_time: start.elapsed(),
        })
    }

    /// Phase 2 from the prepared starting point with arbitrary targets.
    pub fn first_hop(&self, targets: &RateMatchTargets, init: &[CMatrix]) -> Result<FirstHopSolution> {
        solve_first_hop(self.channels, self.topology, self.spec, targets, init, self.options.phase2)
    }

    /// Evaluates `variants` at timesharing value `t`, reusing `prepared`.
    pub fn run(&self, prepared: &PreparedInit, t: f64, variants: &[VariantId]) -> Result<Vec<RunOutcome>> {
        let spec = self.spec.clone().with_timesharing(t);
        spec.validate()?;
        let targets = RateMatchTargets::new(prepared.second_hop.xi2_bar.clone(), t);
        let mut proposed: Option<(FirstHopSolution, Duration)> = None;
        let mut out = Vec::with_capacity(variants.len());
        for &variant in variants {
            let start = Instant::now();
            let (first_hop, phase2_time) = if variant.uses_baseline_first_hop() {
                let baseline = prepared.baseline.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("prepared without the baseline first hop".into())
                })?;
                (rescale_trace(baseline, t), Duration::ZERO)
            } else {
                if proposed.is_none() {
                    let s = Instant::now();
                    let solution = self.first_hop(&targets, &prepared.first_hop_init)?;
                    proposed = Some((solution, s.elapsed()));
                }
                let (solution, elapsed) = proposed.as_ref().unwrap();
                (solution.clone(), *elapsed)
            };

            let mut trace = prepared.second_hop.state.trace.clone();
            trace.extend_from_slice(&first_hop.state.trace);
            let mut first_hop_precoders = first_hop.state.precoders.clone();
            let mut phase3 = None;
            if variant.uses_power_control() {
                let state = decompose_precoders(&first_hop_precoders);
                let problem = PowerControlProblem::new(
                    self.channels,
                    self.topology,
                    &spec,
                    &state,
                    targets.eta.clone(),
                )?;
                let outcome = run_power_control(&problem, state, self.options.phase3_max_iter)?;
                trace.extend_from_slice(&outcome.trace);
                first_hop_precoders = outcome.state.precoders();
                phase3 = Some((outcome.converged, outcome.iterations()));
            }

            let precoders = PrecoderSet {
                first_hop: first_hop_precoders,
                second_hop: prepared.second_hop.state.precoders.clone(),
            };
            let report = rate_report(self.channels, self.topology, &spec, &precoders)?;
            out.push(RunOutcome {
                variant,
                report,
                precoders,
                trace,
                wall_time: prepared.shared_time + phase2_time + start.elapsed(),
                converged: ConvergenceFlags {
                    phase1: prepared.second_hop.state.converged,
                    phase2: first_hop.state.converged,
                    phase3: phase3.map(|p| p.0),
                },
                phase3_iterations: phase3.map(|p| p.1),
                seed: prepared.seed,
                init_id: prepared.init_id,
            });
        }
        Ok(out)
    }

    /// All `variants` from the initialization drawn from `seed`.
    pub fn run_variants(&self, variants: &[VariantId], seed: u64) -> Result<Vec<RunOutcome>> {
        let prepared = self.prepare(0, seed, variants)?;
        self.run(&prepared, self.spec.timesharing, variants)
    }

    /// Runs `n` initializations (`init_seed(seed, i)` for `i < n`) and keeps
    /// every outcome, so best-of-N for any smaller N is a prefix maximum.
    pub fn opportunistic(&self, variants: &[VariantId], n: usize, seed: u64) -> Result<OpportunisticRuns> {
        if n == 0 {
            return Err(Error::InvalidArgument("at least one initialization is required".into()));
        }
        let mut runs = Vec::with_capacity(n);
        let mut upper_bound = 0.0;
        for i in 0..n {
            let prepared = self.prepare(i, init_seed(seed, i), variants)?;
            if i == 0 {
                upper_bound = upper_bound_from(&prepared.second_hop, self.spec.timesharing);
            }
            runs.push(self.run(&prepared, self.spec.timesharing, variants)?);
        }
        Ok(OpportunisticRuns {
            variants: variants.to_vec(),
            runs,
            upper_bound,
        })
    }
}

/// Baseline phase-2 output, stored per unit of first-hop time, with its
/// objectives scaled to timesharing `t`.
fn rescale_trace(baseline: &FirstHopSolution, t: f64) -> FirstHopSolution {
    let mut out = baseline.clone();
    for rec in &mut out.state.trace {
        rec.objective_bits *= t;
    }
    out.state.objective *= t;
    out.state.initial_objective *= t;
    out
}

/// Every outcome of a best-of-N run, indexed `[init][variant]`.
#[derive(Debug, Clone)]
pub struct OpportunisticRuns {
    pub variants: Vec<VariantId>,
    pub runs: Vec<Vec<RunOutcome>>,
    /// Upper bound from the first initialization's second-hop design.
    pub upper_bound: f64,
}

impl OpportunisticRuns {
    /// Highest-sum-rate outcome of `variant` among the first `n` inits;
    /// ties go to the earlier one.
    pub fn best(&self, variant: VariantId, n: usize) -> Option<&RunOutcome> {
        let col = self.variants.iter().position(|&v| v == variant)?;
        self.runs
            .iter()
            .take(n)
            .map(|row| &row[col])
            .fold(None, |best: Option<&RunOutcome>, r| match best {
                Some(b) if b.sum_rate() >= r.sum_rate() => Some(b),
                _ => Some(r),
            })
    }
}

/// One variant from a single initialization.
pub fn run_variant(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    variant: VariantId,
    seed: u64,
) -> Result<RunOutcome> {
    let mut runs = Instance::new(channels, topology, spec).run_variants(&[variant], seed)?;
    Ok(runs.remove(0))
}

/// Best of `n` initializations for one variant.
pub fn opportunistic_best(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    variant: VariantId,
    n: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let runs = Instance::new(channels, topology, spec).opportunistic(&[variant], n, seed)?;
    Ok(runs.best(variant, n).expect("n >= 1").clone())
}

/// `sum_k (1-t) R2_k` for a given second-hop design.
pub fn upper_bound_from(second_hop: &SecondHopSolution, t: f64) -> f64 {
    second_hop.relay_sum_rates.iter().map(|r| (1.0 - t) * r).sum()
}

/// Upper bound on the end-to-end sum-rate of every variant sharing the
/// second-hop design drawn from `seed`.
pub fn upper_bound_rate(channels: &ChannelSet, topology: &Topology, spec: &SystemSpec, seed: u64) -> Result<f64> {
    let prepared = Instance::new(channels, topology, spec).prepare(0, seed, &[])?;
    Ok(upper_bound_from(&prepared.second_hop, spec.timesharing))
}
