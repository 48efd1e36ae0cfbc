//! First-hop design: transmitter precoders maximizing a smoothed end-to-end
//! utility, given the timesharing value and each relay's second-hop SINR.
//!
//! The per-relay utility follows `t log2(1 + xi1)` up to the rate-matching
//! SINR `eta` and then saturates smoothly, so power beyond what the second
//! hop can forward is worth little. The problem is solved by weighted
//! sum-MSE minimization where each relay's weight is the gradient of
//! `g(E) = phi(det E)`, i.e. `alpha(det E) E^{-1}`.
//!
//! With `eta = inf` the utility is the plain first-hop rate, `alpha` is
//! identically 1 and the solver reduces to ordinary sum-rate WMMSE.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::hop::{Hop, PrecoderUpdate};
use crate::linalg::{self, c, identity, CMatrix};
use crate::rates::effective_sinr;
use crate::second_hop::WEIGHT_REGULARIZATION;
use crate::solver::{max_delta, power_ratio, SolverOptions, SolverState, TraceRecord};
use crate::topology::{ChannelSet, SystemSpec, Topology};

/// First-hop SINR at which `t log2(1 + eta) = (1 - t) log2(1 + xi2_bar)`.
pub fn rate_matching_sinr(xi2_bar: f64, t: f64) -> f64 {
    ((1.0 - t) / t * xi2_bar.ln_1p()).exp_m1()
}

/// Smoothed version of `min(t log2(1 + xi1), t log2(1 + eta))`.
///
/// Exact below `eta`; above it the excess grows as
/// `(t / ln 2) (exp(1 - (1 + eta)/(1 + xi1)) - 1)`, which is bounded by
/// `(e - 1) t / ln 2`. Twice continuously differentiable at `xi1 = eta`.
pub fn utility_u(xi1: f64, t: f64, eta: f64) -> f64 {
    if xi1 <= eta {
        t * xi1.ln_1p() / LN_2
    } else {
        let ratio = (1.0 + eta) / (1.0 + xi1);
        t * eta.ln_1p() / LN_2 + t / LN_2 * (1.0 - ratio).exp_m1()
    }
}

/// `g(E) = -(ln 2 / t) u(1/det E - 1)` written in terms of `det E`.
pub fn g_value(det_e: f64, eta: f64) -> Result<f64> {
    if !(det_e > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "MSE determinant must be positive, got {det_e}"
        )));
    }
    let scaled = (1.0 + eta) * det_e;
    if scaled >= 1.0 {
        Ok(det_e.ln())
    } else {
        Ok(-eta.ln_1p() - (1.0 - scaled).exp() + 1.0)
    }
}

/// Scalar factor of the gradient of `g`: 1 above the threshold `1/(1+eta)`,
/// `(1+eta) x exp(1 - (1+eta) x)` below it.
pub fn weight_alpha(x: f64, eta: f64) -> f64 {
    let scaled = (1.0 + eta) * x;
    if scaled >= 1.0 {
        1.0
    } else {
        scaled * (1.0 - scaled).exp()
    }
}

/// Weight `V = alpha(det E0) E0^{-1}`, the gradient of `g` at `E0`.
pub fn gradient_weight(e0: &CMatrix, eta: f64) -> Result<CMatrix> {
    let chol = linalg::cholesky(e0)?;
    let det = linalg::ln_det_from_cholesky(&chol).exp();
    let inv = linalg::hermitian_part(&chol.inverse());
    Ok(inv * c(weight_alpha(det, eta), 0.0))
}

fn gradient_weight_loaded(e0: &CMatrix, eta: f64) -> Result<CMatrix> {
    gradient_weight(e0, eta).or_else(|_| {
        gradient_weight(&(e0 + identity(e0.nrows()) * c(WEIGHT_REGULARIZATION, 0.0)), eta)
    })
}

/// Rate-matching SINRs for every relay.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatchTargets {
    pub eta: Vec<f64>,
    pub xi2_bar: Vec<f64>,
    pub t: f64,
}

impl RateMatchTargets {
    pub fn new(xi2_bar: Vec<f64>, t: f64) -> Self {
        RateMatchTargets {
            eta: xi2_bar.iter().map(|&x| rate_matching_sinr(x, t)).collect(),
            xi2_bar,
            t,
        }
    }

    /// Targets with an unlimited second hop: the utility becomes `t R1`.
    pub fn unbounded(relays: usize, t: f64) -> Self {
        RateMatchTargets {
            eta: vec![f64::INFINITY; relays],
            xi2_bar: vec![f64::INFINITY; relays],
            t,
        }
    }

    /// Sum of `utility_u` over relays.
    pub fn objective(&self, sinr: &[f64]) -> f64 {
        self.t * self.per_unit_time(sinr)
    }

    /// The objective divided by `t`. With unbounded targets this does not
    /// depend on `t` at all, so neither does the solver's iterate sequence.
    pub fn per_unit_time(&self, sinr: &[f64]) -> f64 {
        sinr.iter().zip(&self.eta).map(|(&xi, &eta)| utility_u(xi, 1.0, eta)).sum()
    }
}

/// Per-relay MMSE filters and gradient weights.
#[derive(Debug, Clone)]
pub struct FirstHopWeights {
    pub filters: Vec<CMatrix>,
    pub weights: Vec<CMatrix>,
}

/// Filters and weights for the current first-hop precoders.
pub fn first_hop_weights(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    targets: &RateMatchTargets,
    precoders: &[CMatrix],
) -> Result<FirstHopWeights> {
    let links = Hop::first(channels, topology, spec).solve_links(precoders)?;
    let weights = links
        .iter()
        .zip(&targets.eta)
        .map(|(l, &eta)| gradient_weight_loaded(&l.mmse, eta))
        .collect::<Result<Vec<_>>>()?;
    Ok(FirstHopWeights {
        filters: links.into_iter().map(|l| l.filter).collect(),
        weights,
    })
}

/// Per-transmitter power-constrained precoder minimization for fixed filters
/// and weights; one multiplier per transmitter, shared by all its relays.
pub fn first_hop_precoder_update(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    filters: &[CMatrix],
    weights: &[CMatrix],
) -> Result<PrecoderUpdate> {
    Hop::first(channels, topology, spec).precoder_update(filters, weights)
}

#[derive(Debug, Clone)]
pub struct FirstHopSolution {
    pub state: SolverState,
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
}

impl FirstHopSolution {
    pub fn precoders(&self) -> &[CMatrix] {
        &self.state.precoders
    }
}

/// Alternates MMSE filter, gradient weight and precoder updates until the
/// smoothed objective divided by `t` changes by less than `options.tol`, or
/// `options.max_iter` is reached. Trace objectives are not divided by `t`.
pub fn solve_first_hop(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    targets: &RateMatchTargets,
    init: &[CMatrix],
    options: SolverOptions,
) -> Result<FirstHopSolution> {
    let hop = Hop::first(channels, topology, spec);
    if targets.eta.len() != hop.links() {
        return Err(Error::DimensionMismatch(format!(
            "{} rate-matching targets for {} relays",
            targets.eta.len(),
            hop.links()
        )));
    }
    let mut precoders = init.to_vec();
    hop.project_to_budget(&mut precoders);

    let mut links = hop.solve_links(&precoders)?;
    let sinr_of = |links: &[crate::rates::LinkSolution]| -> Vec<f64> {
        links.iter().map(|l| effective_sinr(l.rate)).collect()
    };
    let mut objective = targets.per_unit_time(&sinr_of(&links));
    let initial_objective = objective;
    let mut peak_power_ratio = power_ratio(&hop.node_powers(&precoders), hop.budget());
    let mut best = (objective, precoders.clone(), links.clone());
    let mut filters = Vec::new();
    let mut weights = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;

    for iteration in 1..=options.max_iter {
        filters = links.iter().map(|l| l.filter.clone()).collect();
        weights = links
            .iter()
            .zip(&targets.eta)
            .map(|(l, &eta)| gradient_weight_loaded(&l.mmse, eta))
            .collect::<Result<Vec<_>>>()?;
        let update = hop.precoder_update(&filters, &weights)?;
        let delta = max_delta(&precoders, &update.precoders);
        precoders = update.precoders;
        peak_power_ratio = peak_power_ratio.max(power_ratio(&hop.node_powers(&precoders), hop.budget()));
        links = hop.solve_links(&precoders)?;
        let next = targets.per_unit_time(&sinr_of(&links));
        trace.push(TraceRecord {
            phase: 2,
            iteration,
            objective_bits: targets.t * next,
            max_delta: delta,
        });
        if next >= best.0 {
            best = (next, precoders.clone(), links.clone());
        }
        let change = (next - objective).abs();
        objective = next;
        if change < options.tol {
            converged = true;
            break;
        }
    }

    let (objective, precoders, links) = best;
    let rates: Vec<f64> = links.iter().map(|l| l.rate).collect();
    Ok(FirstHopSolution {
        sinr: rates.iter().map(|&r| effective_sinr(r)).collect(),
        rates,
        state: SolverState {
            precoders,
            filters,
            weights,
            initial_objective: targets.t * initial_objective,
            objective: targets.t * objective,
            peak_power_ratio,
            trace,
            converged,
        },
    })
}
