//! Second-hop design: relay precoders maximizing the second-hop sum-rate by
//! iterative matrix-weighted sum-MSE minimization (WMMSE).
//!
//! Each iteration updates receive filters (MMSE), weights (`U = E^{-1}`) and
//! precoders (per-relay multiplier found by bisection). The second-hop
//! sum-rate is non-decreasing across iterations.

use crate::error::Result;
use crate::hop::{Hop, PrecoderUpdate};
use crate::linalg::{self, c, identity, CMatrix};
use crate::rates::effective_sinr;
use crate::solver::{max_delta, power_ratio, SolverOptions, SolverState, TraceRecord};
use crate::topology::{ChannelSet, SystemSpec, Topology};

/// Diagonal loading used when an MSE matrix is singular to working precision.
pub const WEIGHT_REGULARIZATION: f64 = 1e-12;

/// Output of the second-hop design.
#[derive(Debug, Clone)]
pub struct SecondHopSolution {
    pub state: SolverState,
    pub receiver_rates: Vec<f64>,
    pub relay_sum_rates: Vec<f64>,
    /// Effective second-hop SINR per relay, `2^{R_sum} - 1`.
    pub xi2_bar: Vec<f64>,
}

impl SecondHopSolution {
    pub fn precoders(&self) -> &[CMatrix] {
        &self.state.precoders
    }

    pub fn sum_rate(&self) -> f64 {
        self.relay_sum_rates.iter().sum()
    }
}

/// MMSE receive filter at every receiver.
pub fn second_hop_filter_update(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    precoders: &[CMatrix],
) -> Result<Vec<CMatrix>> {
    let hop = Hop::second(channels, topology, spec);
    Ok(hop.solve_links(precoders)?.into_iter().map(|s| s.filter).collect())
}

/// `U_q = E_q^{-1}`, loading the diagonal if `E_q` is numerically singular.
pub fn second_hop_weight_update(mse: &[CMatrix]) -> Result<Vec<CMatrix>> {
    mse.iter().map(inverse_weight).collect()
}

pub(crate) fn inverse_weight(e: &CMatrix) -> Result<CMatrix> {
    linalg::inverse_pd(e).or_else(|_| {
        let loaded = e + identity(e.nrows()) * c(WEIGHT_REGULARIZATION, 0.0);
        linalg::inverse_pd(&loaded)
    })
}

/// Per-relay power-constrained precoder minimization for fixed filters and weights.
pub fn second_hop_precoder_update(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    filters: &[CMatrix],
    weights: &[CMatrix],
) -> Result<PrecoderUpdate> {
    Hop::second(channels, topology, spec).precoder_update(filters, weights)
}

/// Runs WMMSE on the second hop from `init` until the sum-rate moves by less
/// than `options.tol` or `options.max_iter` is reached, keeping the best iterate.
pub fn solve_second_hop(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    init: &[CMatrix],
    options: SolverOptions,
) -> Result<SecondHopSolution> {
    let hop = Hop::second(channels, topology, spec);
    let mut precoders = init.to_vec();
    hop.project_to_budget(&mut precoders);

    let mut links = hop.solve_links(&precoders)?;
    let mut objective: f64 = links.iter().map(|l| l.rate).sum();
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
            .map(|l| inverse_weight(&l.mmse))
            .collect::<Result<Vec<_>>>()?;
        let update = hop.precoder_update(&filters, &weights)?;
        let delta = max_delta(&precoders, &update.precoders);
        precoders = update.precoders;
        peak_power_ratio = peak_power_ratio.max(power_ratio(&hop.node_powers(&precoders), hop.budget()));
        links = hop.solve_links(&precoders)?;
        let next: f64 = links.iter().map(|l| l.rate).sum();
        trace.push(TraceRecord {
            phase: 1,
            iteration,
            objective_bits: next,
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
    let receiver_rates: Vec<f64> = links.iter().map(|l| l.rate).collect();
    let relay_sum_rates: Vec<f64> = topology
        .relay_receivers
        .iter()
        .map(|rx| rx.iter().map(|&q| receiver_rates[q]).sum())
        .collect();
    Ok(SecondHopSolution {
        xi2_bar: relay_sum_rates.iter().map(|&r| effective_sinr(r)).collect(),
        receiver_rates,
        relay_sum_rates,
        state: SolverState {
            precoders,
            filters,
            weights,
            initial_objective,
            objective,
            peak_power_ratio,
            trace,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian, scalar};
    use crate::rates;
    use crate::topology::{build_topology, rng_from_seed, sample_channels};

    fn unit_system() -> (SystemSpec, Topology, ChannelSet) {
        let spec = SystemSpec::new((1, 1), (1, 1), (1, 1), 1, 1).unwrap();
        let topo = build_topology(&spec);
        let one = || vec![vec![scalar(c(1.0, 0.0))]];
        let ch = ChannelSet {
            first_hop: one(),
            second_hop: one(),
        };
        (spec, topo, ch)
    }

    #[test]
    fn filter_update_examples() {
        let (spec, topo, ch) = unit_system();
        let w = second_hop_filter_update(&ch, &topo, &spec, &[scalar(c(1.0, 0.0))]).unwrap();
        assert!((w[0][(0, 0)].re - 0.5).abs() < 1e-15);
        let w = second_hop_filter_update(&ch, &topo, &spec, &[scalar(c(0.0, 0.0))]).unwrap();
        assert_eq!(w[0][(0, 0)].norm(), 0.0);
    }

    #[test]
    fn filter_update_matches_primitive() {
        let spec = SystemSpec::new((2, 2), (2, 2), (2, 4), 1, 1).unwrap();
        let topo = build_topology(&spec);
        let ch = sample_channels(&topo, &spec, 4);
        let hop = Hop::second(&ch, &topo, &spec);
        let f = hop.random_precoders(1, &mut rng_from_seed(2));
        let w = second_hop_filter_update(&ch, &topo, &spec, &f).unwrap();
        for q in 0..4 {
            let d = &ch.second_hop[q][topo.chi[q]] * &f[q];
            let others: Vec<CMatrix> = (0..4)
                .filter(|&o| o != q)
                .map(|o| &ch.second_hop[q][topo.chi[o]] * &f[o])
                .collect();
            let cov = rates::interference_covariance(&others, 1.0, 2).unwrap();
            let direct = rates::mmse_receive_filter(&d, &cov).unwrap();
            assert!((&w[q] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn weight_update_examples() {
        let u = second_hop_weight_update(&[scalar(c(0.5, 0.0)), identity(2)]).unwrap();
        assert!((u[0][(0, 0)].re - 2.0).abs() < 1e-15);
        assert_eq!(u[1], identity(2));
        let mut rng = rng_from_seed(6);
        let a = complex_gaussian(&mut rng, 3, 3);
        let e = &a * a.adjoint() + identity(3) * c(0.05, 0.0);
        let u = second_hop_weight_update(std::slice::from_ref(&e)).unwrap();
        assert!((&u[0] * &e - identity(3)).norm() < 1e-10);
        // Singular E is loaded rather than rejected.
        assert!(second_hop_weight_update(&[CMatrix::zeros(1, 1)]).is_ok());
    }

    #[test]
    fn precoder_update_examples() {
        let (spec, topo, ch) = unit_system();
        let one = vec![scalar(c(1.0, 0.0))];
        let upd = second_hop_precoder_update(&ch, &topo, &spec, &one, &one).unwrap();
        assert_eq!(upd.multipliers[0], 0.0);
        assert!((upd.precoders[0][(0, 0)].re - 1.0).abs() < 1e-15);
        let spec = spec.with_powers(1.0, 0.25);
        let upd = second_hop_precoder_update(&ch, &topo, &spec, &one, &one).unwrap();
        assert!((upd.multipliers[0] - 1.0).abs() < 1e-7);
        assert!((upd.precoders[0][(0, 0)].re - 0.5).abs() < 1e-8);
    }

    #[test]
    fn single_link_closed_form() {
        let (spec, topo, ch) = unit_system();
        let sol = solve_second_hop(&ch, &topo, &spec, &[scalar(c(0.3, 0.1))], SolverOptions::default()).unwrap();
        // Budget is met to the multiplier tolerance, worth about 1.4e-8 bits here.
        assert!((sol.sum_rate() - 1.0).abs() < 1e-7);
        assert!((sol.xi2_bar[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn matched_beamforming() {
        // One relay with 2 antennas, one single-antenna receiver.
        let spec = SystemSpec::new((1, 1), (2, 1), (1, 1), 1, 1).unwrap();
        let topo = build_topology(&spec);
        let ch = sample_channels(&topo, &spec, 21);
        let g = &ch.second_hop[0][0];
        let gain = linalg::frobenius_sq(g);
        let hop = Hop::second(&ch, &topo, &spec);
        let init = hop.random_precoders(1, &mut rng_from_seed(5));
        let sol = solve_second_hop(&ch, &topo, &spec, &init, SolverOptions::default()).unwrap();
        assert!((sol.sum_rate() - (1.0 + gain).log2()).abs() < 1e-6);
    }

    #[test]
    fn sum_rate_trace_is_monotone_and_feasible() {
        let spec = SystemSpec::new((2, 2), (2, 4), (2, 8), 1, 1)
            .unwrap()
            .with_power_db(20.0, 20.0);
        let topo = build_topology(&spec);
        for seed in 0..5 {
            let ch = sample_channels(&topo, &spec, seed);
            let hop = Hop::second(&ch, &topo, &spec);
            let init = hop.random_precoders(1, &mut rng_from_seed(seed + 100));
            let sol = solve_second_hop(&ch, &topo, &spec, &init, SolverOptions::default()).unwrap();
            let mut last = sol.state.initial_objective;
            for rec in &sol.state.trace {
                assert!(rec.objective_bits >= last - 1e-8);
                last = rec.objective_bits;
            }
            for p in hop.node_powers(sol.precoders()) {
                assert!(p <= spec.relay_power * (1.0 + 1e-6));
            }
        }
    }
}
