//! Covariances, MMSE receivers, per-hop rates and the end-to-end rate rule.
//!
//! An "effective channel" is a channel matrix times a precoder. Rates are in
//! bits per channel use; logarithms are natural internally and converted once.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::hop::Hop;
use crate::linalg::{self, add_outer, identity, CMatrix};
use crate::topology::{ChannelSet, SystemSpec, Topology};

/// Relative slack allowed on power budgets before a precoder set counts as infeasible.
pub const POWER_TOLERANCE: f64 = 1e-6;

/// `sum_j M_j M_j* + noise * I` of size `dim x dim`.
pub fn interference_covariance(interferers: &[CMatrix], noise: f64, dim: usize) -> Result<CMatrix> {
    let mut cov = identity(dim) * linalg::c(noise, 0.0);
    for m in interferers {
        if m.nrows() != dim {
            return Err(Error::DimensionMismatch(format!(
                "interferer has {} rows, expected {dim}",
                m.nrows()
            )));
        }
        add_outer(&mut cov, m);
    }
    Ok(linalg::hermitian_part(&cov))
}

/// Per-link quantities at the MMSE receiver.
#[derive(Debug, Clone)]
pub struct LinkSolution {
    /// `(D D* + R)^{-1} D`.
    pub filter: CMatrix,
    /// MSE matrix at the MMSE filter, `(I + D* R^{-1} D)^{-1}`.
    pub mmse: CMatrix,
    /// `log2 det(I + D* R^{-1} D)`.
    pub rate: f64,
}

/// Solves the receiver side of one link from its desired effective channel
/// `desired` (`dim x d`) and interference-plus-noise covariance `cov`.
pub fn solve_link(desired: &CMatrix, cov: &CMatrix) -> Result<LinkSolution> {
    if cov.nrows() != desired.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "desired channel has {} rows, covariance is {}x{}",
            desired.nrows(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = linalg::cholesky(cov)?;
    let l = chol.l();
    let whitened = l
        .solve_lower_triangular(desired)
        .ok_or(Error::NotPositiveDefinite("singular covariance factor"))?;
    let gram = identity(desired.ncols()) + whitened.adjoint() * &whitened;
    let gram_chol = linalg::cholesky(&gram)?;
    let rate = linalg::ln_det_from_cholesky(&gram_chol) / LN_2;
    let mmse = linalg::hermitian_part(&gram_chol.inverse());
    // R^{-1} D (I + D* R^{-1} D)^{-1}
    let filter = l
        .adjoint()
        .solve_upper_triangular(&(whitened * &mmse))
        .ok_or(Error::NotPositiveDefinite("singular covariance factor"))?;
    Ok(LinkSolution { filter, mmse, rate })
}

/// `W = (D D* + R)^{-1} D`.
pub fn mmse_receive_filter(desired: &CMatrix, cov: &CMatrix) -> Result<CMatrix> {
    Ok(solve_link(desired, cov)?.filter)
}

/// `log2 det(I + D* R^{-1} D)`.
pub fn stream_rate(desired: &CMatrix, cov: &CMatrix) -> Result<f64> {
    Ok(solve_link(desired, cov)?.rate)
}

/// MSE matrix at the MMSE filter.
pub fn mmse_matrix(desired: &CMatrix, cov: &CMatrix) -> Result<CMatrix> {
    Ok(solve_link(desired, cov)?.mmse)
}

/// `2^rate - 1`.
pub fn effective_sinr(rate_bits: f64) -> f64 {
    (rate_bits * LN_2).exp_m1()
}

/// `E = W*(D D* + R)W - W*D - D*W + I` for an arbitrary filter `W`.
pub fn mse_matrix(desired: &CMatrix, cov: &CMatrix, filter: &CMatrix) -> Result<CMatrix> {
    let (dim, d) = desired.shape();
    if cov.shape() != (dim, dim) || filter.shape() != (dim, d) {
        return Err(Error::DimensionMismatch(format!(
            "mse: desired {:?}, covariance {:?}, filter {:?}",
            desired.shape(),
            cov.shape(),
            filter.shape()
        )));
    }
    let mut total = cov.clone();
    add_outer(&mut total, desired);
    let cross = filter.adjoint() * desired;
    let e = filter.adjoint() * total * filter - &cross - cross.adjoint() + identity(d);
    Ok(linalg::hermitian_part(&e))
}

/// First-hop precoders (one per relay) and second-hop precoders (one per receiver).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub first_hop: Vec<CMatrix>,
    pub second_hop: Vec<CMatrix>,
}

/// Sum of squared Frobenius norms per owning node.
pub fn node_powers(precoders: &[CMatrix], node_links: &[Vec<usize>]) -> Vec<f64> {
    node_links
        .iter()
        .map(|links| links.iter().map(|&l| linalg::frobenius_sq(&precoders[l])).sum())
        .collect()
}

/// Whether every node's power is within `budget * (1 + tol)`.
pub fn power_feasible(powers: &[f64], budget: f64, tol: f64) -> bool {
    powers.iter().all(|&p| p <= budget * (1.0 + tol) + tol * f64::EPSILON)
}

#[derive(Debug, Clone)]
pub struct FirstHopMetrics {
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
    pub mmse: Vec<CMatrix>,
}

#[derive(Debug, Clone)]
pub struct SecondHopMetrics {
    pub receiver_rates: Vec<f64>,
    pub relay_sum_rates: Vec<f64>,
    pub sinr: Vec<f64>,
}

fn warn_if_infeasible(what: &str, powers: &[f64], budget: f64) {
    if !power_feasible(powers, budget, POWER_TOLERANCE) {
        log::warn!("{what} precoders exceed power budget {budget}: {powers:?}");
    }
}

/// Per-relay first-hop rate, effective SINR and MMSE matrix.
pub fn first_hop_metrics(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    precoders: &[CMatrix],
) -> Result<FirstHopMetrics> {
    let hop = Hop::first(channels, topology, spec);
    warn_if_infeasible("first-hop", &hop.node_powers(precoders), spec.tx_power);
    let links = hop.solve_links(precoders)?;
    let rates: Vec<f64> = links.iter().map(|l| l.rate).collect();
    Ok(FirstHopMetrics {
        sinr: rates.iter().map(|&r| effective_sinr(r)).collect(),
        rates,
        mmse: links.into_iter().map(|l| l.mmse).collect(),
    })
}

/// Per-receiver second-hop rates, their per-relay sums and the per-relay effective SINR.
pub fn second_hop_metrics(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    precoders: &[CMatrix],
) -> Result<SecondHopMetrics> {
    let hop = Hop::second(channels, topology, spec);
    warn_if_infeasible("second-hop", &hop.node_powers(precoders), spec.relay_power);
    let receiver_rates: Vec<f64> = hop.solve_links(precoders)?.iter().map(|l| l.rate).collect();
    let relay_sum_rates: Vec<f64> = topology
        .relay_receivers
        .iter()
        .map(|rx| rx.iter().map(|&q| receiver_rates[q]).sum())
        .collect();
    Ok(SecondHopMetrics {
        sinr: relay_sum_rates.iter().map(|&r| effective_sinr(r)).collect(),
        receiver_rates,
        relay_sum_rates,
    })
}

/// Splits a relay's normalized first-hop rate among its receivers.
///
/// If the first hop carries everything the second hop can deliver, each
/// receiver gets `(1-t) R2_q`; otherwise the first-hop rate is shared in
/// proportion to the second-hop rates. A relay whose receivers all have zero
/// rate gets nothing.
pub fn allocate_first_hop_rates(t: f64, first_hop_rate: f64, served_rates: &[f64]) -> Vec<f64> {
    let total: f64 = served_rates.iter().sum();
    let available = t * first_hop_rate;
    if available >= (1.0 - t) * total {
        served_rates.iter().map(|&r| (1.0 - t) * r).collect()
    } else if total > 0.0 {
        served_rates.iter().map(|&r| available * r / total).collect()
    } else {
        vec![0.0; served_rates.len()]
    }
}

/// Per-relay `min(t R1, (1-t) R2_sum)` and their sum.
pub fn end_to_end(t: f64, first_hop_rates: &[f64], relay_sum_rates: &[f64]) -> (Vec<f64>, f64) {
    let per_relay: Vec<f64> = first_hop_rates
        .iter()
        .zip(relay_sum_rates)
        .map(|(&r1, &r2)| (t * r1).min((1.0 - t) * r2))
        .collect();
    let total = per_relay.iter().sum();
    (per_relay, total)
}

/// Every rate quantity of one precoder design.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub first_hop_rates: Vec<f64>,
    pub receiver_rates: Vec<f64>,
    pub relay_sum_rates: Vec<f64>,
    pub first_hop_sinr: Vec<f64>,
    pub second_hop_sinr: Vec<f64>,
    /// Allocated first-hop rate per receiver.
    pub allocation: Vec<f64>,
    pub end_to_end: Vec<f64>,
    pub sum_rate: f64,
}

impl RateReport {
    pub fn from_rates(
        topology: &Topology,
        t: f64,
        first_hop_rates: Vec<f64>,
        receiver_rates: Vec<f64>,
    ) -> Self {
        let relay_sum_rates: Vec<f64> = topology
            .relay_receivers
            .iter()
            .map(|rx| rx.iter().map(|&q| receiver_rates[q]).sum())
            .collect();
        let mut allocation = vec![0.0; receiver_rates.len()];
        for (k, rx) in topology.relay_receivers.iter().enumerate() {
            let served: Vec<f64> = rx.iter().map(|&q| receiver_rates[q]).collect();
            for (&q, beta) in rx.iter().zip(allocate_first_hop_rates(t, first_hop_rates[k], &served)) {
                allocation[q] = beta;
            }
        }
        let (per_relay, sum_rate) = end_to_end(t, &first_hop_rates, &relay_sum_rates);
        RateReport {
            first_hop_sinr: first_hop_rates.iter().map(|&r| effective_sinr(r)).collect(),
            second_hop_sinr: relay_sum_rates.iter().map(|&r| effective_sinr(r)).collect(),
            first_hop_rates,
            receiver_rates,
            relay_sum_rates,
            allocation,
            end_to_end: per_relay,
            sum_rate,
        }
    }
}

/// Evaluates a full design with the true min rule.
pub fn rate_report(
    channels: &ChannelSet,
    topology: &Topology,
    spec: &SystemSpec,
    precoders: &PrecoderSet,
) -> Result<RateReport> {
    let first = first_hop_metrics(channels, topology, spec, &precoders.first_hop)?;
    let second = second_hop_metrics(channels, topology, spec, &precoders.second_hop)?;
    Ok(RateReport::from_rates(
        topology,
        spec.timesharing,
        first.rates,
        second.receiver_rates,
    ))
}
