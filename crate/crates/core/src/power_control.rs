//! Rate-matching power control on the first hop.
//!
//! Precoder shapes are frozen and only their powers `theta` change. Relays
//! whose first hop outruns the second (set A) are turned down to the power
//! at which the two hops match, which lowers the interference seen by the
//! others. Powers only shrink, so the iteration terminates.
//!
//! `theta` is a transmit power: the precoder is `sqrt(theta) * shape` with
//! `shape` of unit Frobenius norm.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, CMatrix};
use crate::solver::TraceRecord;
use crate::topology::{ChannelSet, SystemSpec, Topology};

/// Relative SINR margin used when classifying relays.
pub const CLASSIFY_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 30;
/// Iteration cap of the rate-matching bisection.
pub const MATCH_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerState {
    /// Unit-norm precoder shapes; all-zero where the precoder was zero.
    pub shapes: Vec<CMatrix>,
    /// Transmit power per relay's precoder.
    pub theta: Vec<f64>,
    /// False for relays whose precoder was zero.
    pub active: Vec<bool>,
    pub iteration: usize,
}

impl PowerState {
    pub fn norms(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.sqrt()).collect()
    }

    /// `sqrt(theta_k) * shape_k`.
    pub fn precoders(&self) -> Vec<CMatrix> {
        self.shapes
            .iter()
            .zip(&self.theta)
            .map(|(s, &t)| s * c(t.sqrt(), 0.0))
            .collect()
    }
}

/// Splits each precoder into a unit-norm shape and its power.
pub fn decompose_precoders(precoders: &[CMatrix]) -> PowerState {
    let mut state = PowerState {
        shapes: Vec::with_capacity(precoders.len()),
        theta: Vec::with_capacity(precoders.len()),
        active: Vec::with_capacity(precoders.len()),
        iteration: 0,
    };
    for f in precoders {
        let power = linalg::frobenius_sq(f);
        if power > 0.0 {
            state.shapes.push(f * c(1.0 / power.sqrt(), 0.0));
            state.theta.push(power);
            state.active.push(true);
        } else {
            state.shapes.push(CMatrix::zeros(f.nrows(), f.ncols()));
            state.theta.push(0.0);
            state.active.push(false);
        }
    }
    state
}

/// Relays with a dominant first hop (`a`) and a dominant second hop (`b`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkClassification {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl LinkClassification {
    /// Both sets nonempty: some relay wastes first-hop power while another is
    /// held back by the first hop.
    pub fn has_mismatch(&self) -> bool {
        !self.a.is_empty() && !self.b.is_empty()
    }
}

pub fn classify_links(sinr: &[f64], eta: &[f64]) -> LinkClassification {
    let mut out = LinkClassification::default();
    for (k, (&xi, &target)) in sinr.iter().zip(eta).enumerate() {
        if xi > target * (1.0 + CLASSIFY_TOLERANCE) {
            out.a.push(k);
        } else if xi < target * (1.0 - CLASSIFY_TOLERANCE) {
            out.b.push(k);
        }
    }
    out
}

/// First-hop channels composed with the frozen shapes, plus per-relay targets.
#[derive(Debug, Clone)]
pub struct PowerControlProblem {
    /// `composed[k][m]`: channel from relay `m`'s transmitter to relay `k`
    /// times `shape_m`.
    composed: Vec<Vec<CMatrix>>,
    noise: f64,
    eta: Vec<f64>,
    t: f64,
}

impl PowerControlProblem {
    pub fn new(
        channels: &ChannelSet,
        topology: &Topology,
        spec: &SystemSpec,
        state: &PowerState,
        eta: Vec<f64>,
    ) -> Result<Self> {
        let relays = topology.relays();
        if state.shapes.len() != relays || eta.len() != relays {
            return Err(Error::DimensionMismatch(format!(
                "{} shapes and {} targets for {relays} relays",
                state.shapes.len(),
                eta.len()
            )));
        }
        let composed = (0..relays)
            .map(|k| {
                (0..relays)
                    .map(|m| &channels.first_hop[k][topology.mu[m]] * &state.shapes[m])
                    .collect()
            })
            .collect();
        Ok(PowerControlProblem {
            composed,
            noise: spec.relay_noise,
            eta,
            t: spec.timesharing,
        })
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn relays(&self) -> usize {
        self.composed.len()
    }

    /// Eigenvalues of `G* R^{-1} G` at relay `k`, where `G` is the composed
    /// desired channel and `R` the interference-plus-noise covariance under
    /// the powers of the other relays.
    fn gains(&self, theta: &[f64], k: usize) -> Result<Vec<f64>> {
        let row = &self.composed[k];
        let dim = row[k].nrows();
        let mut cov = identity(dim) * c(self.noise, 0.0);
        for (m, h) in row.iter().enumerate() {
            if m != k && theta[m] > 0.0 {
                cov.gemm(c(theta[m], 0.0), h, &h.adjoint(), c(1.0, 0.0));
            }
        }
        let whitened = linalg::solve_pd(&cov, &row[k])?;
        let gram = linalg::hermitian_part(&(row[k].adjoint() * whitened));
        Ok(linalg::hermitian_eigen(&gram).0.into_iter().map(|g| g.max(0.0)).collect())
    }

    /// `det(I + theta_k G* R^{-1} G) - 1` at relay `k`.
    pub fn sinr(&self, theta: &[f64], k: usize) -> Result<f64> {
        Ok(sinr_at(&self.gains(theta, k)?, theta[k]))
    }

    pub fn sinrs(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (0..self.relays()).map(|k| self.sinr(theta, k)).collect()
    }

    /// `min(t log2(1 + xi_k), t log2(1 + eta_k))` per relay.
    pub fn end_to_end_rates(&self, sinr: &[f64]) -> Vec<f64> {
        sinr.iter()
            .zip(&self.eta)
            .map(|(&xi, &eta)| self.t * xi.min(eta).ln_1p() / LN_2)
            .collect()
    }
}

fn sinr_at(gains: &[f64], power: f64) -> f64 {
    gains.iter().map(|g| (power * g).ln_1p()).sum::<f64>().exp_m1()
}

/// SINR of relay `k` under the state's powers.
pub fn powered_sinr(problem: &PowerControlProblem, state: &PowerState, k: usize) -> Result<f64> {
    problem.sinr(&state.theta, k)
}

/// Power at which relay `k`'s SINR equals its target, with the other relays'
/// powers held at `theta`.
///
/// Bisects on `[0, theta_k]` until the bracket cannot shrink further and
/// returns the lower end, so the achieved SINR never exceeds the target.
pub fn rate_matching_power(problem: &PowerControlProblem, theta: &[f64], k: usize) -> Result<f64> {
    let target = problem.eta[k];
    if target <= 0.0 {
        return Ok(0.0);
    }
    let gains = problem.gains(theta, k)?;
    let (mut lo, mut hi) = (0.0, theta[k]);
    if !(sinr_at(&gains, hi) > target) {
        return Err(Error::BracketFailure(format!(
            "relay {k}: SINR {} at full power does not exceed target {target}",
            sinr_at(&gains, hi)
        )));
    }
    for _ in 0..MATCH_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sinr_at(&gains, mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// One simultaneous update: every relay in `classification.a` moves to its
/// rate-matching power computed against the current powers.
pub fn power_control_step(
    problem: &PowerControlProblem,
    state: &PowerState,
    classification: &LinkClassification,
) -> Result<PowerState> {
    let mut next = state.clone();
    for &k in &classification.a {
        next.theta[k] = rate_matching_power(problem, &state.theta, k)?.min(state.theta[k]);
    }
    next.iteration += 1;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct PowerControlOutcome {
    pub state: PowerState,
    /// SINRs and classification at exit.
    pub sinr: Vec<f64>,
    pub classification: LinkClassification,
    /// Powers before the first step and after each step.
    pub theta_history: Vec<Vec<f64>>,
    /// Per-relay end-to-end rates matching `theta_history`.
    pub rate_history: Vec<Vec<f64>>,
    pub trace: Vec<TraceRecord>,
    /// Set A was empty at exit.
    pub converged: bool,
}

impl PowerControlOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Steps until set A is empty or `max_iter` steps have been taken.
pub fn run_power_control(
    problem: &PowerControlProblem,
    initial: PowerState,
    max_iter: usize,
) -> Result<PowerControlOutcome> {
    let mut state = initial;
    let mut sinr = problem.sinrs(&state.theta)?;
    let mut classification = classify_links(&sinr, &problem.eta);
    let mut theta_history = vec![state.theta.clone()];
    let mut rate_history = vec![problem.end_to_end_rates(&sinr)];
    let mut trace = Vec::new();

    for iteration in 1..=max_iter {
        if classification.a.is_empty() {
            break;
        }
        let next = power_control_step(problem, &state, &classification)?;
        let delta = next
            .theta
            .iter()
            .zip(&state.theta)
            .map(|(a, b)| (a.sqrt() - b.sqrt()).abs())
            .fold(0.0, f64::max);
        state = next;
        sinr = problem.sinrs(&state.theta)?;
        classification = classify_links(&sinr, &problem.eta);
        let rates = problem.end_to_end_rates(&sinr);
        trace.push(TraceRecord {
            phase: 3,
            iteration,
            objective_bits: rates.iter().sum(),
            max_delta: delta,
        });
        theta_history.push(state.theta.clone());
        rate_history.push(rates);
    }

    Ok(PowerControlOutcome {
        converged: classification.a.is_empty(),
        state,
        sinr,
        classification,
        theta_history,
        rate_history,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_matrix, scalar};
    use crate::rates;
    use crate::topology::{build_topology, rng_from_seed, sample_channels};

    fn unit() -> CMatrix {
        scalar(c(1.0, 0.0))
    }

    /// Two single-antenna transmitters each serving one relay, all gains 1.
    fn two_links(theta: [f64; 2], eta: Vec<f64>) -> (PowerControlProblem, PowerState) {
        let spec = SystemSpec::new((1, 2), (1, 2), (1, 2), 1, 1).unwrap();
        let topo = build_topology(&spec);
        let ch = ChannelSet {
            first_hop: vec![vec![unit(), unit()], vec![unit(), unit()]],
            second_hop: vec![vec![unit(), unit()], vec![unit(), unit()]],
        };
        let f: Vec<CMatrix> = theta.iter().map(|t| scalar(c(t.sqrt(), 0.0))).collect();
        let state = decompose_precoders(&f);
        (PowerControlProblem::new(&ch, &topo, &spec, &state, eta).unwrap(), state)
    }

    fn single(theta: f64, eta: f64) -> (PowerControlProblem, PowerState) {
        let spec = SystemSpec::new((1, 1), (1, 1), (1, 1), 1, 1).unwrap();
        let topo = build_topology(&spec);
        let ch = ChannelSet {
            first_hop: vec![vec![unit()]],
            second_hop: vec![vec![unit()]],
        };
        let state = decompose_precoders(&[scalar(c(theta.sqrt(), 0.0))]);
        (PowerControlProblem::new(&ch, &topo, &spec, &state, vec![eta]).unwrap(), state)
    }

    #[test]
    fn decompose_examples() {
        let s = decompose_precoders(&[real_matrix(2, 1, &[2.0, 0.0])]);
        assert_eq!(s.shapes[0], real_matrix(2, 1, &[1.0, 0.0]));
        assert_eq!(s.norms(), vec![2.0]);
        assert_eq!(s.theta, vec![4.0]);
        let s = decompose_precoders(&[CMatrix::zeros(2, 1)]);
        assert_eq!(s.theta, vec![0.0]);
        assert_eq!(s.active, vec![false]);
        let mut rng = rng_from_seed(3);
        let f = vec![linalg::complex_gaussian(&mut rng, 3, 2), linalg::complex_gaussian(&mut rng, 3, 2)];
        let s = decompose_precoders(&f);
        for (a, b) in s.precoders().iter().zip(&f) {
            assert!((a - b).norm() < 1e-12);
        }
        for shape in &s.shapes {
            assert!((linalg::frobenius_sq(shape) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sinr_examples() {
        let (p, s) = single(2.0, 1.0);
        assert!((powered_sinr(&p, &s, 0).unwrap() - 2.0).abs() < 1e-14);
        let (p, s) = two_links([9.0, 1.0], vec![1.0, 1.0]);
        assert!((powered_sinr(&p, &s, 0).unwrap() - 4.5).abs() < 1e-13);
        assert!((p.sinr(&[0.0, 1.0], 0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sinr_matches_first_hop_metrics() {
        let spec = SystemSpec::new((2, 2), (2, 4), (2, 8), 2, 1).unwrap().with_power_db(10.0, 10.0);
        let topo = build_topology(&spec);
        let ch = sample_channels(&topo, &spec, 11);
        let f = crate::hop::Hop::first(&ch, &topo, &spec).random_precoders(2, &mut rng_from_seed(5));
        let mut state = decompose_precoders(&f);
        state.theta[1] *= 0.3;
        let p = PowerControlProblem::new(&ch, &topo, &spec, &state, vec![1.0; 4]).unwrap();
        let metrics = rates::first_hop_metrics(&ch, &topo, &spec, &state.precoders()).unwrap();
        for k in 0..4 {
            let xi = powered_sinr(&p, &state, k).unwrap();
            assert!((xi - metrics.sinr[k]).abs() <= 1e-10 * (1.0 + xi));
        }
    }

    #[test]
    fn sinr_increases_with_own_power() {
        let (p, _) = two_links([1.0, 1.0], vec![1.0, 1.0]);
        let mut last = -1.0;
        for i in 0..50 {
            let xi = p.sinr(&[0.2 * i as f64, 1.0], 0).unwrap();
            assert!(xi > last);
            last = xi;
        }
    }

    #[test]
    fn classification_examples() {
        let cls = classify_links(&[7.0, 1.0], &[3.0, 3.0]);
        assert_eq!((cls.a, cls.b), (vec![0], vec![1]));
        let cls = classify_links(&[3.0, 2.0], &[3.0, 2.0]);
        assert!(cls.a.is_empty() && cls.b.is_empty());
        let cls = classify_links(&[7.0, 9.0], &[3.0, 3.0]);
        assert_eq!(cls.a, vec![0, 1]);
        assert!(cls.b.is_empty() && !cls.has_mismatch());
    }

    #[test]
    fn rate_matching_examples() {
        let (p, s) = single(5.0, 2.0);
        assert!((rate_matching_power(&p, &s.theta, 0).unwrap() - 2.0).abs() < 1e-14);
        let (p, s) = two_links([9.0, 1.0], vec![1.0, 1.0]);
        let phi = rate_matching_power(&p, &s.theta, 0).unwrap();
        assert!((phi - 2.0).abs() < 1e-14);
        let xi = p.sinr(&[phi, 1.0], 0).unwrap();
        assert!(xi <= 1.0 && (xi - 1.0).abs() <= 1e-6 * 2.0);
        // Precondition violated: relay 1 is below target.
        assert!(rate_matching_power(&p, &s.theta, 1).is_err());
    }

    #[test]
    fn step_examples() {
        let (p, s) = two_links([9.0, 1.0], vec![1.0, 1.0]);
        let cls = classify_links(&p.sinrs(&s.theta).unwrap(), p.eta());
        assert_eq!((cls.a.clone(), cls.b.clone()), (vec![0], vec![1]));
        let next = power_control_step(&p, &s, &cls).unwrap();
        assert!((next.theta[0] - 2.0).abs() < 1e-14);
        assert_eq!(next.theta[1], 1.0);
        let xi = p.sinrs(&next.theta).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-14 && (xi[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!(classify_links(&xi, p.eta()).a.is_empty());
        let rates = p.end_to_end_rates(&xi);
        assert!((rates[0] - 0.5).abs() < 1e-13);
        assert!((rates[1] - 0.5 * (4f64 / 3.0).log2()).abs() < 1e-13);

        let empty = LinkClassification::default();
        assert_eq!(power_control_step(&p, &s, &empty).unwrap().theta, s.theta);
    }

    #[test]
    fn run_examples() {
        let (p, s) = two_links([9.0, 1.0], vec![1.0, 1.0]);
        let out = run_power_control(&p, s, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(out.iterations(), 1);
        assert!(out.converged && out.classification.a.is_empty());
        assert!(out.rate_history[1][1] > out.rate_history[0][1]);

        let (p, s) = two_links([1.0, 1.0], vec![1.0, 1.0]);
        let out = run_power_control(&p, s.clone(), DEFAULT_MAX_ITER).unwrap();
        assert_eq!(out.iterations(), 0);
        assert_eq!(out.state, s);
    }

    #[test]
    fn random_runs_keep_invariants() {
        let spec = SystemSpec::new((2, 3), (2, 6), (2, 12), 1, 1).unwrap().with_power_db(20.0, 20.0);
        let topo = build_topology(&spec);
        for seed in 0..10 {
            let ch = sample_channels(&topo, &spec, seed);
            let f = crate::hop::Hop::first(&ch, &topo, &spec).random_precoders(1, &mut rng_from_seed(seed));
            let state = decompose_precoders(&f);
            let mut rng = rng_from_seed(seed + 100);
            let eta: Vec<f64> = (0..6).map(|_| 10.0 * rand::Rng::random::<f64>(&mut rng)).collect();
            let p = PowerControlProblem::new(&ch, &topo, &spec, &state, eta).unwrap();
            let out = run_power_control(&p, state, DEFAULT_MAX_ITER).unwrap();
            for w in out.theta_history.windows(2) {
                assert!(w[1].iter().zip(&w[0]).all(|(a, b)| a <= b));
            }
            for w in out.rate_history.windows(2) {
                assert!(w[1].iter().zip(&w[0]).all(|(a, b)| *a >= b - 1e-9));
            }
            if out.iterations() < DEFAULT_MAX_ITER {
                assert!(out.converged);
                assert!(out.sinr.iter().zip(p.eta()).all(|(x, e)| *x <= e * (1.0 + CLASSIFY_TOLERANCE)));
            }
        }
    }
}
