//! One hop viewed as a single-hop interference broadcast channel.
//!
//! A hop has transmitting *nodes* (transmitters on hop 1, relays on hop 2)
//! and *links* (relays on hop 1, receivers on hop 2). Every link is owned by
//! one node, carries its own precoder, and treats all other links' signals as
//! interference, including those sent by its own node.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, add_outer, c, complex_gaussian, identity, CMatrix, ONE, ZERO};
use crate::rates::{self, LinkSolution};
use crate::topology::{ChannelSet, SystemSpec, Topology};

/// Relative power error at which the multiplier bisection stops.
pub const MULTIPLIER_REL_TOL: f64 = 1e-8;
/// Iteration cap of the multiplier bisection.
pub const MULTIPLIER_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy)]
pub struct Hop<'a> {
    /// `channels[link][node]`: node to the link's receiver.
    channels: &'a [Vec<CMatrix>],
    owner: &'a [usize],
    node_links: &'a [Vec<usize>],
    noise: f64,
    budget: f64,
}

/// New precoders plus the power multiplier chosen for each node.
#[derive(Debug, Clone)]
pub struct PrecoderUpdate {
    pub precoders: Vec<CMatrix>,
    pub multipliers: Vec<f64>,
}

impl<'a> Hop<'a> {
    pub fn new(
        channels: &'a [Vec<CMatrix>],
        owner: &'a [usize],
        node_links: &'a [Vec<usize>],
        noise: f64,
        budget: f64,
    ) -> Self {
        Hop {
            channels,
            owner,
            node_links,
            noise,
            budget,
        }
    }

    /// Transmitters to relays.
    pub fn first(channels: &'a ChannelSet, topology: &'a Topology, spec: &SystemSpec) -> Self {
        Hop::new(
            &channels.first_hop,
            &topology.mu,
            &topology.transmitter_relays,
            spec.relay_noise,
            spec.tx_power,
        )
    }

    /// Relays to receivers.
    pub fn second(channels: &'a ChannelSet, topology: &'a Topology, spec: &SystemSpec) -> Self {
        Hop::new(
            &channels.second_hop,
            &topology.chi,
            &topology.relay_receivers,
            spec.receiver_noise,
            spec.relay_power,
        )
    }

    pub fn links(&self) -> usize {
        self.owner.len()
    }

    pub fn nodes(&self) -> usize {
        self.node_links.len()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn node_links(&self) -> &[Vec<usize>] {
        self.node_links
    }

    /// Channel from `node` to the receiver of `link`.
    pub fn channel(&self, link: usize, node: usize) -> &CMatrix {
        &self.channels[link][node]
    }

    fn rx_dim(&self, link: usize) -> usize {
        self.channels[link][0].nrows()
    }

    /// Channel into `link`'s receiver times the precoder of link `from`.
    pub fn effective(&self, link: usize, from: usize, precoders: &[CMatrix]) -> CMatrix {
        &self.channels[link][self.owner[from]] * &precoders[from]
    }

    pub fn desired(&self, link: usize, precoders: &[CMatrix]) -> CMatrix {
        self.effective(link, link, precoders)
    }

    /// Interference plus noise covariance at `link`'s receiver.
    pub fn covariance(&self, link: usize, precoders: &[CMatrix]) -> CMatrix {
        let mut cov = identity(self.rx_dim(link)) * c(self.noise, 0.0);
        for other in (0..self.links()).filter(|&o| o != link) {
            add_outer(&mut cov, &self.effective(link, other, precoders));
        }
        linalg::hermitian_part(&cov)
    }

    pub fn solve_links(&self, precoders: &[CMatrix]) -> Result<Vec<LinkSolution>> {
        self.check_precoders(precoders)?;
        (0..self.links())
            .map(|l| rates::solve_link(&self.desired(l, precoders), &self.covariance(l, precoders)))
            .collect()
    }

    /// MSE matrices `E_l(F, W_l)` for arbitrary filters.
    pub fn mse_matrices(&self, precoders: &[CMatrix], filters: &[CMatrix]) -> Result<Vec<CMatrix>> {
        self.check_precoders(precoders)?;
        (0..self.links())
            .map(|l| {
                rates::mse_matrix(
                    &self.desired(l, precoders),
                    &self.covariance(l, precoders),
                    &filters[l],
                )
            })
            .collect()
    }

    pub fn node_powers(&self, precoders: &[CMatrix]) -> Vec<f64> {
        rates::node_powers(precoders, self.node_links)
    }

    fn check_precoders(&self, precoders: &[CMatrix]) -> Result<()> {
        if precoders.len() != self.links() {
            return Err(Error::DimensionMismatch(format!(
                "{} precoders for {} links",
                precoders.len(),
                self.links()
            )));
        }
        for (l, f) in precoders.iter().enumerate() {
            let cols = self.channels[l][self.owner[l]].ncols();
            if f.nrows() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "precoder {l} has {} rows, node has {cols} antennas",
                    f.nrows()
                )));
            }
        }
        Ok(())
    }

    /// Random Gaussian precoders with every node's budget split equally over
    /// its links and met with equality.
    pub fn random_precoders<R: Rng + ?Sized>(&self, streams: usize, rng: &mut R) -> Vec<CMatrix> {
        let mut precoders: Vec<CMatrix> = (0..self.links())
            .map(|l| {
                let antennas = self.channels[l][self.owner[l]].ncols();
                complex_gaussian(rng, antennas, streams)
            })
            .collect();
        for links in self.node_links {
            let share = self.budget / links.len() as f64;
            for &l in links {
                let norm_sq = linalg::frobenius_sq(&precoders[l]);
                if norm_sq > 0.0 {
                    precoders[l] *= c((share / norm_sq).sqrt(), 0.0);
                }
            }
        }
        precoders
    }

    /// Scales down any node whose precoders exceed the budget.
    pub fn project_to_budget(&self, precoders: &mut [CMatrix]) {
        for (links, power) in self.node_links.iter().zip(self.node_powers(precoders)) {
            if power > self.budget {
                let s = (self.budget / power).sqrt();
                for &l in links {
                    precoders[l] *= c(s, 0.0);
                }
            }
        }
    }

    /// Minimizes `sum_l tr(U_l E_l(F, W_l))` over `F` under per-node sum-power
    /// budgets, for fixed filters `W` and Hermitian PSD weights `U`.
    ///
    /// For node `j` the minimizer is `F_l = (A_j + lambda_j I)^{-1} B_l`, with
    /// `A_j = sum_l C_{l,j}* W_l U_l W_l* C_{l,j}` over all links and
    /// `B_l = C_{l,j}* W_l U_l` for the node's own links. `lambda_j` is zero
    /// when the unconstrained solution fits the budget, otherwise the root of
    /// the (strictly decreasing) power equation.
    pub fn precoder_update(&self, filters: &[CMatrix], weights: &[CMatrix]) -> Result<PrecoderUpdate> {
        if filters.len() != self.links() || weights.len() != self.links() {
            return Err(Error::DimensionMismatch("one filter and weight per link".into()));
        }
        let inner: Vec<CMatrix> = filters
            .iter()
            .zip(weights)
            .map(|(w, u)| w * u * w.adjoint())
            .collect();

        let mut precoders: Vec<CMatrix> = vec![CMatrix::zeros(0, 0); self.links()];
        let mut multipliers = Vec::with_capacity(self.nodes());
        for (node, links) in self.node_links.iter().enumerate() {
            if links.is_empty() {
                multipliers.push(0.0);
                continue;
            }
            let antennas = self.channels[links[0]][node].ncols();
            let mut a = CMatrix::zeros(antennas, antennas);
            for (l, k) in inner.iter().enumerate() {
                let ch = &self.channels[l][node];
                a += ch.adjoint() * k * ch;
            }
            let (eigvals, eigvecs) = linalg::hermitian_eigen(&a);
            let projected: Vec<CMatrix> = links
                .iter()
                .map(|&l| {
                    let b = self.channels[l][node].adjoint() * &filters[l] * &weights[l];
                    eigvecs.adjoint() * b
                })
                .collect();
            // Energy of the right-hand sides along each eigendirection.
            let energy: Vec<f64> = (0..antennas)
                .map(|i| {
                    projected
                        .iter()
                        .map(|p| p.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
                        .sum()
                })
                .collect();
            let lambda = solve_multiplier(&eigvals, &energy, self.budget)?;
            let scale = |i: usize| -> f64 {
                let denom = eigvals[i].max(0.0) + lambda;
                if denom > 0.0 {
                    1.0 / denom
                } else {
                    0.0
                }
            };
            for (&l, p) in links.iter().zip(projected) {
                let scaled = CMatrix::from_fn(p.nrows(), p.ncols(), |i, s| p[(i, s)] * scale(i));
                let mut f = CMatrix::zeros(antennas, p.ncols());
                f.gemm(ONE, &eigvecs, &scaled, ZERO);
                precoders[l] = f;
            }
            multipliers.push(lambda);
        }
        Ok(PrecoderUpdate {
            precoders,
            multipliers,
        })
    }
}

/// Sum of squared precoder norms at multiplier `lambda`, given the eigenvalues
/// of the node's quadratic term and the right-hand-side energy along each
/// eigenvector. Directions with zero eigenvalue and zero energy contribute nothing.
pub fn power_at(eigvals: &[f64], energy: &[f64], lambda: f64) -> f64 {
    eigvals
        .iter()
        .zip(energy)
        .map(|(&ev, &en)| {
            if en == 0.0 {
                return 0.0;
            }
            let denom = ev.max(0.0) + lambda;
            if denom > 0.0 {
                en / (denom * denom)
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Complementary-slackness multiplier for one node.
///
/// Returns 0 when the unconstrained power fits `budget`; otherwise brackets the
/// root by doubling from 1 and bisects, keeping the feasible (upper) end.
pub fn solve_multiplier(eigvals: &[f64], energy: &[f64], budget: f64) -> Result<f64> {
    // Eigenvalues at round-off level are treated as exact zeros.
    let top = eigvals.iter().cloned().fold(0.0_f64, f64::max);
    let floor = top * 1e-13;
    let cleaned: Vec<f64> = eigvals.iter().map(|&e| if e <= floor { 0.0 } else { e }).collect();
    let energy_total: f64 = energy.iter().sum();
    let noise_floor = energy_total * 1e-26;
    let energy: Vec<f64> = energy.iter().map(|&e| if e <= noise_floor { 0.0 } else { e }).collect();

    if power_at(&cleaned, &energy, 0.0) <= budget {
        return Ok(0.0);
    }
    if budget <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while power_at(&cleaned, &energy, hi) > budget {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::BracketFailure(format!(
                "power still above budget {budget} at multiplier {hi}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..MULTIPLIER_MAX_ITER {
        let p_hi = power_at(&cleaned, &energy, hi);
        if (budget - p_hi).abs() <= MULTIPLIER_REL_TOL * budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power_at(&cleaned, &energy, mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;
    use crate::topology::{build_topology, rng_from_seed, sample_channels};

    #[test]
    fn multiplier_closed_forms() {
        // Scalar link: A = 1, B = 1, F = 1/(1+lambda).
        assert_eq!(solve_multiplier(&[1.0], &[1.0], 1.0).unwrap(), 0.0);
        let lambda = solve_multiplier(&[1.0], &[1.0], 0.25).unwrap();
        assert!((lambda - 1.0).abs() < 1e-8);
        // Singular quadratic term with energy on the null direction needs lambda > 0.
        let lambda = solve_multiplier(&[0.0, 2.0], &[1.0, 1.0], 1.0).unwrap();
        assert!(lambda > 0.0);
        assert!(power_at(&[0.0, 2.0], &[1.0, 1.0], lambda) <= 1.0);
        assert_eq!(solve_multiplier(&[0.0], &[0.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn power_decreases_in_multiplier() {
        let ev = [0.3, 1.2, 4.0];
        let en = [0.5, 2.0, 0.1];
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let p = power_at(&ev, &en, i as f64 * 0.1);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn update_respects_budget_and_shares_multiplier() {
        let spec = SystemSpec::new((2, 2), (2, 4), (2, 8), 1, 1)
            .unwrap()
            .with_powers(10.0, 10.0);
        let topo = build_topology(&spec);
        let ch = sample_channels(&topo, &spec, 17);
        let hop = Hop::first(&ch, &topo, &spec);
        let mut rng = rng_from_seed(1);
        let f = hop.random_precoders(1, &mut rng);
        let sols = hop.solve_links(&f).unwrap();
        let filters: Vec<CMatrix> = sols.iter().map(|s| s.filter.clone()).collect();
        let weights: Vec<CMatrix> = sols.iter().map(|s| linalg::inverse_pd(&s.mmse).unwrap()).collect();
        let upd = hop.precoder_update(&filters, &weights).unwrap();
        assert_eq!(upd.multipliers.len(), 2);
        for p in hop.node_powers(&upd.precoders) {
            assert!(p <= 10.0 * (1.0 + 1e-6));
        }
    }

    #[test]
    fn scalar_update_examples() {
        let channels = vec![vec![scalar(c(1.0, 0.0))]];
        let owner = [0];
        let node_links = vec![vec![0]];
        let one = vec![scalar(c(1.0, 0.0))];
        let hop = Hop::new(&channels, &owner, &node_links, 1.0, 1.0);
        let upd = hop.precoder_update(&one, &one).unwrap();
        assert_eq!(upd.multipliers[0], 0.0);
        assert!((upd.precoders[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);

        let hop = Hop::new(&channels, &owner, &node_links, 1.0, 0.25);
        let upd = hop.precoder_update(&one, &one).unwrap();
        assert!((upd.multipliers[0] - 1.0).abs() < 1e-7);
        assert!((upd.precoders[0][(0, 0)].re - 0.5).abs() < 1e-8);
    }

    #[test]
    fn random_init_meets_budget_with_equality() {
        let spec = SystemSpec::new((2, 3), (2, 6), (2, 12), 1, 1)
            .unwrap()
            .with_powers(4.0, 7.0);
        let topo = build_topology(&spec);
        let ch = sample_channels(&topo, &spec, 3);
        let mut rng = rng_from_seed(8);
        let hop = Hop::second(&ch, &topo, &spec);
        let f = hop.random_precoders(1, &mut rng);
        for p in hop.node_powers(&f) {
            assert!((p - 7.0).abs() < 1e-12);
        }
    }
}
