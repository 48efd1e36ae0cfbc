//! Iteration bookkeeping shared by the alternating-minimization phases.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix};

/// One line of a phase trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub phase: u8,
    pub iteration: usize,
    pub objective_bits: f64,
    pub max_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Absolute objective change (bits) below which the run counts as converged.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

/// Final iterate of an alternating-minimization run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub precoders: Vec<CMatrix>,
    /// Receive filters the last precoder update was computed from.
    pub filters: Vec<CMatrix>,
    /// Matrix weights the last precoder update was computed from.
    pub weights: Vec<CMatrix>,
    pub initial_objective: f64,
    pub objective: f64,
    /// Largest node power over budget seen at any iterate, including the initial one.
    pub peak_power_ratio: f64,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
}

impl SolverState {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Largest Frobenius-norm change between two precoder lists.
pub fn max_delta(old: &[CMatrix], new: &[CMatrix]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| linalg::frobenius_sq(&(a - b)).sqrt())
        .fold(0.0, f64::max)
}

/// Largest `power / budget` over nodes; 0 for a zero budget with zero power.
pub fn power_ratio(powers: &[f64], budget: f64) -> f64 {
    powers
        .iter()
        .map(|&p| if budget > 0.0 { p / budget } else if p > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max)
}
