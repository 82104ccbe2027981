//! Cost-optimal dispatch: polar AC-OPF and DC-OPF, both solved by the
//! primal-dual interior-point method in [`ipm`].

mod ac;
mod dc;
pub mod ipm;

pub use ac::solve_ac_opf;
pub use dc::{solve_dc_opf, DcOpfSolution};

use thiserror::Error;

use crate::grid::Grid;
use crate::powerflow::PfSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpfError {
    #[error("DC-OPF infeasible after {iterations} interior-point iterations")]
    Infeasible { iterations: usize, runtime: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OpfProblem<'a> {
    pub grid: &'a Grid,
    pub enforce_branch_limits: bool,
    pub enforce_angle_limits: bool,
}

impl<'a> OpfProblem<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        OpfProblem { grid, enforce_branch_limits: true, enforce_angle_limits: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions { tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfSolution {
    /// Operating point at the last iterate.
    pub state: PfSolution,
    /// Generation cost, $/h.
    pub objective: f64,
    pub feasible: bool,
    pub barrier_iterations: usize,
    /// Normalized Lagrangian-gradient norm at the returned point.
    pub kkt_residual: f64,
}

/// Internal objective multiplier making the largest marginal cost at the
/// reference dispatch equal to one. Proportional cost changes therefore
/// leave the scaled problem, and its iterates, unchanged.
pub(crate) fn cost_scale(grid: &Grid, units: &[usize], reference_mw: impl Fn(usize) -> f64) -> f64 {
    let base = grid.base_mva;
    let largest = units
        .iter()
        .enumerate()
        .map(|(u, &g)| {
            let c = &grid.generators[g].cost;
            (base * (2.0 * c.c2 * reference_mw(u) + c.c1)).abs()
        })
        .fold(0.0f64, f64::max);
    if largest > 1e-12 {
        1.0 / largest
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests;
