//! Admittance assembly, Newton–Raphson AC power flow, DC power flow and
//! branch loading.

mod ac;
mod admittance;
pub(crate) mod coupling;
mod dc;

pub use ac::{solve_ac_pf, BusKinds, PfOptions, Setpoints};
pub use admittance::{branch_admittances, build_admittance, AdmittanceMatrix, BranchAdmittance};
pub use dc::{dc_susceptance, solve_dc_pf, DcPfSolution};

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("singular DC system: network not connected to the slack")]
    SingularSystem,
}

/// Why an AC solve stopped without meeting its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    MaxIterations,
    SingularJacobian,
    Diverged,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::MaxIterations => "max_iterations",
            FailureReason::SingularJacobian => "singular_jacobian",
            FailureReason::Diverged => "diverged",
        }
    }
}

/// Complex power at both ends of a branch, in MW / MVAr.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    pub fn s_from(&self) -> f64 {
        self.p_from.hypot(self.q_from)
    }

    pub fn s_to(&self) -> f64 {
        self.p_to.hypot(self.q_to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    /// Per-bus voltage magnitude (p.u.), indexed like `Grid::buses`.
    pub vm: Vec<f64>,
    /// Per-bus voltage angle (radians).
    pub va: Vec<f64>,
    /// Per-generator active output (MW); zero for out-of-service units.
    pub pg: Vec<f64>,
    /// Per-generator reactive output (MVAr).
    pub qg: Vec<f64>,
    /// Per-branch flows; zero for out-of-service branches.
    pub branch_flows: Vec<BranchFlow>,
    pub converged: bool,
    pub iterations: usize,
    pub runtime: f64,
    /// Largest absolute P/Q mismatch at the final iterate (p.u.).
    pub max_mismatch: f64,
    pub failure: Option<FailureReason>,
}

/// Per-bus complex injections `V ∘ conj(Y V)` in p.u.
pub fn bus_injections(y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    y.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let current: Complex64 = row.iter().map(|&(k, yik)| yik * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Branch flows (MW/MVAr) for every branch of `grid` from a voltage profile.
pub fn compute_branch_flows(grid: &Grid, vm: &[f64], va: &[f64]) -> Vec<BranchFlow> {
    let mut flows = vec![BranchFlow::default(); grid.branches.len()];
    for ba in branch_admittances(grid) {
        let vf = Complex64::from_polar(vm[ba.from], va[ba.from]);
        let vt = Complex64::from_polar(vm[ba.to], va[ba.to]);
        let sf = vf * (ba.yff * vf + ba.yft * vt).conj() * grid.base_mva;
        let st = vt * (ba.ytf * vf + ba.ytt * vt).conj() * grid.base_mva;
        flows[ba.branch] = BranchFlow { p_from: sf.re, q_from: sf.im, p_to: st.re, q_to: st.im };
    }
    flows
}

/// Loading of each branch: the larger end apparent power over `rate_a`.
/// Unlimited branches (`rate_a == 0`) report zero.
pub fn branch_loading(flows: &[BranchFlow], rate_a: &[f64]) -> Vec<f64> {
    flows
        .iter()
        .zip(rate_a)
        .map(|(f, &rate)| if rate > 0.0 { f.s_from().max(f.s_to()) / rate } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five_loading() {
        let f = BranchFlow { p_from: 80.0, q_from: 60.0, p_to: -79.0, q_to: -58.0 };
        assert_eq!(branch_loading(&[f], &[100.0]), vec![1.0]);
        assert_eq!(branch_loading(&[f], &[0.0]), vec![0.0]);
    }

    #[test]
    fn loading_takes_the_larger_end() {
        let f = BranchFlow { p_from: 30.0, q_from: 0.0, p_to: -40.0, q_to: 0.0 };
        assert_eq!(branch_loading(&[f], &[50.0]), vec![0.8]);
    }
}
