use std::collections::BTreeSet;

use serde::Serialize;

use crate::grid::{BusId, Grid};
use crate::powerflow::PfSolution;

/// Default violation tolerance, p.u.
pub const DEFAULT_VIOLATION_TOL: f64 = 1e-5;

/// Operating-limit violations of one solved state. An element is listed when
/// it exceeds its limit by more than `tolerance` (p.u. of power, p.u. of
/// voltage, or radians).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ViolationReport {
    pub branch_overloads: BTreeSet<usize>,
    pub vm_violations: BTreeSet<BusId>,
    pub angle_violations: BTreeSet<usize>,
    pub qg_violations: BTreeSet<usize>,
    pub slack_pg_violation: bool,
    pub tolerance: f64,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.branch_overloads.is_empty()
            && self.vm_violations.is_empty()
            && self.angle_violations.is_empty()
            && self.qg_violations.is_empty()
            && !self.slack_pg_violation
    }

    pub fn count(&self) -> usize {
        self.branch_overloads.len()
            + self.vm_violations.len()
            + self.angle_violations.len()
            + self.qg_violations.len()
            + usize::from(self.slack_pg_violation)
    }
}

/// Checks branch ratings (either end), bus voltage bounds, branch angle
/// differences, generator reactive bounds and the active bounds of units at
/// the slack bus. Out-of-service elements are skipped.
pub fn detect_violations(grid: &Grid, sol: &PfSolution, tol: f64) -> ViolationReport {
    let base = grid.base_mva;
    let index = grid.bus_index();
    let mut report = ViolationReport { tolerance: tol, ..Default::default() };

    for br in grid.in_service_branches() {
        let f = &sol.branch_flows[br.id];
        if br.is_limited() && (f.s_from().max(f.s_to()) - br.rate_a) / base > tol {
            report.branch_overloads.insert(br.id);
        }
        if br.has_angle_limits() {
            let diff = sol.va[index[&br.from_bus]] - sol.va[index[&br.to_bus]];
            if diff - br.ang_max > tol || br.ang_min - diff > tol {
                report.angle_violations.insert(br.id);
            }
        }
    }
    for (i, bus) in grid.buses.iter().enumerate() {
        if sol.vm[i] - bus.vm_max > tol || bus.vm_min - sol.vm[i] > tol {
            report.vm_violations.insert(bus.id);
        }
    }
    let slack = grid.slack_bus();
    for g in grid.in_service_generators() {
        let (p, q) = (sol.pg[g.id], sol.qg[g.id]);
        if (q - g.q_max) / base > tol || (g.q_min - q) / base > tol {
            report.qg_violations.insert(g.id);
        }
        if g.bus == slack && ((p - g.p_max) / base > tol || (g.p_min - p) / base > tol) {
            report.slack_pg_violation = true;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_grids::triangle;
    use crate::powerflow::{compute_branch_flows, BranchFlow};

    fn flat(grid: &Grid) -> PfSolution {
        let n = grid.buses.len();
        let (vm, va) = (vec![1.0; n], vec![0.0; n]);
        PfSolution {
            branch_flows: compute_branch_flows(grid, &vm, &va),
            vm,
            va,
            pg: grid.generators.iter().map(|g| 0.5 * (g.p_min + g.p_max)).collect(),
            qg: vec![0.0; grid.generators.len()],
            converged: true,
            iterations: 0,
            runtime: 0.0,
            max_mismatch: 0.0,
            failure: None,
        }
    }

    #[test]
    fn voltage_tolerance_semantics() {
        let g = triangle();
        let tol = 1e-5;
        let mut s = flat(&g);
        s.vm[1] = g.buses[1].vm_max + 0.5 * tol;
        assert!(detect_violations(&g, &s, tol).is_empty());
        s.vm[1] = g.buses[1].vm_max + 2.0 * tol;
        assert_eq!(detect_violations(&g, &s, tol).vm_violations, BTreeSet::from([2]));
        s.vm[1] = g.buses[1].vm_min - 2.0 * tol;
        assert_eq!(detect_violations(&g, &s, tol).count(), 1);
    }

    #[test]
    fn overloads_and_unlimited_branches() {
        let mut g = triangle();
        g.branches[0].rate_a = 50.0;
        let mut s = flat(&g);
        s.branch_flows[0] = BranchFlow { p_from: 60.0, q_from: 0.0, p_to: -59.0, q_to: 0.0 };
        s.branch_flows[1] = BranchFlow { p_from: 600.0, q_from: 0.0, p_to: -590.0, q_to: 0.0 };
        let r = detect_violations(&g, &s, 1e-5);
        assert_eq!(r.branch_overloads, BTreeSet::from([0]));
        g.branches[0].status = crate::grid::Status::OutOfService;
        assert!(detect_violations(&g, &s, 1e-5).is_empty());
    }

    #[test]
    fn angle_reactive_and_slack_checks() {
        let mut g = triangle();
        g.branches[2].ang_max = 0.1;
        g.branches[2].ang_min = -0.1;
        let mut s = flat(&g);
        s.va[2] = -0.2;
        s.qg[0] = g.generators[0].q_max + 1.0;
        s.pg[0] = g.generators[0].p_max + 1.0;
        let r = detect_violations(&g, &s, 1e-5);
        assert_eq!(r.angle_violations, BTreeSet::from([2]));
        assert_eq!(r.qg_violations, BTreeSet::from([0]));
        assert!(r.slack_pg_violation);
    }

    #[test]
    fn monotone_in_tolerance() {
        let g = triangle();
        let mut s = flat(&g);
        s.vm = vec![1.10001, 0.89995, 1.1002];
        s.qg[0] = g.generators[0].q_max + 0.0005;
        let tols = [1e-6, 1e-5, 1e-4, 1e-3];
        for w in tols.windows(2) {
            let tight = detect_violations(&g, &s, w[0]);
            let loose = detect_violations(&g, &s, w[1]);
            assert!(loose.vm_violations.is_subset(&tight.vm_violations));
            assert!(loose.qg_violations.is_subset(&tight.qg_violations));
            assert!(loose.count() <= tight.count());
        }
    }
}
