use num_complex::Complex64;

use super::coupling;
use super::{bus_injections, build_admittance, compute_branch_flows, AdmittanceMatrix, FailureReason, PfSolution};
use crate::clock::Stopwatch;
use crate::grid::{BusRole, Grid};
use crate::linalg::SparseBuilder;

#[derive(Debug, Clone, PartialEq)]
pub struct PfOptions {
    /// Convergence tolerance on the largest P/Q mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial `(vm, va)`; flat start when absent.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 30, warm_start: None }
    }
}

/// Fixed generator setpoints, one entry per generator of the grid:
/// active output (MW), reactive output (MVAr, only used for units sitting
/// on PQ buses) and voltage magnitude target (p.u.).
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoints {
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub vm: Vec<f64>,
}

impl Setpoints {
    pub fn from_grid(grid: &Grid) -> Self {
        Setpoints {
            pg: grid.generators.iter().map(|g| g.pg).collect(),
            qg: grid.generators.iter().map(|g| g.qg).collect(),
            vm: grid.generators.iter().map(|g| g.vg).collect(),
        }
    }
}

/// Bus classification used by the Newton–Raphson solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BusKinds {
    pub slack: usize,
    pub pv: Vec<usize>,
    pub pq: Vec<usize>,
}

impl BusKinds {
    /// PV buses are PV-role buses with at least one in-service generator;
    /// everything else except the slack is PQ.
    pub fn classify(grid: &Grid) -> Self {
        let index = grid.bus_index();
        let mut has_gen = vec![false; grid.buses.len()];
        for g in grid.in_service_generators() {
            has_gen[index[&g.bus]] = true;
        }
        let slack = grid.slack_position();
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        for (i, bus) in grid.buses.iter().enumerate() {
            if i == slack {
                continue;
            }
            if bus.role == BusRole::Pv && has_gen[i] {
                pv.push(i);
            } else {
                pq.push(i);
            }
        }
        BusKinds { slack, pv, pq }
    }
}

struct Layout {
    theta: Vec<Option<usize>>,
    vm: Vec<Option<usize>>,
    dim: usize,
}

impl Layout {
    fn new(n: usize, kinds: &BusKinds) -> Self {
        let mut theta = vec![None; n];
        let mut vm = vec![None; n];
        let mut next = 0;
        for &i in kinds.pv.iter().chain(&kinds.pq) {
            theta[i] = Some(next);
            next += 1;
        }
        for &i in &kinds.pq {
            vm[i] = Some(next);
            next += 1;
        }
        Layout { theta, vm, dim: next }
    }
}

fn mismatch(layout: &Layout, injections: &[Complex64], scheduled: &[Complex64]) -> Vec<f64> {
    let mut f = vec![0.0; layout.dim];
    for (i, (s, s_sched)) in injections.iter().zip(scheduled).enumerate() {
        if let Some(r) = layout.theta[i] {
            f[r] = s.re - s_sched.re;
        }
        if let Some(r) = layout.vm[i] {
            f[r] = s.im - s_sched.im;
        }
    }
    f
}

fn jacobian(layout: &Layout, y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> SparseBuilder {
    let mut jac = SparseBuilder::with_capacity(layout.dim, 4 * y.nnz());
    for (i, row) in y.rows.iter().enumerate() {
        let (p_row, q_row) = (layout.theta[i], layout.vm[i]);
        if p_row.is_none() && q_row.is_none() {
            continue;
        }
        for &(k, yik) in row {
            if k == i {
                let (_, _, dp, dq) = coupling::eval_self(yik, vm[i]);
                if let Some(c) = layout.vm[i] {
                    p_row.map(|r| jac.add(r, c, dp));
                    q_row.map(|r| jac.add(r, c, dq));
                }
                continue;
            }
            let e = coupling::eval(yik, vm[i], vm[k], va[i] - va[k]);
            let cols = [layout.theta[i], layout.theta[k], layout.vm[i], layout.vm[k]];
            for (slot, col) in cols.iter().enumerate() {
                if let Some(c) = *col {
                    p_row.map(|r| jac.add(r, c, e.dp[slot]));
                    q_row.map(|r| jac.add(r, c, e.dq[slot]));
                }
            }
        }
    }
    jac
}

/// Shares `total` among units with bounds `[lo, hi]`: each unit sits at the
/// same fraction of its range, so every share is within bounds whenever the
/// total is. Units without range split the remainder equally.
fn split(total: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let floor: f64 = bounds.iter().map(|b| b.0).sum();
    let range: f64 = bounds.iter().map(|b| (b.1 - b.0).max(0.0)).sum();
    if range > 0.0 {
        let frac = (total - floor) / range;
        bounds.iter().map(|&(lo, hi)| lo + frac * (hi - lo).max(0.0)).collect()
    } else {
        vec![total / bounds.len() as f64; bounds.len()]
    }
}

/// Newton–Raphson AC power flow in polar coordinates.
///
/// Generator reactive limits are recorded, never enforced: PV buses keep
/// their voltage target whatever reactive output that requires.
pub fn solve_ac_pf(grid: &Grid, setpoints: &Setpoints, options: &PfOptions) -> PfSolution {
    let clock = Stopwatch::start();
    let n = grid.buses.len();
    let base = grid.base_mva;
    let index = grid.bus_index();
    let kinds = BusKinds::classify(grid);
    let layout = Layout::new(n, &kinds);
    let y = build_admittance(grid);

    let demand = grid.bus_demand();
    let mut scheduled: Vec<Complex64> = demand.iter().map(|&(p, q)| Complex64::new(-p, -q) / base).collect();
    let mut target_vm: Vec<Option<f64>> = vec![None; n];
    for g in grid.in_service_generators() {
        let b = index[&g.bus];
        scheduled[b] += Complex64::new(setpoints.pg[g.id], setpoints.qg[g.id]) / base;
        if target_vm[b].is_none() {
            target_vm[b] = Some(setpoints.vm[g.id]);
        }
    }

    let (mut vm, mut va) = match &options.warm_start {
        Some((m, a)) => (m.clone(), a.clone()),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for &i in std::iter::once(&kinds.slack).chain(&kinds.pv) {
        if let Some(v) = target_vm[i] {
            vm[i] = v;
        }
    }
    if options.warm_start.is_none() {
        va[kinds.slack] = 0.0;
    }

    let mut iterations = 0;
    let mut failure = None;
    let mut injections;
    let mut max_mismatch;
    loop {
        injections = bus_injections(&y, &vm, &va);
        let f = mismatch(&layout, &injections, &scheduled);
        max_mismatch = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !max_mismatch.is_finite() || max_mismatch > 1e10 {
            failure = Some(FailureReason::Diverged);
            break;
        }
        if max_mismatch <= options.tol {
            break;
        }
        if iterations >= options.max_iter {
            failure = Some(FailureReason::MaxIterations);
            break;
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = match jacobian(&layout, &y, &vm, &va).solve(&rhs) {
            Ok(dx) => dx,
            Err(_) => {
                failure = Some(FailureReason::SingularJacobian);
                break;
            }
        };
        for i in 0..n {
            if let Some(c) = layout.theta[i] {
                va[i] += step[c];
            }
            if let Some(c) = layout.vm[i] {
                vm[i] += step[c];
            }
        }
        iterations += 1;
    }

    let (pg, qg) = recover_dispatch(grid, setpoints, &kinds, &injections, &demand);
    let branch_flows = compute_branch_flows(grid, &vm, &va);
    PfSolution {
        vm,
        va,
        pg,
        qg,
        branch_flows,
        converged: failure.is_none(),
        iterations,
        runtime: clock.seconds(),
        max_mismatch,
        failure,
    }
}

/// Generator outputs implied by the solved voltages: slack active power
/// goes to the first in-service unit at the slack bus, reactive power at
/// voltage-controlled buses puts every unit at the same fraction of its
/// reactive range.
fn recover_dispatch(
    grid: &Grid,
    setpoints: &Setpoints,
    kinds: &BusKinds,
    injections: &[Complex64],
    demand: &[(f64, f64)],
) -> (Vec<f64>, Vec<f64>) {
    let base = grid.base_mva;
    let index = grid.bus_index();
    let mut pg = vec![0.0; grid.generators.len()];
    let mut qg = vec![0.0; grid.generators.len()];
    let mut units_at: Vec<Vec<usize>> = vec![Vec::new(); grid.buses.len()];
    for g in grid.in_service_generators() {
        pg[g.id] = setpoints.pg[g.id];
        qg[g.id] = setpoints.qg[g.id];
        units_at[index[&g.bus]].push(g.id);
    }
    for &b in std::iter::once(&kinds.slack).chain(&kinds.pv) {
        let units = &units_at[b];
        if units.is_empty() {
            continue;
        }
        let q_total = injections[b].im * base + demand[b].1;
        let bounds: Vec<(f64, f64)> = units
            .iter()
            .map(|&g| (grid.generators[g].q_min, grid.generators[g].q_max))
            .collect();
        for (&g, q) in units.iter().zip(split(q_total, &bounds)) {
            qg[g] = q;
        }
        if b == kinds.slack {
            let p_total = injections[b].re * base + demand[b].0;
            let others: f64 = units[1..].iter().map(|&g| setpoints.pg[g]).sum();
            pg[units[0]] = p_total - others;
        }
    }
    (pg, qg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_grids::{bus, generator, line, triangle};
    use crate::grid::{Grid, Load};
    use crate::powerflow::bus_injections;

    fn two_bus_lossless(p_load_mw: f64) -> Grid {
        Grid {
            base_mva: 100.0,
            buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pq)],
            branches: vec![line(0, 1, 2, 0.0, 0.1)],
            generators: vec![generator(0, 1, 500.0)],
            loads: vec![Load { id: 0, bus: 2, pd: p_load_mw, qd: 0.0 }],
        }
    }

    /// High-voltage root of u² − u + (P·x)² = 0 with u = V², found by bisection.
    fn two_bus_oracle(p: f64, x: f64) -> (f64, f64) {
        let f = |u: f64| u * u - u + (p * x).powi(2);
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = (0.5 * (lo + hi)).sqrt();
        // P2 = V2·sin(θ2)/x = −p
        (v, (-p * x / v).asin())
    }

    #[test]
    fn two_bus_matches_closed_form() {
        let g = two_bus_lossless(50.0);
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &PfOptions::default());
        assert!(sol.converged);
        let (v2, th2) = two_bus_oracle(0.5, 0.1);
        assert!((sol.vm[1] - v2).abs() < 1e-9, "{} vs {v2}", sol.vm[1]);
        assert!((sol.va[1] - th2).abs() < 1e-9);
        // lossless line: slack supplies exactly the load
        assert!((sol.pg[0] - 50.0).abs() < 1e-6);
    }

    #[test]
    fn no_load_is_a_fixed_point() {
        let mut g = triangle();
        g.loads.clear();
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &PfOptions::default());
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert!(sol.vm.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(sol.va.iter().all(|&a| a.abs() < 1e-12));
        assert!(sol.branch_flows.iter().all(|f| f.s_from() < 1e-9 && f.s_to() < 1e-9));
    }

    #[test]
    fn residuals_recomputed_directly_are_within_tolerance() {
        let g = triangle();
        let opts = PfOptions::default();
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &opts);
        assert!(sol.converged);
        // direct evaluation of P_i = Σ_k |Vi||Vk||Yik| cos(θik − δi + δk)
        let y = build_admittance(&g);
        let demand = g.bus_demand();
        for i in 1..3 {
            let mut p = 0.0;
            let mut q = 0.0;
            for k in 0..3 {
                let yik = y.get(i, k);
                let ang = yik.arg() - sol.va[i] + sol.va[k];
                p += sol.vm[i] * sol.vm[k] * yik.norm() * ang.cos();
                q -= sol.vm[i] * sol.vm[k] * yik.norm() * ang.sin();
            }
            assert!((p + demand[i].0 / 100.0).abs() <= opts.tol);
            assert!((q + demand[i].1 / 100.0).abs() <= opts.tol);
        }
        let s = bus_injections(&y, &sol.vm, &sol.va);
        assert!((s[0].re * 100.0 - sol.pg[0]).abs() < 1e-9);
    }

    #[test]
    fn balance_and_losses() {
        let g = triangle();
        let opts = PfOptions::default();
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &opts);
        let gen: f64 = sol.pg.iter().sum();
        let losses: f64 = sol.branch_flows.iter().map(|f| f.p_from + f.p_to).sum();
        assert!((gen - g.total_load_mw() - losses).abs() <= 10.0 * opts.tol * g.base_mva);
    }

    #[test]
    fn reports_non_convergence_without_panicking() {
        let g = two_bus_lossless(2000.0);
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &PfOptions::default());
        assert!(!sol.converged);
        assert!(sol.failure.is_some());
    }

    #[test]
    fn pv_bus_holds_voltage_and_q_split_by_range() {
        let mut g = triangle();
        g.buses[2].role = BusRole::Pv;
        let mut a = generator(1, 3, 50.0);
        a.pg = 20.0;
        a.vg = 1.02;
        a.q_min = -10.0;
        a.q_max = 10.0;
        let mut b = generator(2, 3, 50.0);
        b.pg = 10.0;
        b.vg = 1.02;
        b.q_min = -30.0;
        b.q_max = 30.0;
        g.generators.extend([a, b]);
        let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &PfOptions::default());
        assert!(sol.converged);
        assert!((sol.vm[2] - 1.02).abs() < 1e-12);
        assert!((sol.qg[2] - 3.0 * sol.qg[1]).abs() < 1e-9);
        assert_eq!(sol.pg[1], 20.0);
    }

    #[test]
    fn reactive_shares_stay_inside_asymmetric_ranges() {
        let q = split(-5.0, &[(0.0, 10.0), (-20.0, 20.0)]);
        assert!((q[0] + q[1] + 5.0).abs() < 1e-12);
        // both units at 30% of their range
        assert!((q[0] - 3.0).abs() < 1e-12 && (q[1] + 8.0).abs() < 1e-12);
        assert_eq!(split(4.0, &[(1.0, 1.0), (1.0, 1.0)]), vec![2.0, 2.0]);
    }
}
