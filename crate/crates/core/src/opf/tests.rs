use super::*;
use crate::grid::test_grids::{bus, generator, line};
use crate::grid::{BusRole, CostPoly, Grid, Load, Status};

fn single_bus(pd: f64, cost: CostPoly) -> Grid {
    let mut g = generator(0, 1, 200.0);
    g.cost = cost;
    Grid {
        base_mva: 100.0,
        buses: vec![bus(1, BusRole::Slack)],
        branches: vec![],
        generators: vec![g],
        loads: vec![Load { id: 0, bus: 1, pd, qd: 10.0 }],
    }
}

/// Cheap unit on bus 1 capped at 60 MW, expensive unit and a 100 MW load on bus 2.
fn merit_order() -> Grid {
    let mut cheap = generator(0, 1, 60.0);
    cheap.cost = CostPoly::new(0.0, 10.0, 0.0);
    let mut dear = generator(1, 2, 200.0);
    dear.cost = CostPoly::new(0.0, 20.0, 0.0);
    Grid {
        base_mva: 100.0,
        buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pv)],
        branches: vec![line(0, 1, 2, 0.01, 0.05)],
        generators: vec![cheap, dear],
        loads: vec![Load { id: 0, bus: 2, pd: 100.0, qd: 20.0 }],
    }
}

#[test]
fn single_bus_balance() {
    let cost = CostPoly::new(0.01, 20.0, 100.0);
    let grid = single_bus(50.0, cost);
    let sol = solve_ac_opf(&OpfProblem::new(&grid), &OpfOptions::default());
    assert!(sol.feasible);
    assert!((sol.state.pg[0] - 50.0).abs() < 1e-5);
    assert!((sol.objective - cost.eval(50.0)).abs() < 1e-3);
    assert!((sol.objective - 1125.0).abs() < 1e-3);
}

#[test]
fn merit_order_dispatch() {
    let grid = merit_order();
    let opts = OpfOptions::default();
    let sol = solve_ac_opf(&OpfProblem::new(&grid), &opts);
    assert!(sol.feasible);
    assert!((sol.state.pg[0] - 60.0).abs() < 1e-3, "cheap unit at {}", sol.state.pg[0]);
    let losses: f64 = sol.state.branch_flows.iter().map(|f| f.p_from + f.p_to).sum();
    assert!(losses > 0.0);
    assert!((sol.state.pg[1] - (40.0 + losses)).abs() < 1e-3);
    assert!(sol.kkt_residual <= opts.tol);
}

#[test]
fn insufficient_capacity_is_not_feasible() {
    let grid = single_bus(250.0, CostPoly::new(0.0, 1.0, 0.0));
    let sol = solve_ac_opf(&OpfProblem::new(&grid), &OpfOptions::default());
    assert!(!sol.feasible);
    assert!(!sol.state.converged);
}

#[test]
fn cost_scaling_keeps_the_dispatch() {
    let grid = merit_order();
    let mut scaled = grid.clone();
    for g in scaled.generators.iter_mut() {
        g.cost = g.cost.scaled(7.5);
    }
    scaled.generators[0].p_max = 150.0;
    let mut plain = grid.clone();
    plain.generators[0].p_max = 150.0;
    let a = solve_ac_opf(&OpfProblem::new(&plain), &OpfOptions::default());
    let b = solve_ac_opf(&OpfProblem::new(&scaled), &OpfOptions::default());
    assert!(a.feasible && b.feasible);
    for (pa, pb) in a.state.pg.iter().zip(&b.state.pg) {
        assert!((pa - pb).abs() < 1e-4);
    }
    assert!((b.objective - 7.5 * a.objective).abs() < 1e-6 * b.objective.abs().max(1.0) + 1e-3);
}

#[test]
fn branch_limit_binds() {
    let mut grid = merit_order();
    grid.generators[0].p_max = 150.0;
    grid.branches[0].rate_a = 30.0;
    let sol = solve_ac_opf(&OpfProblem::new(&grid), &OpfOptions::default());
    assert!(sol.feasible);
    let f = sol.state.branch_flows[0];
    let s = f.s_from().max(f.s_to());
    assert!(s <= 30.0 + 1e-4 && s > 29.9, "apparent flow {s}");
    let unlimited = solve_ac_opf(
        &OpfProblem { enforce_branch_limits: false, ..OpfProblem::new(&grid) },
        &OpfOptions::default(),
    );
    assert!(unlimited.state.branch_flows[0].s_from() > 60.0);
}

#[test]
fn dc_single_generator_serves_the_load() {
    let mut grid = merit_order();
    grid.generators.truncate(1);
    grid.generators[0].p_max = 500.0;
    grid.buses[1].role = BusRole::Pq;
    let sol = solve_dc_opf(&grid).unwrap();
    assert!((sol.pg[0] - 100.0).abs() < 1e-6);
    assert!((sol.flows[0] - 100.0).abs() < 1e-6);
}

fn parallel_lines(load: f64) -> Grid {
    let mut g = generator(0, 1, 500.0);
    g.cost = CostPoly::new(0.0, 10.0, 0.0);
    let mut a = line(0, 1, 2, 0.0, 0.1);
    let mut b = line(1, 1, 2, 0.0, 0.1);
    a.rate_a = 0.5 * load;
    b.rate_a = 0.5 * load;
    Grid {
        base_mva: 100.0,
        buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pq)],
        branches: vec![a, b],
        generators: vec![g],
        loads: vec![Load { id: 0, bus: 2, pd: load, qd: 0.0 }],
    }
}

#[test]
fn dc_parallel_lines_at_the_limit() {
    let grid = parallel_lines(100.0);
    let sol = solve_dc_opf(&grid).unwrap();
    assert!((sol.flows[0] - 50.0).abs() < 1e-5);
    assert!((sol.flows[1] - 50.0).abs() < 1e-5);
    let mut cut = grid.clone();
    cut.branches[1].status = Status::OutOfService;
    assert!(matches!(solve_dc_opf(&cut), Err(OpfError::Infeasible { .. })));
}

#[test]
fn dc_merit_order_with_quadratic_costs() {
    // equal marginal cost: 2·0.1·p1 + 10 = 2·0.05·p2 + 10, p1 + p2 = 90 → p1 = 30
    let mut grid = merit_order();
    grid.generators[0].p_max = 200.0;
    grid.generators[0].cost = CostPoly::new(0.1, 10.0, 0.0);
    grid.generators[1].cost = CostPoly::new(0.05, 10.0, 0.0);
    grid.loads[0].pd = 90.0;
    let sol = solve_dc_opf(&grid).unwrap();
    assert!((sol.pg[0] - 30.0).abs() < 1e-5);
    assert!((sol.pg[1] - 60.0).abs() < 1e-5);
}
