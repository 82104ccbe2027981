use super::PfError;
use crate::clock::Stopwatch;
use crate::grid::{Grid, TopologyPerturbation};
use crate::linalg::SparseBuilder;

#[derive(Debug, Clone, PartialEq)]
pub struct DcPfSolution {
    /// Per-bus voltage angles (radians), slack fixed at zero.
    pub va: Vec<f64>,
    /// Per-branch from→to active flow (MW); zero for out-of-service branches.
    pub flows: Vec<f64>,
    /// Net injection the slack must supply to balance the system (MW).
    pub slack_injection: f64,
    pub runtime: f64,
}

/// Series susceptance `1/(x·tap)` used by the DC model.
pub fn dc_susceptance(x: f64, tap: f64) -> f64 {
    1.0 / (x * tap)
}

/// Linearized lossless power flow for per-bus net injections in MW. The
/// slack row is dropped and its injection reported as the balancing term;
/// phase shifters enter as equivalent injections.
pub fn solve_dc_pf(grid: &Grid, injections_mw: &[f64]) -> Result<DcPfSolution, PfError> {
    let clock = Stopwatch::start();
    let n = grid.buses.len();
    assert_eq!(injections_mw.len(), n, "one injection per bus");
    if crate::grid::connected_component_of_slack(grid, &TopologyPerturbation::base()).len() != n {
        return Err(PfError::SingularSystem);
    }
    let index = grid.bus_index();
    let slack = grid.slack_position();
    let base = grid.base_mva;
    let reduced = |i: usize| if i < slack { i } else { i - 1 };

    let mut b = SparseBuilder::new(n - 1);
    let mut rhs: Vec<f64> = injections_mw.iter().map(|p| p / base).collect();
    for br in grid.in_service_branches() {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        let bij = dc_susceptance(br.x, br.effective_tap());
        // b·(θf − θt − shift): the shift term moves to the right-hand side
        rhs[f] += bij * br.shift;
        rhs[t] -= bij * br.shift;
        for (r, c, v) in [(f, f, bij), (t, t, bij), (f, t, -bij), (t, f, -bij)] {
            if r != slack && c != slack {
                b.add(reduced(r), reduced(c), v);
            }
        }
    }
    let rhs_reduced: Vec<f64> = (0..n).filter(|&i| i != slack).map(|i| rhs[i]).collect();
    let theta_reduced = b.solve(&rhs_reduced).map_err(|_| PfError::SingularSystem)?;
    let mut va = vec![0.0; n];
    for i in (0..n).filter(|&i| i != slack) {
        va[i] = theta_reduced[reduced(i)];
    }

    let mut flows = vec![0.0; grid.branches.len()];
    let mut slack_injection = 0.0;
    for br in grid.in_service_branches() {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        let flow = dc_susceptance(br.x, br.effective_tap()) * (va[f] - va[t] - br.shift) * base;
        flows[br.id] = flow;
        if f == slack {
            slack_injection += flow;
        }
        if t == slack {
            slack_injection -= flow;
        }
    }
    Ok(DcPfSolution { va, flows, slack_injection, runtime: clock.seconds() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_grids::{bus, generator, line};
    use crate::grid::{BusRole, Grid};
    use proptest::prelude::*;

    fn two_bus() -> Grid {
        Grid {
            base_mva: 100.0,
            buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pq)],
            branches: vec![line(0, 1, 2, 0.0, 0.1)],
            generators: vec![generator(0, 1, 500.0)],
            loads: vec![],
        }
    }

    #[test]
    fn theta_equals_x_times_p() {
        let sol = solve_dc_pf(&two_bus(), &[0.0, -100.0]).unwrap();
        assert!((sol.va[1] + 0.1).abs() < 1e-12);
        assert!((sol.flows[0] - 100.0).abs() < 1e-9);
        assert!((sol.slack_injection - 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_injections_zero_angles() {
        let sol = solve_dc_pf(&two_bus(), &[0.0, 0.0]).unwrap();
        assert!(sol.va.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn disconnected_is_singular() {
        let mut g = two_bus();
        g.branches[0].status = crate::grid::Status::OutOfService;
        assert_eq!(solve_dc_pf(&g, &[0.0, -1.0]), Err(PfError::SingularSystem));
    }

    #[test]
    fn phase_shifter_drives_flow_without_injection() {
        let mut g = two_bus();
        g.branches.push(line(1, 1, 2, 0.0, 0.1));
        g.branches[0].shift = 0.02;
        let sol = solve_dc_pf(&g, &[0.0, 0.0]).unwrap();
        // circulating flow: equal and opposite on the two parallel paths
        assert!((sol.flows[0] + sol.flows[1]).abs() < 1e-9);
        assert!((sol.flows[0] - -10.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn conservation_at_non_slack_buses(
            extra in proptest::collection::vec((0usize..8, 0usize..8, 0.05f64..0.5), 0..10),
            inj in proptest::collection::vec(-100.0f64..100.0, 8),
        ) {
            let mut lines: Vec<(usize, usize, f64)> = (1..8).map(|i| (i - 1, i, 0.1 + 0.01 * i as f64)).collect();
            lines.extend(extra.into_iter().filter(|(a, b, _)| a != b));
            let grid = Grid {
                base_mva: 100.0,
                buses: (0..8).map(|i| bus(i + 1, if i == 0 { BusRole::Slack } else { BusRole::Pq })).collect(),
                branches: lines.iter().enumerate().map(|(k, &(f, t, x))| line(k, f as i64 + 1, t as i64 + 1, 0.0, x)).collect(),
                generators: vec![generator(0, 1, 10.0)],
                loads: vec![],
            };
            let sol = solve_dc_pf(&grid, &inj).unwrap();
            let mut net = vec![0.0; 8];
            for (k, &(f, t, _)) in lines.iter().enumerate() {
                net[f] += sol.flows[k];
                net[t] -= sol.flows[k];
            }
            for i in 1..8 {
                prop_assert!((net[i] - inj[i]).abs() / 100.0 <= 1e-9);
            }
        }
    }
}
