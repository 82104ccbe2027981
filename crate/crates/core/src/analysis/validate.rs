use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use super::{detect_violations, AnalysisError};
use crate::grid::{Grid, Load};
use crate::pipeline::{read_dataset, Dataset, SampleRecord, SampleStatus, Summary};
use crate::powerflow::{branch_loading, compute_branch_flows, solve_dc_pf, PfSolution};

/// Largest tolerated flow / loading disagreement, p.u.
pub const FLOW_TOLERANCE: f64 = 1e-6;
/// Balance residuals may reach this multiple of the solver tolerance.
pub const BALANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckFailure {
    pub scenario_id: usize,
    pub topology_id: usize,
    pub check: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub checked: usize,
    pub max_flow_error: f64,
    pub max_balance_residual: f64,
    pub balance_limit: f64,
    pub failures: Vec<CheckFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Reconstructs the solved grid of one sample from the base grid and the
/// stored deltas: outages, branch impedances, per-bus demand and costs.
pub fn rebuild_grid(base: &Grid, rec: &SampleRecord) -> Grid {
    let mut grid = base.with_topology(&rec.topology);
    for (br, stored) in grid.branches.iter_mut().zip(&rec.branches) {
        br.r = stored.r;
        br.x = stored.x;
    }
    for (g, stored) in grid.generators.iter_mut().zip(&rec.gens) {
        g.cost = stored.cost;
    }
    let mut placed = vec![false; grid.buses.len()];
    let index = grid.bus_index();
    for load in grid.loads.iter_mut() {
        let i = index[&load.bus];
        let (pd, qd) = if placed[i] { (0.0, 0.0) } else { (rec.buses[i].pd, rec.buses[i].qd) };
        load.pd = pd;
        load.qd = qd;
        placed[i] = true;
    }
    for (i, b) in rec.buses.iter().enumerate() {
        if !placed[i] && (b.pd != 0.0 || b.qd != 0.0) {
            let id = grid.loads.len();
            grid.loads.push(Load { id, bus: b.bus_id, pd: b.pd, qd: b.qd });
        }
    }
    grid
}

/// The stored AC state as a solver result.
pub fn stored_state(rec: &SampleRecord) -> PfSolution {
    PfSolution {
        vm: rec.buses.iter().map(|b| b.vm).collect(),
        va: rec.buses.iter().map(|b| b.va).collect(),
        pg: rec.gens.iter().map(|g| g.pg).collect(),
        qg: rec.gens.iter().map(|g| g.qg).collect(),
        branch_flows: rec.branches.iter().map(|b| b.flow).collect(),
        converged: rec.status == SampleStatus::Converged,
        iterations: rec.iterations,
        runtime: rec.runtimes.ac,
        max_mismatch: rec.max_mismatch,
        failure: None,
    }
}

/// Per-bus complex balance residual in p.u.: stored generation minus demand
/// minus the power leaving through branches and shunts, with branch flows
/// recomputed from the stored voltages.
pub fn balance_residuals(grid: &Grid, rec: &SampleRecord) -> Vec<f64> {
    let base = grid.base_mva;
    let index = grid.bus_index();
    let vm: Vec<f64> = rec.buses.iter().map(|b| b.vm).collect();
    let va: Vec<f64> = rec.buses.iter().map(|b| b.va).collect();
    let mut net: Vec<Complex64> = rec.buses.iter().map(|b| Complex64::new(-b.pd, -b.qd)).collect();
    for (g, stored) in grid.generators.iter().zip(&rec.gens) {
        if g.status.is_on() {
            net[index[&g.bus]] += Complex64::new(stored.pg, stored.qg);
        }
    }
    for (i, bus) in grid.buses.iter().enumerate() {
        net[i] -= Complex64::new(bus.shunt_g, -bus.shunt_b) * vm[i] * vm[i] * base;
    }
    let flows = compute_branch_flows(grid, &vm, &va);
    for br in grid.in_service_branches() {
        let f = &flows[br.id];
        net[index[&br.from_bus]] -= Complex64::new(f.p_from, f.q_from);
        net[index[&br.to_bus]] -= Complex64::new(f.p_to, f.q_to);
    }
    net.iter().map(|s| s.norm() / base).collect()
}

fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn validate_dataset(path: &Path) -> Result<ValidationReport, AnalysisError> {
    let dataset = read_dataset(path)?;
    Ok(validate(&dataset))
}

/// Recomputes every derived quantity of every converged sample and compares
/// it with what the dataset stores.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let base_grid = &dataset.grid;
    let base = base_grid.base_mva;
    let balance_limit = BALANCE_FACTOR * dataset.manifest.ac_tolerance();
    let violation_tol = dataset.manifest.violation_tolerance();
    let mut report = ValidationReport {
        samples: dataset.records.len(),
        checked: 0,
        max_flow_error: 0.0,
        max_balance_residual: 0.0,
        balance_limit,
        failures: Vec::new(),
    };

    if !dataset.manifest.complete {
        report.failures.push(CheckFailure {
            scenario_id: 0,
            topology_id: 0,
            check: "manifest",
            detail: "dataset is marked incomplete".into(),
        });
    }
    let recount = Summary::of(&dataset.records);
    let stored = &dataset.manifest.summary;
    if (recount.samples, recount.converged, recount.not_converged, recount.skipped)
        != (stored.samples, stored.converged, stored.not_converged, stored.skipped)
    {
        report.failures.push(CheckFailure {
            scenario_id: 0,
            topology_id: 0,
            check: "summary",
            detail: format!("manifest counts {stored:?} differ from recount {recount:?}"),
        });
    }

    for rec in &dataset.records {
        let mut fail = |check: &'static str, detail: String| {
            report.failures.push(CheckFailure {
                scenario_id: rec.scenario_id,
                topology_id: rec.topology_id,
                check,
                detail,
            })
        };
        let grid = rebuild_grid(base_grid, rec);
        let statuses_match = grid.branches.iter().zip(&rec.branches).all(|(b, s)| b.status.is_on() == s.in_service)
            && grid.generators.iter().zip(&rec.gens).all(|(g, s)| g.status.is_on() == s.in_service);
        let ids_match = grid.buses.iter().zip(&rec.buses).all(|(b, s)| b.id == s.bus_id)
            && grid.branches.iter().zip(&rec.branches).all(|(b, s)| (b.from_bus, b.to_bus) == (s.from_bus, s.to_bus));
        if !ids_match {
            fail("structure", "element ids differ from the base grid".into());
            continue;
        }
        if !statuses_match {
            fail("topology", "in-service flags differ from the recorded outages".into());
        }
        if rec.status != SampleStatus::Converged {
            continue;
        }
        let mut fail = |check: &'static str, detail: String| {
            report.failures.push(CheckFailure {
                scenario_id: rec.scenario_id,
                topology_id: rec.topology_id,
                check,
                detail,
            })
        };

        let state = stored_state(rec);
        let flows = compute_branch_flows(&grid, &state.vm, &state.va);
        let flow_err = max_abs_diff(
            flows.iter().flat_map(|f| [f.p_from, f.q_from, f.p_to, f.q_to]),
            rec.branches.iter().flat_map(|b| [b.flow.p_from, b.flow.q_from, b.flow.p_to, b.flow.q_to]),
        ) / base;
        let rates: Vec<f64> = grid.branches.iter().map(|b| b.rate_a).collect();
        let loading_err = max_abs_diff(branch_loading(&flows, &rates), rec.branches.iter().map(|b| b.loading));
        let flow_err = if flow_err.is_nan() || loading_err.is_nan() { f64::INFINITY } else { flow_err.max(loading_err) };
        if flow_err > FLOW_TOLERANCE {
            fail("flows", format!("stored flows/loading differ from recomputation by {flow_err:e} p.u."));
        }

        let residual = balance_residuals(&grid, rec).into_iter().fold(0.0f64, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) });
        if residual > balance_limit {
            fail("balance", format!("power-balance residual {residual:e} p.u. exceeds {balance_limit:e}"));
        }

        let v = detect_violations(&grid, &state, violation_tol);
        let flags_match = rec.branches.iter().all(|b| {
            b.overload == Some(v.branch_overloads.contains(&b.branch_id))
                && b.angle_violation == Some(v.angle_violations.contains(&b.branch_id))
        }) && rec.buses.iter().all(|b| b.vm_violation == Some(v.vm_violations.contains(&b.bus_id)))
            && rec.gens.iter().all(|g| g.qg_violation == Some(v.qg_violations.contains(&g.gen_id)))
            && rec.slack_pg_violation == Some(v.slack_pg_violation);
        if !flags_match {
            fail("violations", format!("stored flags differ from detection ({} violations detected)", v.count()));
        }

        let objective: f64 = grid.in_service_generators().map(|g| g.cost.eval(state.pg[g.id])).sum();
        if !((objective - rec.objective).abs() <= 1e-9 * objective.abs().max(1.0)) {
            fail("objective", format!("stored {} vs recomputed {objective}", rec.objective));
        }

        if rec.dc_pf_solved {
            let index = grid.bus_index();
            let mut inj: Vec<f64> = rec.buses.iter().map(|b| -b.pd).collect();
            for g in grid.in_service_generators() {
                inj[index[&g.bus]] += state.pg[g.id];
            }
            match solve_dc_pf(&grid, &inj) {
                Ok(dc) => {
                    let err = max_abs_diff(dc.flows, rec.branches.iter().map(|b| b.pf_dc)) / base;
                    if !(err <= FLOW_TOLERANCE) {
                        fail("dc_flows", format!("stored DC flows differ by {err:e} p.u."));
                    }
                }
                Err(e) => fail("dc_flows", format!("DC-PF recomputation failed: {e}")),
            }
        }

        report.checked += 1;
        report.max_flow_error = report.max_flow_error.max(flow_err);
        report.max_balance_residual = report.max_balance_residual.max(residual);
    }
    report
}
