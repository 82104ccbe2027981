//! Browser bindings for a handful of interactive grid operations. Every
//! export takes MATPOWER text and returns a JSON string.

use datakit::grid::{parse_matpower, Grid};
use datakit::opf::{solve_ac_opf, OpfOptions, OpfProblem};
use datakit::perturb::{enumerate_topologies, DEFAULT_ENUMERATION_CAP};
use datakit::powerflow::{branch_loading, solve_ac_pf, PfOptions, PfSolution, Setpoints};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// IEEE RTS 24-bus case preloaded in the page.
pub const DEFAULT_CASE: &str = include_str!("../../core/fixtures/case24_ieee_rts.m");

fn scaled(case: &str, load_scale: f64) -> Result<Grid, String> {
    if !(load_scale.is_finite() && load_scale > 0.0) {
        return Err(format!("load scale must be positive, got {load_scale}"));
    }
    let mut grid = parse_matpower(case).map_err(|e| e.to_string())?;
    for l in grid.loads.iter_mut() {
        l.pd *= load_scale;
        l.qd *= load_scale;
    }
    Ok(grid)
}

fn loading(grid: &Grid, sol: &PfSolution) -> Vec<f64> {
    let rates: Vec<f64> = grid.branches.iter().map(|b| b.rate_a).collect();
    branch_loading(&sol.branch_flows, &rates)
}

fn state_json(grid: &Grid, sol: &PfSolution) -> Value {
    json!({
        "converged": sol.converged,
        "buses": grid.buses.iter().map(|b| b.id).collect::<Vec<_>>(),
        "vm": sol.vm,
        "va_deg": sol.va.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
        "pg": sol.pg,
        "branches": grid.branches.iter().map(|b| [b.from_bus, b.to_bus]).collect::<Vec<_>>(),
        "loading": loading(grid, sol),
    })
}

/// AC power flow at the case setpoints with every load scaled.
pub fn power_flow(case: &str, load_scale: f64) -> Result<Value, String> {
    let grid = scaled(case, load_scale)?;
    let sol = solve_ac_pf(&grid, &Setpoints::from_grid(&grid), &PfOptions::default());
    let mut out = state_json(&grid, &sol);
    out["iterations"] = json!(sol.iterations);
    out["max_mismatch"] = json!(sol.max_mismatch);
    Ok(out)
}

/// AC optimal dispatch with every load scaled.
pub fn optimal_dispatch(case: &str, load_scale: f64) -> Result<Value, String> {
    let grid = scaled(case, load_scale)?;
    let opf = solve_ac_opf(&OpfProblem::new(&grid), &OpfOptions::default());
    let mut out = state_json(&grid, &opf.state);
    out["converged"] = json!(opf.feasible);
    out["cost"] = json!(opf.objective);
    out["iterations"] = json!(opf.barrier_iterations);
    Ok(out)
}

/// Single-branch outage screen: one AC power flow per admissible outage,
/// ranked by worst loading.
pub fn outage_screen(case: &str, load_scale: f64) -> Result<Value, String> {
    let grid = scaled(case, load_scale)?;
    let topologies = enumerate_topologies(&grid, 1, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
    let mut rows: Vec<Value> = topologies
        .iter()
        .filter(|t| t.disabled_generators.is_empty() && t.disabled_branches.len() == 1)
        .map(|t| {
            let id = *t.disabled_branches.iter().next().unwrap();
            let g = grid.with_topology(t);
            let sol = solve_ac_pf(&g, &Setpoints::from_grid(&g), &PfOptions::default());
            let worst = if sol.converged {
                loading(&g, &sol).into_iter().enumerate().max_by(|a, b| a.1.total_cmp(&b.1))
            } else {
                None
            };
            json!({
                "outage": id,
                "from": grid.branches[id].from_bus,
                "to": grid.branches[id].to_bus,
                "converged": sol.converged,
                "worst_branch": worst.map(|w| w.0),
                "worst_loading": worst.map(|w| w.1),
            })
        })
        .collect();
    let key = |v: &Value| if v["converged"] == true { v["worst_loading"].as_f64().unwrap_or(0.0) } else { f64::INFINITY };
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)));
    let islanding = grid.branches.iter().filter(|b| b.status.is_on()).count() - rows.len();
    Ok(json!({ "outages": rows, "skipped_islanding": islanding }))
}

fn export(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = defaultCase)]
pub fn default_case() -> String {
    DEFAULT_CASE.to_string()
}

#[wasm_bindgen(js_name = powerFlow)]
pub fn power_flow_js(case: &str, load_scale: f64) -> Result<String, JsValue> {
    export(power_flow(case, load_scale))
}

#[wasm_bindgen(js_name = optimalDispatch)]
pub fn optimal_dispatch_js(case: &str, load_scale: f64) -> Result<String, JsValue> {
    export(optimal_dispatch(case, load_scale))
}

#[wasm_bindgen(js_name = outageScreen)]
pub fn outage_screen_js(case: &str, load_scale: f64) -> Result<String, JsValue> {
    export(outage_screen(case, load_scale))
}
