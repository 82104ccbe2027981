use std::path::Path;

use rand::Rng;

use super::PerturbError;
use crate::grid::Grid;
use crate::opf::{solve_ac_opf, OpfOptions, OpfProblem};

/// Aggregated load time series in arbitrary units.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub name: String,
    pub values: Vec<f64>,
}

impl LoadProfile {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self, PerturbError> {
        let name = name.into();
        if values.is_empty() {
            return Err(PerturbError::InvalidProfile(format!("profile '{name}' is empty")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(PerturbError::InvalidProfile(format!("profile '{name}' has invalid value {v}")));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(PerturbError::InvalidProfile(format!("profile '{name}' has no positive value")));
        }
        Ok(LoadProfile { name, values })
    }

    /// One number per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, PerturbError> {
        let name = name.into();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line.parse::<f64>().map_err(|_| {
                PerturbError::InvalidProfile(format!("{name}:{}: '{line}' is not a number", lineno + 1))
            })?;
            values.push(v);
        }
        LoadProfile::new(name, values)
    }

    pub fn from_file(path: &Path) -> Result<Self, PerturbError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PerturbError::InvalidProfile(format!("{}: {e}", path.display())))?;
        LoadProfile::parse(path.display().to_string(), &text)
    }

    /// A flat profile: every scenario gets the upper scaling bound.
    pub fn constant() -> Self {
        LoadProfile { name: "constant".into(), values: vec![1.0] }
    }
}

/// Feasible range `[l, u]` for the global load scaling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadRange {
    pub l: f64,
    pub u: f64,
    pub r: f64,
}

impl LoadRange {
    pub fn new(u: f64, r: f64) -> Result<Self, PerturbError> {
        if !(0.0..1.0).contains(&r) {
            return Err(PerturbError::InvalidParameter(format!("r = {r} must lie in [0, 1)")));
        }
        if !(u > 0.0) {
            return Err(PerturbError::InvalidParameter(format!("u = {u} must be positive")));
        }
        Ok(LoadRange { l: (1.0 - r) * u, u, r })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadScenario {
    pub scenario_index: usize,
    /// Global scaling factor shared by every load in this scenario.
    pub ref_factor: f64,
    /// Perturbed `(P, Q)` per load, MW / MVAr, in `Grid::loads` order.
    pub scaled: Vec<(f64, f64)>,
}

impl LoadScenario {
    pub fn apply(&self, grid: &Grid) -> Grid {
        let mut out = grid.clone();
        for (load, &(p, q)) in out.loads.iter_mut().zip(&self.scaled) {
            load.pd = p;
            load.qd = q;
        }
        out
    }
}

fn scale_loads(grid: &Grid, multiplier: f64) -> Grid {
    let mut out = grid.clone();
    for load in out.loads.iter_mut() {
        load.pd *= multiplier;
        load.qd *= multiplier;
    }
    out
}

/// Upper bound of the multiplier ladder explored by calibration.
const MAX_CALIBRATION_STEPS: usize = 200;

/// Raises all active and reactive loads uniformly along `1, 1+step, 1+2·step, …`
/// and keeps the last multiplier at which AC-OPF still converges as `u`;
/// `l = (1 − r)·u`.
pub fn calibrate_load_range(grid: &Grid, r: f64, step: f64, options: &OpfOptions) -> Result<LoadRange, PerturbError> {
    calibrate_with(r, step, |m| {
        let scaled = scale_loads(grid, m);
        solve_ac_opf(&OpfProblem::new(&scaled), options).feasible
    })
}

/// Calibration against an arbitrary feasibility oracle.
pub fn calibrate_with(r: f64, step: f64, mut feasible: impl FnMut(f64) -> bool) -> Result<LoadRange, PerturbError> {
    if !(step > 0.0) {
        return Err(PerturbError::InvalidParameter(format!("step = {step} must be positive")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(PerturbError::InvalidParameter(format!("r = {r} must lie in [0, 1)")));
    }
    if !feasible(1.0) {
        return Err(PerturbError::BaseCaseInfeasible);
    }
    let mut u = 1.0;
    for i in 1..=MAX_CALIBRATION_STEPS {
        let m = 1.0 + i as f64 * step;
        if !feasible(m) {
            break;
        }
        u = m;
        if i == MAX_CALIBRATION_STEPS {
            log::warn!("load calibration still feasible at multiplier {m}; stopping there");
        }
    }
    LoadRange::new(u, r)
}

/// Draws `n` load scenarios: the profile is min-max rescaled onto `[l, u]`
/// (cycled when shorter than `n`) to give the global factor, then every
/// load's P and Q get independent multiplicative noise from
/// `Uniform(1 − σ, 1 + σ)`.
pub fn generate_load_scenarios(
    grid: &Grid,
    profile: &LoadProfile,
    range: &LoadRange,
    n: usize,
    sigma: f64,
    rng: &mut impl Rng,
) -> Vec<LoadScenario> {
    let lo = profile.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = profile.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rescale = |v: f64| {
        if hi > lo {
            range.l + (v - lo) / (hi - lo) * (range.u - range.l)
        } else {
            range.u
        }
    };
    let mut noise = || 1.0 + sigma * (2.0 * rng.gen::<f64>() - 1.0);
    (0..n)
        .map(|t| {
            let ref_factor = rescale(profile.values[t % profile.values.len()]).clamp(range.l, range.u);
            let scaled = grid
                .loads
                .iter()
                .map(|load| {
                    let ep = noise();
                    let eq = noise();
                    (load.pd * ref_factor * ep, load.qd * ref_factor * eq)
                })
                .collect();
            LoadScenario { scenario_index: t, ref_factor, scaled }
        })
        .collect()
}
