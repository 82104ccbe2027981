use rand::seq::SliceRandom;
use rand::Rng;

use super::PerturbError;
use crate::grid::{CostPoly, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMode {
    None,
    /// One random permutation of the cost polynomials among in-service units.
    Permute,
    /// Per-generator factor drawn from `Uniform(lo, hi)`.
    Scale { lo: f64, hi: f64 },
}

impl CostMode {
    pub fn validate(&self) -> Result<(), PerturbError> {
        match *self {
            CostMode::Scale { lo, hi } if !(lo > 0.0 && lo <= hi && hi.is_finite()) => Err(
                PerturbError::InvalidParameter(format!("cost scale range [{lo}, {hi}] needs 0 < lo <= hi")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostMode::None => "none",
            CostMode::Permute => "permute",
            CostMode::Scale { .. } => "scale",
        }
    }
}

pub fn perturb_costs(grid: &Grid, mode: CostMode, rng: &mut impl Rng) -> Grid {
    let mut out = grid.clone();
    match mode {
        CostMode::None => {}
        CostMode::Permute => {
            let units: Vec<usize> = grid.in_service_generators().map(|g| g.id).collect();
            let mut costs: Vec<CostPoly> = units.iter().map(|&g| grid.generators[g].cost).collect();
            costs.shuffle(rng);
            for (&g, cost) in units.iter().zip(costs) {
                out.generators[g].cost = cost;
            }
        }
        CostMode::Scale { lo, hi } => {
            for gen in out.generators.iter_mut() {
                let factor = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                gen.cost = gen.cost.scaled(factor);
            }
        }
    }
    out
}
