use rand::distributions::Open01;
use rand::Rng;

use crate::grid::Grid;

/// Multiplies `r` and `x` of every in-service branch by independent factors
/// drawn from the open interval `(max(0, 1 − σ), 1 + σ)`. Returns the
/// perturbed grid and the `(r, x)` factors per branch (1 for branches left
/// untouched).
pub fn perturb_admittance(grid: &Grid, sigma: f64, rng: &mut impl Rng) -> (Grid, Vec<(f64, f64)>) {
    let lo = (1.0 - sigma).max(0.0);
    let hi = 1.0 + sigma;
    let mut out = grid.clone();
    let mut factors = vec![(1.0, 1.0); grid.branches.len()];
    if sigma == 0.0 {
        return (out, factors);
    }
    let mut draw = || {
        let u: f64 = rng.sample(Open01);
        lo + (hi - lo) * u
    };
    for br in out.branches.iter_mut().filter(|b| b.status.is_on()) {
        let fr = draw();
        let fx = draw();
        br.r *= fr;
        br.x *= fx;
        factors[br.id] = (fr, fx);
    }
    (out, factors)
}
