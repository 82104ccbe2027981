use rand::seq::index;
use rand::Rng;

use super::PerturbError;
use crate::grid::{is_admissible, Grid, TopologyPerturbation};

/// Default limit on the number of candidate subsets an enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;
/// Default number of rejection-sampling attempts per drawn perturbation.
pub const DEFAULT_ATTEMPT_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    Branch(usize),
    Generator(usize),
}

/// In-service branches by id, then in-service generators by id.
fn candidates(grid: &Grid) -> Vec<Component> {
    grid.in_service_branches()
        .map(|b| Component::Branch(b.id))
        .chain(grid.in_service_generators().map(|g| Component::Generator(g.id)))
        .collect()
}

fn build(components: &[Component], picks: &[usize]) -> TopologyPerturbation {
    let mut topo = TopologyPerturbation::base();
    for &i in picks {
        match components[i] {
            Component::Branch(id) => topo.disabled_branches.insert(id),
            Component::Generator(id) => topo.disabled_generators.insert(id),
        };
    }
    topo
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Every admissible subset of at most `k` in-service components. Subsets are
/// ordered by size, then lexicographically by candidate position (branches
/// before generators).
pub fn enumerate_topologies(grid: &Grid, k: usize, cap: usize) -> Result<Vec<TopologyPerturbation>, PerturbError> {
    let components = candidates(grid);
    let m = components.len();
    let k = k.min(m);
    let count = (0..=k).fold(0u128, |acc, s| acc.saturating_add(binomial(m, s)));
    if count > cap as u128 {
        return Err(PerturbError::CombinatorialBlowup { count, cap });
    }
    let mut out = Vec::new();
    for size in 0..=k {
        let mut picks: Vec<usize> = (0..size).collect();
        loop {
            let topo = build(&components, &picks);
            if is_admissible(grid, &topo) {
                out.push(topo);
            }
            // advance to the next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&i| picks[i] < m - size + i) else {
                break;
            };
            picks[pos] += 1;
            for i in pos + 1..size {
                picks[i] = picks[i - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// Draws `n` perturbations: a size uniform on `0..=k`, then a uniformly
/// random subset of that size, redrawn until admissible.
pub fn sample_topologies(
    grid: &Grid,
    k: usize,
    n: usize,
    rng: &mut impl Rng,
    attempt_cap: usize,
) -> Result<Vec<TopologyPerturbation>, PerturbError> {
    let components = candidates(grid);
    let k = k.min(components.len());
    (0..n)
        .map(|_| {
            let size = rng.gen_range(0..=k);
            for _ in 0..attempt_cap {
                let picks = index::sample(rng, components.len(), size).into_vec();
                let topo = build(&components, &picks);
                if is_admissible(grid, &topo) {
                    return Ok(topo);
                }
            }
            Err(PerturbError::RejectionExhausted { size, attempts: attempt_cap })
        })
        .collect()
}
