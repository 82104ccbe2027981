use std::collections::{BTreeSet, VecDeque};

use super::{BusId, Grid};

/// A set of branches and generators switched out of service.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TopologyPerturbation {
    pub disabled_branches: BTreeSet<usize>,
    pub disabled_generators: BTreeSet<usize>,
}

impl TopologyPerturbation {
    pub fn new(branches: impl IntoIterator<Item = usize>, generators: impl IntoIterator<Item = usize>) -> Self {
        TopologyPerturbation {
            disabled_branches: branches.into_iter().collect(),
            disabled_generators: generators.into_iter().collect(),
        }
    }

    pub fn base() -> Self {
        Self::default()
    }

    /// Number of disabled components.
    pub fn k(&self) -> usize {
        self.disabled_branches.len() + self.disabled_generators.len()
    }

    pub fn is_base(&self) -> bool {
        self.k() == 0
    }
}

/// Buses reachable from the slack through in-service branches that are not
/// disabled by `disabled`.
pub fn connected_component_of_slack(grid: &Grid, disabled: &TopologyPerturbation) -> BTreeSet<BusId> {
    let index = grid.bus_index();
    let n = grid.buses.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for br in grid.in_service_branches() {
        if disabled.disabled_branches.contains(&br.id) {
            continue;
        }
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        adjacency[f].push(t);
        adjacency[t].push(f);
    }
    let start = grid.slack_position();
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !visited[v] {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    visited
        .iter()
        .zip(&grid.buses)
        .filter(|(seen, _)| **seen)
        .map(|(_, b)| b.id)
        .collect()
}

/// True when every bus stays connected to the slack and at least one
/// generator remains in service.
pub fn is_admissible(grid: &Grid, topo: &TopologyPerturbation) -> bool {
    let has_generator = grid
        .in_service_generators()
        .any(|g| !topo.disabled_generators.contains(&g.id));
    has_generator && connected_component_of_slack(grid, topo).len() == grid.buses.len()
}
