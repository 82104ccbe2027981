use super::ipm::{self, IpmOptions, Nlp, NlpEval, SparseRows};
use super::{cost_scale, OpfError};
use crate::clock::Stopwatch;
use crate::grid::{connected_component_of_slack, Grid, TopologyPerturbation};
use crate::linalg::SparseBuilder;
use crate::powerflow::dc_susceptance;

#[derive(Debug, Clone, PartialEq)]
pub struct DcOpfSolution {
    /// Per-generator dispatch in MW (zero for out-of-service units).
    pub pg: Vec<f64>,
    /// Per-bus angles in radians.
    pub va: Vec<f64>,
    /// Per-branch from→to flows in MW.
    pub flows: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub runtime: f64,
}

struct DcBranch {
    id: usize,
    from: usize,
    to: usize,
    b: f64,
    shift: f64,
    limit: Option<f64>,
}

/// DC-OPF over `x = [θ; Pg]` in p.u.
struct DcOpfNlp<'a> {
    grid: &'a Grid,
    nb: usize,
    units: Vec<usize>,
    unit_bus: Vec<usize>,
    branches: Vec<DcBranch>,
    demand: Vec<f64>,
    slack: usize,
    scale: f64,
}

impl<'a> DcOpfNlp<'a> {
    fn new(grid: &'a Grid) -> Self {
        let index = grid.bus_index();
        let base = grid.base_mva;
        let units: Vec<usize> = grid.in_service_generators().map(|g| g.id).collect();
        let unit_bus = units.iter().map(|&g| index[&grid.generators[g].bus]).collect();
        let branches = grid
            .in_service_branches()
            .map(|br| DcBranch {
                id: br.id,
                from: index[&br.from_bus],
                to: index[&br.to_bus],
                b: dc_susceptance(br.x, br.effective_tap()),
                shift: br.shift,
                limit: br.is_limited().then(|| br.rate_a / base),
            })
            .collect();
        let demand = grid.bus_demand().iter().map(|&(p, _)| p / base).collect();
        let scale = cost_scale(grid, &units, |u| {
            let gen = &grid.generators[units[u]];
            0.5 * (gen.p_min + gen.p_max)
        });
        DcOpfNlp { grid, nb: grid.buses.len(), units, unit_bus, branches, demand, slack: grid.slack_position(), scale }
    }

    fn true_cost(&self, x: &[f64]) -> f64 {
        let base = self.grid.base_mva;
        self.units
            .iter()
            .enumerate()
            .map(|(u, &g)| self.grid.generators[g].cost.eval(x[self.nb + u] * base))
            .sum()
    }

    fn flow(&self, br: &DcBranch, x: &[f64]) -> f64 {
        br.b * (x[br.from] - x[br.to] - br.shift)
    }
}

impl Nlp for DcOpfNlp<'_> {
    fn dim(&self) -> usize {
        self.nb + self.units.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        let base = self.grid.base_mva;
        let mut x = vec![0.0; self.dim()];
        for (u, &g) in self.units.iter().enumerate() {
            let gen = &self.grid.generators[g];
            x[self.nb + u] = 0.5 * (gen.p_min + gen.p_max) / base;
        }
        x
    }

    fn evaluate(&self, x: &[f64]) -> NlpEval {
        let nb = self.nb;
        let base = self.grid.base_mva;
        let mut grad = vec![0.0; self.dim()];
        for (u, &g) in self.units.iter().enumerate() {
            let c = &self.grid.generators[g].cost;
            grad[nb + u] = self.scale * base * (2.0 * c.c2 * x[nb + u] * base + c.c1);
        }

        // Σ flows leaving bus i − Σ Pg at i + Pd_i = 0, plus the reference angle
        let mut g: Vec<f64> = self.demand.clone();
        g.push(x[self.slack]);
        let mut jac_g: SparseRows = vec![Vec::new(); nb + 1];
        for br in &self.branches {
            let f = self.flow(br, x);
            g[br.from] += f;
            g[br.to] -= f;
            jac_g[br.from].extend([(br.from, br.b), (br.to, -br.b)]);
            jac_g[br.to].extend([(br.from, -br.b), (br.to, br.b)]);
        }
        for (u, &b) in self.unit_bus.iter().enumerate() {
            g[b] -= x[nb + u];
            jac_g[b].push((nb + u, -1.0));
        }
        jac_g[nb].push((self.slack, 1.0));

        let mut h = Vec::new();
        let mut jac_h: SparseRows = Vec::new();
        for br in &self.branches {
            if let Some(limit) = br.limit {
                let f = self.flow(br, x);
                h.push(f - limit);
                jac_h.push(vec![(br.from, br.b), (br.to, -br.b)]);
                h.push(-f - limit);
                jac_h.push(vec![(br.from, -br.b), (br.to, br.b)]);
            }
        }
        for (u, &gid) in self.units.iter().enumerate() {
            let gen = &self.grid.generators[gid];
            let (lo, hi) = (gen.p_min / base, gen.p_max / base);
            if (hi - lo).abs() <= 1e-10 {
                g.push(x[nb + u] - lo);
                jac_g.push(vec![(nb + u, 1.0)]);
                continue;
            }
            h.push(x[nb + u] - hi);
            jac_h.push(vec![(nb + u, 1.0)]);
            h.push(lo - x[nb + u]);
            jac_h.push(vec![(nb + u, -1.0)]);
        }
        NlpEval { f: self.scale * self.true_cost(x), grad, g, jac_g, h, jac_h }
    }

    fn add_lagrangian_hessian(&self, _x: &[f64], _lambda: &[f64], _mu: &[f64], out: &mut SparseBuilder) {
        let base = self.grid.base_mva;
        for (u, &g) in self.units.iter().enumerate() {
            let c2 = self.grid.generators[g].cost.c2;
            out.add(self.nb + u, self.nb + u, self.scale * 2.0 * c2 * base * base);
        }
    }
}

/// Minimizes generation cost under the lossless DC network model with
/// generator and branch-flow limits.
pub fn solve_dc_opf(grid: &Grid) -> Result<DcOpfSolution, OpfError> {
    solve_dc_opf_with(grid, &IpmOptions { tol: 1e-8, ..IpmOptions::default() })
}

pub(crate) fn solve_dc_opf_with(grid: &Grid, options: &IpmOptions) -> Result<DcOpfSolution, OpfError> {
    let clock = Stopwatch::start();
    if connected_component_of_slack(grid, &TopologyPerturbation::base()).len() != grid.buses.len() {
        return Err(OpfError::Infeasible { iterations: 0, runtime: clock.seconds() });
    }
    let nlp = DcOpfNlp::new(grid);
    let result = ipm::solve(&nlp, options);
    if !result.converged() {
        return Err(OpfError::Infeasible { iterations: result.iterations, runtime: clock.seconds() });
    }
    let base = grid.base_mva;
    let x = &result.x;
    let mut pg = vec![0.0; grid.generators.len()];
    for (u, &g) in nlp.units.iter().enumerate() {
        pg[g] = x[nlp.nb + u] * base;
    }
    let mut flows = vec![0.0; grid.branches.len()];
    for br in &nlp.branches {
        flows[br.id] = nlp.flow(br, x) * base;
    }
    Ok(DcOpfSolution {
        pg,
        va: x[..nlp.nb].to_vec(),
        flows,
        objective: nlp.true_cost(x),
        iterations: result.iterations,
        runtime: clock.seconds(),
    })
}
