use num_complex::Complex64;

use super::ipm::{self, IpmOptions, Nlp, NlpEval, SparseRows};
use super::{cost_scale, OpfOptions, OpfProblem, OpfSolution};
use crate::clock::Stopwatch;
use crate::grid::Grid;
use crate::linalg::SparseBuilder;
use crate::powerflow::coupling::{self, Hess4, Local4};
use crate::powerflow::{
    branch_admittances, build_admittance, compute_branch_flows, AdmittanceMatrix, BranchAdmittance, FailureReason,
    PfSolution,
};

const FIXED_EPS: f64 = 1e-10;

/// Limited branch end: injection at `near` through `y_self·|V_near|² + y_cross`.
struct FlowLimit {
    near: usize,
    far: usize,
    y_self: Complex64,
    y_cross: Complex64,
    limit_sq: f64,
}

struct Bound {
    var: usize,
    lo: f64,
    hi: f64,
}

/// Polar AC-OPF over `x = [θ; |V|; Pg; Qg]` (p.u., in-service units only).
pub(crate) struct AcOpfNlp<'a> {
    grid: &'a Grid,
    y: AdmittanceMatrix,
    nb: usize,
    units: Vec<usize>,
    unit_bus: Vec<usize>,
    demand: Vec<(f64, f64)>,
    slack: usize,
    limits: Vec<FlowLimit>,
    angle_pairs: Vec<(usize, usize, f64, f64)>,
    bounds: Vec<Bound>,
    fixed: Vec<(usize, f64)>,
    scale: f64,
}

impl<'a> AcOpfNlp<'a> {
    pub(crate) fn new(problem: &OpfProblem<'a>) -> Self {
        let grid = problem.grid;
        let nb = grid.buses.len();
        let base = grid.base_mva;
        let index = grid.bus_index();
        let units: Vec<usize> = grid.in_service_generators().map(|g| g.id).collect();
        let ng = units.len();
        let unit_bus = units.iter().map(|&g| index[&grid.generators[g].bus]).collect();
        let demand = grid.bus_demand().iter().map(|&(p, q)| (p / base, q / base)).collect();

        let mut limits = Vec::new();
        let mut angle_pairs = Vec::new();
        let admittances: Vec<BranchAdmittance> = branch_admittances(grid);
        for ba in &admittances {
            let br = &grid.branches[ba.branch];
            if problem.enforce_branch_limits && br.is_limited() {
                let limit_sq = (br.rate_a / base).powi(2);
                limits.push(FlowLimit { near: ba.from, far: ba.to, y_self: ba.yff, y_cross: ba.yft, limit_sq });
                limits.push(FlowLimit { near: ba.to, far: ba.from, y_self: ba.ytt, y_cross: ba.ytf, limit_sq });
            }
            if problem.enforce_angle_limits && br.has_angle_limits() {
                angle_pairs.push((ba.from, ba.to, br.ang_min, br.ang_max));
            }
        }

        let mut bounds = Vec::new();
        let mut fixed = Vec::new();
        let mut add_bound = |var: usize, lo: f64, hi: f64| {
            if (hi - lo).abs() <= FIXED_EPS {
                fixed.push((var, lo));
            } else {
                bounds.push(Bound { var, lo, hi });
            }
        };
        for (i, bus) in grid.buses.iter().enumerate() {
            add_bound(nb + i, bus.vm_min, bus.vm_max);
        }
        for (u, &g) in units.iter().enumerate() {
            let gen = &grid.generators[g];
            add_bound(2 * nb + u, gen.p_min / base, gen.p_max / base);
        }
        for (u, &g) in units.iter().enumerate() {
            let gen = &grid.generators[g];
            add_bound(2 * nb + ng + u, gen.q_min / base, gen.q_max / base);
        }

        let mut nlp = AcOpfNlp {
            grid,
            y: build_admittance(grid),
            nb,
            units,
            unit_bus,
            demand,
            slack: grid.slack_position(),
            limits,
            angle_pairs,
            bounds,
            fixed,
            scale: 1.0,
        };
        nlp.scale = cost_scale(grid, &nlp.units, |u| {
            let gen = &grid.generators[nlp.units[u]];
            0.5 * (gen.p_min + gen.p_max)
        });
        nlp
    }

    fn ng(&self) -> usize {
        self.units.len()
    }

    fn pg_var(&self, u: usize) -> usize {
        2 * self.nb + u
    }

    fn qg_var(&self, u: usize) -> usize {
        2 * self.nb + self.ng() + u
    }

    /// Active cost in $/h at a p.u. dispatch vector.
    pub(crate) fn true_cost(&self, x: &[f64]) -> f64 {
        let base = self.grid.base_mva;
        self.units
            .iter()
            .enumerate()
            .map(|(u, &g)| self.grid.generators[g].cost.eval(x[self.pg_var(u)] * base))
            .sum()
    }

    /// Value and local gradient of the end injection on `[θn, θf, vn, vf]`.
    fn end_flow(&self, lim: &FlowLimit, x: &[f64]) -> (f64, f64, Local4, Local4) {
        let nb = self.nb;
        let (tn, tf, vn, vf) = (x[lim.near], x[lim.far], x[nb + lim.near], x[nb + lim.far]);
        let cross = coupling::eval(lim.y_cross, vn, vf, tn - tf);
        let (ps, qs, dps, dqs) = coupling::eval_self(lim.y_self, vn);
        let mut dp = cross.dp;
        let mut dq = cross.dq;
        dp[2] += dps;
        dq[2] += dqs;
        (cross.p + ps, cross.q + qs, dp, dq)
    }

    fn vars4(&self, i: usize, k: usize) -> [usize; 4] {
        [i, k, self.nb + i, self.nb + k]
    }
}

fn add4(out: &mut SparseBuilder, vars: &[usize; 4], h: &Hess4) {
    for a in 0..4 {
        for b in 0..4 {
            out.add(vars[a], vars[b], h[a][b]);
        }
    }
}

impl Nlp for AcOpfNlp<'_> {
    fn dim(&self) -> usize {
        2 * self.nb + 2 * self.ng()
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (i, bus) in self.grid.buses.iter().enumerate() {
            x[self.nb + i] = 1.0f64.clamp(bus.vm_min, bus.vm_max);
        }
        for b in &self.bounds {
            if b.var >= 2 * self.nb {
                x[b.var] = match (b.lo.is_finite(), b.hi.is_finite()) {
                    (true, true) => 0.5 * (b.lo + b.hi),
                    (true, false) => b.lo.max(0.0),
                    (false, true) => b.hi.min(0.0),
                    (false, false) => 0.0,
                };
            }
        }
        for &(var, value) in &self.fixed {
            x[var] = value;
        }
        x
    }

    fn evaluate(&self, x: &[f64]) -> NlpEval {
        let nb = self.nb;
        let base = self.grid.base_mva;

        let mut grad = vec![0.0; self.dim()];
        for (u, &g) in self.units.iter().enumerate() {
            let c = &self.grid.generators[g].cost;
            let p = x[self.pg_var(u)] * base;
            grad[self.pg_var(u)] = self.scale * base * (2.0 * c.c2 * p + c.c1);
        }

        // power balance
        let mut g = vec![0.0; 2 * nb + 1 + self.fixed.len()];
        let mut jac_g: SparseRows = vec![Vec::new(); g.len()];
        for (i, row) in self.y.rows.iter().enumerate() {
            g[i] = self.demand[i].0;
            g[nb + i] = self.demand[i].1;
            let mut diag = [0.0; 4]; // dP/dθi, dQ/dθi, dP/dvi, dQ/dvi
            for &(k, yik) in row {
                if k == i {
                    let (p, q, dp, dq) = coupling::eval_self(yik, x[nb + i]);
                    g[i] += p;
                    g[nb + i] += q;
                    diag[2] += dp;
                    diag[3] += dq;
                    continue;
                }
                let e = coupling::eval(yik, x[nb + i], x[nb + k], x[i] - x[k]);
                g[i] += e.p;
                g[nb + i] += e.q;
                diag[0] += e.dp[0];
                diag[1] += e.dq[0];
                diag[2] += e.dp[2];
                diag[3] += e.dq[2];
                jac_g[i].push((k, e.dp[1]));
                jac_g[i].push((nb + k, e.dp[3]));
                jac_g[nb + i].push((k, e.dq[1]));
                jac_g[nb + i].push((nb + k, e.dq[3]));
            }
            jac_g[i].push((i, diag[0]));
            jac_g[i].push((nb + i, diag[2]));
            jac_g[nb + i].push((i, diag[1]));
            jac_g[nb + i].push((nb + i, diag[3]));
        }
        for (u, &b) in self.unit_bus.iter().enumerate() {
            g[b] -= x[self.pg_var(u)];
            g[nb + b] -= x[self.qg_var(u)];
            jac_g[b].push((self.pg_var(u), -1.0));
            jac_g[nb + b].push((self.qg_var(u), -1.0));
        }
        g[2 * nb] = x[self.slack];
        jac_g[2 * nb].push((self.slack, 1.0));
        for (r, &(var, value)) in self.fixed.iter().enumerate() {
            g[2 * nb + 1 + r] = x[var] - value;
            jac_g[2 * nb + 1 + r].push((var, 1.0));
        }

        let niq = self.limits.len() + 2 * self.angle_pairs.len() + 2 * self.bounds.len();
        let mut h = Vec::with_capacity(niq);
        let mut jac_h: SparseRows = Vec::with_capacity(niq);
        for lim in &self.limits {
            let (p, q, dp, dq) = self.end_flow(lim, x);
            h.push(p * p + q * q - lim.limit_sq);
            let vars = self.vars4(lim.near, lim.far);
            jac_h.push((0..4).map(|a| (vars[a], 2.0 * (p * dp[a] + q * dq[a]))).collect());
        }
        for &(f, t, lo, hi) in &self.angle_pairs {
            let diff = x[f] - x[t];
            h.push(diff - hi);
            jac_h.push(vec![(f, 1.0), (t, -1.0)]);
            h.push(lo - diff);
            jac_h.push(vec![(f, -1.0), (t, 1.0)]);
        }
        for b in &self.bounds {
            if b.hi.is_finite() {
                h.push(x[b.var] - b.hi);
                jac_h.push(vec![(b.var, 1.0)]);
            }
            if b.lo.is_finite() {
                h.push(b.lo - x[b.var]);
                jac_h.push(vec![(b.var, -1.0)]);
            }
        }

        NlpEval { f: self.scale * self.true_cost(x), grad, g, jac_g, h, jac_h }
    }

    fn add_lagrangian_hessian(&self, x: &[f64], lambda: &[f64], mu: &[f64], out: &mut SparseBuilder) {
        let nb = self.nb;
        let base = self.grid.base_mva;
        for (u, &g) in self.units.iter().enumerate() {
            let c2 = self.grid.generators[g].cost.c2;
            out.add(self.pg_var(u), self.pg_var(u), self.scale * 2.0 * c2 * base * base);
        }
        for (i, row) in self.y.rows.iter().enumerate() {
            let (wp, wq) = (lambda[i], lambda[nb + i]);
            if wp == 0.0 && wq == 0.0 {
                continue;
            }
            for &(k, yik) in row {
                if k == i {
                    out.add(nb + i, nb + i, coupling::hessian_self(yik, wp, wq));
                } else {
                    let hk = coupling::hessian(yik, x[nb + i], x[nb + k], x[i] - x[k], wp, wq);
                    add4(out, &self.vars4(i, k), &hk);
                }
            }
        }
        for (lim, &m) in self.limits.iter().zip(mu) {
            if m == 0.0 {
                continue;
            }
            let (p, q, dp, dq) = self.end_flow(lim, x);
            let (tn, tf, vn, vf) = (x[lim.near], x[lim.far], x[nb + lim.near], x[nb + lim.far]);
            let mut hk = coupling::hessian(lim.y_cross, vn, vf, tn - tf, 2.0 * m * p, 2.0 * m * q);
            hk[2][2] += coupling::hessian_self(lim.y_self, 2.0 * m * p, 2.0 * m * q);
            for a in 0..4 {
                for b in 0..4 {
                    hk[a][b] += 2.0 * m * (dp[a] * dp[b] + dq[a] * dq[b]);
                }
            }
            add4(out, &self.vars4(lim.near, lim.far), &hk);
        }
    }
}

pub fn solve_ac_opf(problem: &OpfProblem, options: &OpfOptions) -> OpfSolution {
    let clock = Stopwatch::start();
    let grid = problem.grid;
    let nlp = AcOpfNlp::new(problem);
    let ipm_opts = IpmOptions { tol: options.tol, max_iter: options.max_iter, ..IpmOptions::default() };
    let result = ipm::solve(&nlp, &ipm_opts);

    let nb = nlp.nb;
    let base = grid.base_mva;
    let x = &result.x;
    let va = x[..nb].to_vec();
    let vm = x[nb..2 * nb].to_vec();
    let mut pg = vec![0.0; grid.generators.len()];
    let mut qg = vec![0.0; grid.generators.len()];
    for (u, &g) in nlp.units.iter().enumerate() {
        pg[g] = x[nlp.pg_var(u)] * base;
        qg[g] = x[nlp.qg_var(u)] * base;
    }
    let e = nlp.evaluate(x);
    let max_mismatch = e.g[..2 * nb].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let feasible = result.converged();
    let failure = result.failure.map(|f| match f {
        ipm::IpmFailure::SingularKkt => FailureReason::SingularJacobian,
        ipm::IpmFailure::Diverged => FailureReason::Diverged,
        _ => FailureReason::MaxIterations,
    });
    OpfSolution {
        state: PfSolution {
            branch_flows: compute_branch_flows(grid, &vm, &va),
            vm,
            va,
            pg,
            qg,
            converged: feasible,
            iterations: result.iterations,
            runtime: clock.seconds(),
            max_mismatch,
            failure,
        },
        objective: nlp.true_cost(x),
        feasible,
        barrier_iterations: result.iterations,
        kkt_residual: result.conditions.gradient,
    }
}
