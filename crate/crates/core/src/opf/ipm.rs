//! Primal-dual interior-point method for smooth problems of the form
//!
//! ```text
//! min f(x)  s.t.  g(x) = 0,  h(x) ≤ 0
//! ```
//!
//! Inequalities get slacks `z > 0` (`h + z = 0`) with multipliers `μ > 0`;
//! each iteration takes one Newton step on the perturbed KKT system with
//! barrier parameter `γ`, reduced to
//!
//! ```text
//! [ M   Jgᵀ ] [dx]   [ −N ]      M = ∇²L + Jhᵀ diag(μ/z) Jh
//! [ Jg   0  ] [dλ] = [ −g ]      N = ∇L + Jhᵀ diag(1/z) (μ∘h + γ)
//! ```
//!
//! then updates `γ ← σ·zᵀμ / m`.

use crate::linalg::SparseBuilder;

/// Row-wise sparse Jacobian: one `(column, value)` list per constraint.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone)]
pub struct NlpEval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub jac_g: SparseRows,
    pub h: Vec<f64>,
    pub jac_h: SparseRows,
}

pub trait Nlp {
    fn dim(&self) -> usize;
    fn initial_point(&self) -> Vec<f64>;
    fn evaluate(&self, x: &[f64]) -> NlpEval;
    /// Adds `∇²f + Σ λ·∇²g + Σ μ·∇²h` at `x` into `out`.
    fn add_lagrangian_hessian(&self, x: &[f64], lambda: &[f64], mu: &[f64], out: &mut SparseBuilder);
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Centering factor for the barrier update.
    pub sigma: f64,
    /// Fraction-to-boundary factor.
    pub xi: f64,
    /// Minimum initial slack.
    pub z0: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { tol: 1e-6, max_iter: 200, sigma: 0.1, xi: 0.995, z0: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmFailure {
    MaxIterations,
    Stalled,
    SingularKkt,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conditions {
    pub feasibility: f64,
    pub gradient: f64,
    pub complementarity: f64,
    pub cost: f64,
}

impl Conditions {
    fn met(&self, tol: f64) -> bool {
        self.feasibility < tol && self.gradient < tol && self.complementarity < tol && self.cost < tol
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub conditions: Conditions,
    pub failure: Option<IpmFailure>,
}

impl IpmResult {
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `∇f + Jgᵀλ + Jhᵀμ`
fn lagrangian_gradient(e: &NlpEval, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = e.grad.clone();
    for (row, &l) in e.jac_g.iter().zip(lambda) {
        for &(c, v) in row {
            lx[c] += v * l;
        }
    }
    for (row, &m) in e.jac_h.iter().zip(mu) {
        for &(c, v) in row {
            lx[c] += v * m;
        }
    }
    lx
}

fn conditions(e: &NlpEval, x: &[f64], z: &[f64], lambda: &[f64], mu: &[f64], f_prev: f64) -> Conditions {
    let lx = lagrangian_gradient(e, lambda, mu);
    let max_h = e.h.iter().fold(0.0f64, |m, &v| m.max(v));
    let zmu: f64 = z.iter().zip(mu).map(|(a, b)| a * b).sum();
    Conditions {
        feasibility: norm_inf(&e.g).max(max_h) / (1.0 + norm_inf(x).max(norm_inf(z))),
        gradient: norm_inf(&lx) / (1.0 + norm_inf(lambda).max(norm_inf(mu))),
        complementarity: zmu / (1.0 + norm_inf(x)),
        cost: (e.f - f_prev).abs() / (1.0 + f_prev.abs()),
    }
}

/// Largest step in `(0, 1]` keeping `v + α·dv` strictly positive, damped by `xi`.
fn max_step(v: &[f64], dv: &[f64], xi: f64) -> f64 {
    let limit = v
        .iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&a, &d)| -a / d)
        .fold(f64::INFINITY, f64::min);
    (xi * limit).min(1.0)
}

pub fn solve(problem: &impl Nlp, options: &IpmOptions) -> IpmResult {
    let n = problem.dim();
    let mut x = problem.initial_point();
    let mut e = problem.evaluate(&x);
    let neq = e.g.len();
    let niq = e.h.len();

    let mut gamma = 1.0;
    let mut z: Vec<f64> = e.h.iter().map(|&h| (-h).max(options.z0)).collect();
    let mut mu: Vec<f64> = z.iter().map(|&zi| gamma / zi).collect();
    let mut lambda = vec![0.0; neq];
    let mut cond = conditions(&e, &x, &z, &lambda, &mu, e.f);
    cond.cost = f64::INFINITY;

    let mut iterations = 0;
    let mut failure = None;
    while !cond.met(options.tol) {
        if iterations >= options.max_iter {
            failure = Some(IpmFailure::MaxIterations);
            break;
        }
        iterations += 1;

        let lx = lagrangian_gradient(&e, &lambda, &mu);
        let mut kkt = SparseBuilder::with_capacity(n + neq, 16 * (n + neq + niq));
        problem.add_lagrangian_hessian(&x, &lambda, &mu, &mut kkt);
        let mut rhs = vec![0.0; n + neq];
        for (i, v) in lx.iter().enumerate() {
            rhs[i] = -v;
        }
        for (r, row) in e.jac_h.iter().enumerate() {
            let w = mu[r] / z[r];
            let shift = (mu[r] * e.h[r] + gamma) / z[r];
            for &(a, va) in row {
                rhs[a] -= va * shift;
                for &(b, vb) in row {
                    kkt.add(a, b, w * va * vb);
                }
            }
        }
        for (r, row) in e.jac_g.iter().enumerate() {
            for &(c, v) in row {
                kkt.add(n + r, c, v);
                kkt.add(c, n + r, v);
            }
            rhs[n + r] = -e.g[r];
        }
        let step = match kkt.solve(&rhs) {
            Ok(s) => s,
            Err(_) => {
                failure = Some(IpmFailure::SingularKkt);
                break;
            }
        };
        let (dx, dlambda) = step.split_at(n);

        let mut dz = vec![0.0; niq];
        for (r, row) in e.jac_h.iter().enumerate() {
            let jdx: f64 = row.iter().map(|&(c, v)| v * dx[c]).sum();
            dz[r] = -e.h[r] - z[r] - jdx;
        }
        let dmu: Vec<f64> = (0..niq).map(|r| -mu[r] + (gamma - mu[r] * dz[r]) / z[r]).collect();

        let alpha_p = max_step(&z, &dz, options.xi);
        let alpha_d = max_step(&mu, &dmu, options.xi);
        let primal_move = alpha_p * norm_inf(dx).max(norm_inf(&dz));
        let dual_move = alpha_d * norm_inf(dlambda).max(norm_inf(&dmu));
        if primal_move < 1e-12 && dual_move < 1e-12 {
            failure = Some(IpmFailure::Stalled);
            break;
        }
        for i in 0..n {
            x[i] += alpha_p * dx[i];
        }
        for r in 0..niq {
            z[r] += alpha_p * dz[r];
            mu[r] += alpha_d * dmu[r];
        }
        for r in 0..neq {
            lambda[r] += alpha_d * dlambda[r];
        }
        if niq > 0 {
            gamma = options.sigma * z.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / niq as f64;
        }

        let f_prev = e.f;
        e = problem.evaluate(&x);
        if !e.f.is_finite() || x.iter().any(|v| !v.is_finite()) || norm_inf(&x) > 1e10 {
            failure = Some(IpmFailure::Diverged);
            break;
        }
        cond = conditions(&e, &x, &z, &lambda, &mu, f_prev);
    }

    IpmResult { x, lambda, mu, z, f: e.f, iterations, conditions: cond, failure }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x0 − 3)² + (x1 − 2)²  s.t.  x0 + x1 = 2,  x0 ≤ 1
    struct SmallQp;

    impl Nlp for SmallQp {
        fn dim(&self) -> usize {
            2
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn evaluate(&self, x: &[f64]) -> NlpEval {
            NlpEval {
                f: (x[0] - 3.0).powi(2) + (x[1] - 2.0).powi(2),
                grad: vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] - 2.0)],
                g: vec![x[0] + x[1] - 2.0],
                jac_g: vec![vec![(0, 1.0), (1, 1.0)]],
                h: vec![x[0] - 1.0],
                jac_h: vec![vec![(0, 1.0)]],
            }
        }
        fn add_lagrangian_hessian(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut SparseBuilder) {
            out.add(0, 0, 2.0);
            out.add(1, 1, 2.0);
        }
    }

    #[test]
    fn small_qp() {
        let r = solve(&SmallQp, &IpmOptions { tol: 1e-9, ..Default::default() });
        assert!(r.converged(), "{:?}", r.failure);
        // the line optimum (1.5, 0.5) is cut off by the bound
        assert!((r.x[0] - 1.0).abs() < 1e-7);
        assert!((r.x[1] - 1.0).abs() < 1e-7);
        // multiplier from stationarity: 2(x0 − 3) + λ + μ = 0, 2(x1 − 2) + λ = 0
        assert!((r.lambda[0] - 2.0).abs() < 1e-6);
        assert!((r.mu[0] - 2.0).abs() < 1e-6);
    }

    /// x ≥ 1 and x ≤ 0 simultaneously.
    struct Infeasible;

    impl Nlp for Infeasible {
        fn dim(&self) -> usize {
            1
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.5]
        }
        fn evaluate(&self, x: &[f64]) -> NlpEval {
            NlpEval {
                f: x[0],
                grad: vec![1.0],
                g: vec![],
                jac_g: vec![],
                h: vec![1.0 - x[0], x[0]],
                jac_h: vec![vec![(0, -1.0)], vec![(0, 1.0)]],
            }
        }
        fn add_lagrangian_hessian(&self, _: &[f64], _: &[f64], _: &[f64], _: &mut SparseBuilder) {}
    }

    #[test]
    fn infeasible_problem_fails() {
        let r = solve(&Infeasible, &IpmOptions::default());
        assert!(!r.converged());
    }
}
