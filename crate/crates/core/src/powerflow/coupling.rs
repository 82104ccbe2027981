//! Value, gradient and Hessian of the polar power terms shared by the
//! mismatch equations and the branch flow expressions.
//!
//! For an admittance `G + jB` coupling bus `i` to bus `k`:
//!
//! ```text
//! P = vi·vk·(G cos θ + B sin θ)
//! Q = vi·vk·(G sin θ − B cos θ)        θ = θi − θk
//! ```
//!
//! Derivatives are taken with respect to the local variable order
//! `[θi, θk, vi, vk]`. The self term (`i == k`) reduces to
//! `P = vi²·G`, `Q = −vi²·B`.

use num_complex::Complex64;

pub(crate) type Local4 = [f64; 4];
pub(crate) type Hess4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy)]
pub(crate) struct CouplingEval {
    pub p: f64,
    pub q: f64,
    pub dp: Local4,
    pub dq: Local4,
}

#[inline]
fn ab(y: Complex64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (y.re * c + y.im * s, y.re * s - y.im * c)
}

#[inline]
pub(crate) fn eval(y: Complex64, vi: f64, vk: f64, theta: f64) -> CouplingEval {
    let (a, b) = ab(y, theta);
    let vv = vi * vk;
    CouplingEval {
        p: vv * a,
        q: vv * b,
        dp: [-vv * b, vv * b, vk * a, vi * a],
        dq: [vv * a, -vv * a, vk * b, vi * b],
    }
}

/// `wp·∇²P + wq·∇²Q` for the cross term.
#[inline]
pub(crate) fn hessian(y: Complex64, vi: f64, vk: f64, theta: f64, wp: f64, wq: f64) -> Hess4 {
    let (a, b) = ab(y, theta);
    let vv = vi * vk;
    // P-part uses (a, b); Q-part is the same pattern with a -> b, b -> -a.
    let ca = wp * a + wq * b;
    let cb = wp * b - wq * a;
    let tt = -vv * ca;
    let ti_vi = -vk * cb;
    let ti_vk = -vi * cb;
    let mut h = [[0.0; 4]; 4];
    h[0][0] = tt;
    h[1][1] = tt;
    h[0][1] = -tt;
    h[1][0] = -tt;
    h[0][2] = ti_vi;
    h[2][0] = ti_vi;
    h[0][3] = ti_vk;
    h[3][0] = ti_vk;
    h[1][2] = -ti_vi;
    h[2][1] = -ti_vi;
    h[1][3] = -ti_vk;
    h[3][1] = -ti_vk;
    h[2][3] = ca;
    h[3][2] = ca;
    h
}

/// Self term `(P, Q, dP/dvi, dQ/dvi)`.
#[inline]
pub(crate) fn eval_self(y: Complex64, vi: f64) -> (f64, f64, f64, f64) {
    (vi * vi * y.re, -vi * vi * y.im, 2.0 * vi * y.re, -2.0 * vi * y.im)
}

/// `wp·d²P/dvi² + wq·d²Q/dvi²` for the self term.
#[inline]
pub(crate) fn hessian_self(y: Complex64, wp: f64, wq: f64) -> f64 {
    2.0 * (wp * y.re - wq * y.im)
}
