//! Exponential change of variables and the uniqueness transform.
//!
//! With `v = e^{lambda u} - 1` and `r = lambda e^{lambda u} q`, a solution of
//! the equation with driver `F` in the `v` variable maps to a solution with
//! driver
//!
//! ```text
//! f = F(...) / (lambda e^{lambda u}) + lambda (a p.p + sigma p.r + |r|^2 / 2)
//! ```
//!
//! in the `u` variable, and conversely.

use crate::error::{Error, Result};
use crate::grid::SolutionField;
use crate::spec::{ArgMask, Driver, MatrixField, Point, ProblemSpec};
use serde::Serialize;
use std::sync::Arc;

/// Largest `lambda * |u|` accepted by the forward map.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpTransform {
    pub lambda: f64,
}

impl ExpTransform {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
        }
        Ok(ExpTransform { lambda })
    }
}

/// `u = ln(v + 1) / lambda`, `q = r / (lambda (v + 1))`; `r` has `d0`
/// components per entry of `v`.
pub fn exp_inverse(v: &[f64], r: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    ExpTransform::new(lambda)?;
    let d0 = stride(v.len(), r.len())?;
    let mut u = Vec::with_capacity(v.len());
    let mut q = Vec::with_capacity(r.len());
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > -1.0) {
            return Err(Error::Domain {
                index: i,
                msg: format!("v = {vi} is not above -1"),
            });
        }
        u.push(vi.ln_1p() / lambda);
        for j in 0..d0 {
            q.push(r[i * d0 + j] / (lambda * (1.0 + vi)));
        }
    }
    Ok((u, q))
}

/// `v = e^{lambda u} - 1`, `r = lambda e^{lambda u} q`.
pub fn exp_forward(u: &[f64], q: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    ExpTransform::new(lambda)?;
    let d0 = stride(u.len(), q.len())?;
    let sup = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !sup.is_finite() || lambda * sup > EXP_GUARD {
        return Err(Error::Range(format!("lambda * sup|u| = {} exceeds {EXP_GUARD}", lambda * sup)));
    }
    let mut v = Vec::with_capacity(u.len());
    let mut r = Vec::with_capacity(q.len());
    for (i, &ui) in u.iter().enumerate() {
        v.push((lambda * ui).exp_m1());
        let e = (lambda * ui).exp();
        for j in 0..d0 {
            r.push(lambda * e * q[i * d0 + j]);
        }
    }
    Ok((v, r))
}

fn stride(n: usize, m: usize) -> Result<usize> {
    if n == 0 {
        return Ok(1);
    }
    if !m.is_multiple_of(n) || m == 0 {
        return Err(Error::Dimension {
            what: "transform companion field",
            expected: n,
            got: m,
        });
    }
    Ok(m / n)
}

/// Apply [`exp_inverse`] to every time level of a solution.
pub fn exp_inverse_field(sol: &SolutionField, lambda: f64) -> Result<SolutionField> {
    let (u, q) = exp_inverse(&sol.u, &sol.q, lambda)?;
    let mut out = sol.clone();
    out.u = u;
    out.q = q;
    out.w_boundary_slope = None;
    Ok(out)
}

/// Apply [`exp_forward`] to every time level of a solution.
pub fn exp_forward_field(sol: &SolutionField, lambda: f64) -> Result<SolutionField> {
    let (v, r) = exp_forward(&sol.u, &sol.q, lambda)?;
    let mut out = sol.clone();
    out.u = v;
    out.q = r;
    out.w_boundary_slope = None;
    Ok(out)
}

/// `2 a p.p + 2 sigma p.r + |r|^2` at a point.
pub(crate) fn quad_form(a: &dyn MatrixField, sigma: &dyn MatrixField, d: usize, d0: usize, pt: &Point<'_>, p: &[f64], r: &[f64]) -> f64 {
    let mut ab = [0.0f64; 64];
    let mut sb = [0.0f64; 64];
    let ab = &mut ab[..d * d];
    let sb = &mut sb[..d * d0];
    a.eval_into(pt, ab);
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += 2.0 * ab[i * d + j] * p[i] * p[j];
        }
    }
    if !sigma.is_zero() {
        sigma.eval_into(pt, sb);
        for i in 0..d {
            for k in 0..d0 {
                acc += 2.0 * sb[i * d0 + k] * p[i] * r[k];
            }
        }
    }
    acc + r.iter().map(|x| x * x).sum::<f64>()
}

struct ToU {
    big_f: Arc<dyn Driver>,
    lambda: f64,
    a: Arc<dyn MatrixField>,
    sigma: Arc<dyn MatrixField>,
    d: usize,
    d0: usize,
}

impl Driver for ToU {
    fn eval(&self, pt: &Point<'_>, u: f64, p: &[f64], r: &[f64]) -> f64 {
        let lam = self.lambda;
        let e = (lam * u).exp();
        let mask = self.big_f.args();
        let mut pb = [0.0f64; 8];
        let mut rb = [0.0f64; 8];
        let pv = &mut pb[..p.len()];
        let rv = &mut rb[..r.len()];
        if mask.p {
            pv.iter_mut().zip(p).for_each(|(o, x)| *o = lam * e * x);
        }
        if mask.r {
            rv.iter_mut().zip(r).for_each(|(o, x)| *o = lam * e * x);
        }
        let big = self.big_f.eval(pt, (lam * u).exp_m1(), pv, rv);
        big / (lam * e) + 0.5 * lam * quad_form(&*self.a, &*self.sigma, self.d, self.d0, pt, p, r)
    }
}

/// Driver of the `u` equation obtained from the `v` equation with driver `F`
/// under `v = e^{lambda u} - 1`. When `F` ignores `(v, p, r)` this is
/// `F(t, x) e^{-lambda u} / lambda + lambda (a p.p + sigma p.r + |r|^2 / 2)`.
pub fn transform_driver(big_f: Arc<dyn Driver>, lambda: f64, spec: &ProblemSpec) -> Arc<dyn Driver> {
    Arc::new(ToU {
        big_f,
        lambda,
        a: spec.a.clone(),
        sigma: spec.sigma.clone(),
        d: spec.d,
        d0: spec.d0,
    })
}

struct ToV {
    f: Arc<dyn Driver>,
    lambda: f64,
    a: Arc<dyn MatrixField>,
    sigma: Arc<dyn MatrixField>,
    d: usize,
    d0: usize,
}

impl Driver for ToV {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        let lam = self.lambda;
        let w = v + 1.0;
        let mut pb = [0.0f64; 8];
        let mut rb = [0.0f64; 8];
        let pu = &mut pb[..p.len()];
        let ru = &mut rb[..r.len()];
        pu.iter_mut().zip(p).for_each(|(o, x)| *o = x / (lam * w));
        ru.iter_mut().zip(r).for_each(|(o, x)| *o = x / (lam * w));
        lam * w * self.f.eval(pt, w.ln() / lam, pu, ru) - quad_form(&*self.a, &*self.sigma, self.d, self.d0, pt, p, r) / (2.0 * w)
    }
}

/// Driver of the `v = e^{lambda u} - 1` equation given the `u` driver `f`:
/// `lambda (v+1) f(ln(v+1)/lambda, p/(lambda(v+1)), r/(lambda(v+1))) - (2a p.p + 2 sigma p.r + |r|^2) / (2(v+1))`.
/// Defined for `v > -1`. Uses the driver's own closed form when it has one.
pub fn exponentiate_driver(f: Arc<dyn Driver>, lambda: f64, spec: &ProblemSpec) -> Arc<dyn Driver> {
    if let Some(closed) = f.exponentiated(lambda) {
        return closed;
    }
    Arc::new(ToV {
        f,
        lambda,
        a: spec.a.clone(),
        sigma: spec.sigma.clone(),
        d: spec.d,
        d0: spec.d0,
    })
}

/// Args read by an exponentiated driver built without a closed form.
pub fn exponentiated_mask(f: &dyn Driver) -> ArgMask {
    f.args().union(ArgMask {
        v: true,
        p: true,
        r: true,
    })
}

/// Transform `u = phi(u~)` with `phi(u~) = (1/beta) ln(((B e^{beta M} - 1) e^{beta B u~} + 1) / (B e^{beta M}))`.
/// In terms of `u`, `w(u) = phi'(phi^{-1}(u)) = B - e^{-beta (u + M)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessTransform {
    pub beta: f64,
    pub b: f64,
    pub m: f64,
}

/// `ln(e^z + 1)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `ln(B e^z - 1)` for `B e^z > 1`.
fn ln_b_exp_minus_one(b: f64, z: f64) -> f64 {
    z + b.ln() + (-(-z).exp() / b).ln_1p()
}

impl UniquenessTransform {
    pub fn phi(&self, ut: f64) -> f64 {
        let (beta, b, m) = (self.beta, self.b, self.m);
        let ln_a = ln_b_exp_minus_one(b, beta * m);
        (softplus(beta * b * ut + ln_a) - b.ln() - beta * m) / beta
    }

    pub fn phi_inv(&self, u: f64) -> f64 {
        let (beta, b, m) = (self.beta, self.b, self.m);
        (ln_b_exp_minus_one(b, beta * (u + m)) - ln_b_exp_minus_one(b, beta * m)) / (beta * b)
    }

    pub fn w(&self, u: f64) -> f64 {
        self.b - (-self.beta * (u + self.m)).exp()
    }
    pub fn w1(&self, u: f64) -> f64 {
        self.beta * (-self.beta * (u + self.m)).exp()
    }
    pub fn w2(&self, u: f64) -> f64 {
        -self.beta * self.beta * (-self.beta * (u + self.m)).exp()
    }

    /// `(mu0/2) w''/w + 2 Lambda w'/w + (w'/w)^2` at `u`.
    pub fn expression(&self, u: f64, mu0: f64, big_lambda: f64) -> f64 {
        let w = self.w(u);
        let g1 = self.w1(u) / w;
        let g2 = self.w2(u) / w;
        0.5 * mu0 * g2 + 2.0 * big_lambda * g1 + g1 * g1
    }

    /// `d/du` of [`Self::expression`].
    pub fn expression_slope(&self, u: f64, mu0: f64, big_lambda: f64) -> f64 {
        let beta = self.beta;
        let rho = (-beta * (u + self.m)).exp();
        let den = self.b - rho;
        let g = rho / den;
        let dg_drho = self.b / (den * den);
        let de_dg = -0.5 * mu0 * beta * beta + 2.0 * big_lambda * beta + 2.0 * beta * beta * g;
        de_dg * dg_drho * (-beta * rho)
    }
}

pub fn uniqueness_phi(beta: f64, b: f64, m: f64) -> Result<UniquenessTransform> {
    if !(beta > 0.0) || !(b > 1.0) || !(m > 0.0) || !beta.is_finite() || !b.is_finite() || !m.is_finite() {
        return Err(Error::Argument(format!("need beta > 0, B > 1, M > 0; got {beta}, {b}, {m}")));
    }
    Ok(UniquenessTransform { beta, b, m })
}

pub const MARGIN_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    /// Largest grid value of the expression on `[-M, M]`.
    pub margin: f64,
    /// Grid spacing times the largest slope; bounds the between-node excess.
    pub slack: f64,
}

impl Margin {
    /// Certified negativity: the expression is below `-delta` everywhere.
    pub fn certified_delta(&self) -> f64 {
        -(self.margin + self.slack)
    }
}

pub fn negativity_margin_on(tr: &UniquenessTransform, mu0: f64, big_lambda: f64, points: usize) -> Margin {
    let h = 2.0 * tr.m / (points - 1) as f64;
    let mut margin = f64::NEG_INFINITY;
    let mut slope = 0.0f64;
    for i in 0..points {
        let u = if i + 1 == points { tr.m } else { -tr.m + i as f64 * h };
        margin = margin.max(tr.expression(u, mu0, big_lambda));
        slope = slope.max(tr.expression_slope(u, mu0, big_lambda).abs());
    }
    Margin { margin, slack: h * slope }
}

/// Largest value of the expression over a 1000-point grid of `[-M, M]`.
pub fn negativity_margin(tr: &UniquenessTransform, mu0: f64, big_lambda: f64) -> f64 {
    negativity_margin_on(tr, mu0, big_lambda, MARGIN_POINTS).margin
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaChoice {
    pub beta: f64,
    pub b: f64,
    pub margin: f64,
    pub slack: f64,
}

pub const BETA_RANGE: (f64, f64) = (1e-2, 1e4);
pub const B_RANGE: (f64, f64) = (1.0 + 1e-3, 1e4);
pub const SEARCH_POINTS: usize = 121;
pub const REQUIRED_MARGIN: f64 = -1e-6;

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// First `(beta, B)` in row-major order (beta outer, both ascending on
/// logarithmic grids) whose margin is at most `-1e-6`.
pub fn choose_beta_b(mu0: f64, big_lambda: f64, m: f64) -> Result<BetaChoice> {
    if !(mu0 >= 0.0) || !(big_lambda >= 0.0) || !(m > 0.0) {
        return Err(Error::Argument(format!("need mu0 >= 0, Lambda >= 0, M > 0; got {mu0}, {big_lambda}, {m}")));
    }
    let mut best = f64::INFINITY;
    for beta in log_grid(BETA_RANGE.0, BETA_RANGE.1, SEARCH_POINTS) {
        for b in log_grid(B_RANGE.0, B_RANGE.1, SEARCH_POINTS) {
            let tr = UniquenessTransform { beta, b, m };
            let mg = negativity_margin_on(&tr, mu0, big_lambda, MARGIN_POINTS);
            if mg.margin.is_finite() {
                best = best.min(mg.margin);
            }
            if mg.margin <= REQUIRED_MARGIN {
                return Ok(BetaChoice {
                    beta,
                    b,
                    margin: mg.margin,
                    slack: mg.slack,
                });
            }
        }
    }
    Err(Error::SearchFailure { best_margin: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{driver_fn, ProblemSpec};
    use std::f64::consts::E;

    #[test]
    fn inverse_examples() {
        let (u, q) = exp_inverse(&[0.0], &[0.0], 1.0).unwrap();
        assert_eq!((u[0], q[0]), (0.0, 0.0));
        let (u, q) = exp_inverse(&[E - 1.0], &[E], 1.0).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (q[0] - 1.0).abs() < 1e-15);
        let err = exp_inverse(&[0.0, -1.0], &[0.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain { index: 1, .. }));
    }

    #[test]
    fn forward_examples() {
        let (v, r) = exp_forward(&[0.0], &[0.0], 1.0).unwrap();
        assert_eq!((v[0], r[0]), (0.0, 0.0));
        let (v, r) = exp_forward(&[2f64.ln() / 2.0], &[1.0], 2.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && (r[0] - 4.0).abs() < 1e-14);
        assert!(matches!(exp_forward(&[800.0], &[0.0], 1.0).unwrap_err(), Error::Range(_)));
        assert!(exp_forward(&[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn transformed_driver_examples() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let zero = crate::spec::zero_driver();
        let f = transform_driver(zero, 0.7, &spec);
        let pt = Point::new(0.0, &[0.3], None);
        assert!((f.eval(&pt, 0.4, &[2.0], &[0.0]) - 0.35 * 4.0).abs() < 1e-14);
        let big = driver_fn(ArgMask::NONE, |_, _, _, _| 3.0);
        let f = transform_driver(big, 0.5, &spec);
        assert!((f.eval(&pt, 0.0, &[0.0], &[0.0]) - 6.0).abs() < 1e-14);
        for lam in [1e-2, 1e-4, 1e-6] {
            let big = driver_fn(ArgMask::NONE, |_, _, _, _| 3.0);
            let f = transform_driver(big, lam, &spec);
            assert!((f.eval(&pt, 0.0, &[0.0], &[0.0]) * lam - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exponentiation_inverts_transformation() {
        let spec = ProblemSpec::new(1, 1, 1.0).with_sigma(crate::spec::const_matrix(vec![0.3]));
        let big = driver_fn(ArgMask::ALL, |p, v, dp, r| p.x[0] + 0.3 * v - 0.2 * dp[0] + 0.1 * r[0]);
        let lam = 1.3;
        let f = transform_driver(big.clone(), lam, &spec);
        let back = exponentiate_driver(f, lam, &spec);
        let pt = Point::new(0.1, &[0.4], None);
        for &(v, p, r) in &[(0.2, 0.5, -0.3), (-0.5, 1.5, 0.2), (3.0, -2.0, 1.0)] {
            let a = back.eval(&pt, v, &[p], &[r]);
            let b = big.eval(&pt, v, &[p], &[r]);
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn uniqueness_transform_examples() {
        let tr = uniqueness_phi(1.0, 2.0, 1.0).unwrap();
        assert!(tr.phi(0.0).abs() < 1e-14);
        assert!((tr.w(-1.0) - 1.0).abs() < 1e-15);
        assert!((tr.w(1.0) - (2.0 - (-2.0f64).exp())).abs() < 1e-15);
        let ratio = tr.w1(1.0) / tr.w(1.0);
        assert!((ratio - (-2.0f64).exp() / (2.0 - (-2.0f64).exp())).abs() < 1e-15);
        assert!((ratio - 0.0726).abs() < 1e-4);
        assert!(uniqueness_phi(1.0, 1.0, 1.0).is_err());
        assert!(uniqueness_phi(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn w_is_derivative_of_phi_at_preimage() {
        let tr = uniqueness_phi(3.0, 5.0, 0.7).unwrap();
        for i in 0..20 {
            let u = -0.6 + 1.2 * i as f64 / 19.0;
            let ut = tr.phi_inv(u);
            let h = 1e-6;
            let fd = (tr.phi(ut + h) - tr.phi(ut - h)) / (2.0 * h);
            assert!((fd - tr.w(u)).abs() < 1e-6 * tr.w(u).max(1.0));
            assert!((tr.phi(ut) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_examples() {
        let tr = uniqueness_phi(1.0, 2.0, 1.0).unwrap();
        assert!(negativity_margin(&tr, 1.0 / 3.0, 0.0).is_finite());
        assert!(negativity_margin(&tr, 0.0, 1.0) > 0.0);
        let coarse = negativity_margin(&tr, 1.0 / 3.0, 0.5);
        let fine = negativity_margin_on(&tr, 1.0 / 3.0, 0.5, 20_000).margin;
        assert!((coarse - fine).abs() < 1e-6);
        assert!(matches!(choose_beta_b(0.0, 1.0, 1.0).unwrap_err(), Error::SearchFailure { .. }));
        let c = choose_beta_b(1.0 / 3.0, 0.0, 1.0).unwrap();
        assert!(c.margin <= REQUIRED_MARGIN);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let tr = uniqueness_phi(2.0, 3.0, 1.0).unwrap();
        for &u in &[-0.9, -0.1, 0.5] {
            let h = 1e-6;
            let fd = (tr.expression(u + h, 0.4, 0.7) - tr.expression(u - h, 0.4, 0.7)) / (2.0 * h);
            assert!((fd - tr.expression_slope(u, 0.4, 0.7)).abs() < 1e-6);
        }
    }
}
