//! Problem definition for the Cauchy-Dirichlet quadratic BSPDE
//!
//! ```text
//! du = -[(a^{ij} u_{x^j} + sigma^{ik} q^k)_{x^i} + f(t, x, u, u_x, q)] dt + q^k dW^k,
//! u(T, x) = phi(x),  u = 0 on the boundary of the box,
//! ```
//!
//! together with the structural conditions that make it well posed.

use crate::error::{Error, Result};
use crate::linalg::sym_eig_extremes;
use crate::rng;
use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

/// Tolerance on eigenvalues when checking matrix inequalities.
pub const EIG_TOL: f64 = 1e-12;

/// Evaluation point `(t, x[, w])`; `w` is the current Wiener value in lift mode.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub w: Option<f64>,
}

impl<'a> Point<'a> {
    pub fn new(t: f64, x: &'a [f64], w: Option<f64>) -> Self {
        Point { t, x, w }
    }
}

/// Matrix-valued coefficient, written row-major into `out`.
pub trait MatrixField: Send + Sync {
    fn eval_into(&self, pt: &Point<'_>, out: &mut [f64]);

    /// True when the field is identically zero; lets assembly skip work.
    fn is_zero(&self) -> bool {
        false
    }
}

/// Scalar field of `(t, x[, w])`; also used for terminal data (t ignored).
pub trait ScalarField: Send + Sync {
    fn eval(&self, pt: &Point<'_>) -> f64;
}

/// Which of `(v, p, r)` a driver actually reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgMask {
    pub v: bool,
    pub p: bool,
    pub r: bool,
}

impl ArgMask {
    pub const ALL: ArgMask = ArgMask {
        v: true,
        p: true,
        r: true,
    };
    pub const NONE: ArgMask = ArgMask {
        v: false,
        p: false,
        r: false,
    };

    pub fn union(self, other: ArgMask) -> ArgMask {
        ArgMask {
            v: self.v || other.v,
            p: self.p || other.p,
            r: self.r || other.r,
        }
    }
}

/// Driver `f(t, x[, w], v, p, r)`.
pub trait Driver: Send + Sync {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64;

    fn args(&self) -> ArgMask {
        ArgMask::ALL
    }

    /// Closed form of the driver seen by `v = e^{lambda u} - 1`, when known.
    fn exponentiated(&self, _lambda: f64) -> Option<Arc<dyn Driver>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct ConstMatrix(pub Vec<f64>);

impl MatrixField for ConstMatrix {
    fn eval_into(&self, _pt: &Point<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

pub struct FnMatrix<F>(pub F);

impl<F> MatrixField for FnMatrix<F>
where
    F: Fn(&Point<'_>, &mut [f64]) + Send + Sync,
{
    fn eval_into(&self, pt: &Point<'_>, out: &mut [f64]) {
        (self.0)(pt, out)
    }
}

pub struct FnScalar<F>(pub F);

impl<F> ScalarField for FnScalar<F>
where
    F: Fn(&Point<'_>) -> f64 + Send + Sync,
{
    fn eval(&self, pt: &Point<'_>) -> f64 {
        (self.0)(pt)
    }
}

pub struct FnDriver<F> {
    pub f: F,
    pub mask: ArgMask,
}

impl<F> Driver for FnDriver<F>
where
    F: Fn(&Point<'_>, f64, &[f64], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        (self.f)(pt, v, p, r)
    }
    fn args(&self) -> ArgMask {
        self.mask
    }
}

pub fn driver_fn<F>(mask: ArgMask, f: F) -> Arc<dyn Driver>
where
    F: Fn(&Point<'_>, f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnDriver { f, mask })
}

pub fn scalar_fn<F>(f: F) -> Arc<dyn ScalarField>
where
    F: Fn(&Point<'_>) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnScalar(f))
}

pub fn matrix_fn<F>(f: F) -> Arc<dyn MatrixField>
where
    F: Fn(&Point<'_>, &mut [f64]) + Send + Sync + 'static,
{
    Arc::new(FnMatrix(f))
}

pub fn const_matrix(values: Vec<f64>) -> Arc<dyn MatrixField> {
    Arc::new(ConstMatrix(values))
}

pub fn zero_driver() -> Arc<dyn Driver> {
    driver_fn(ArgMask::NONE, |_, _, _, _| 0.0)
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(d: usize) -> Self {
        BoxDomain {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    Deterministic,
    MarkovianLift,
}

/// Growth envelope `|f| <= lambda0 + lambda1 |v| + gamma(|v|)(|p|^2 + |r|^2)`
/// together with the constant `lambda` of the strengthened form
/// `|f| <= lambda0 + lambda1 |v| + lambda mu0 (|p|^2 + |r|^2)`.
#[derive(Clone)]
pub struct GrowthEnvelope {
    pub lambda0: Arc<dyn ScalarField>,
    pub lambda0_sup: f64,
    pub lambda0_l2: f64,
    pub lambda1: f64,
    pub gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lambda: f64,
}

impl fmt::Debug for GrowthEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthEnvelope")
            .field("lambda0_sup", &self.lambda0_sup)
            .field("lambda0_l2", &self.lambda0_l2)
            .field("lambda1", &self.lambda1)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl GrowthEnvelope {
    /// Envelope with constant `lambda0` and constant `gamma`.
    pub fn constant(lambda0: f64, lambda1: f64, gamma: f64, lambda: f64, domain: &BoxDomain, horizon: f64) -> Self {
        GrowthEnvelope {
            lambda0: scalar_fn(move |_| lambda0),
            lambda0_sup: lambda0,
            lambda0_l2: lambda0 * (domain.volume() * horizon).sqrt(),
            lambda1,
            gamma: Arc::new(move |_| gamma),
            lambda,
        }
    }

    /// Check the envelope's own invariants on sampled points.
    pub fn validate(&self, spec: &ProblemSpec, n_samples: usize, seed: u64) -> Result<()> {
        if self.lambda0_sup < 0.0 || self.lambda1 < 0.0 || self.lambda < 0.0 {
            return Err(Error::Argument("envelope constants must be nonnegative".into()));
        }
        let mut prev = (self.gamma)(0.0);
        for i in 1..=200 {
            let s = 0.05 * i as f64 * i as f64;
            let g = (self.gamma)(s);
            if g < prev {
                return Err(Error::Precondition(format!("gamma decreases near {s}")));
            }
            prev = g;
        }
        for (t, x, w) in spec.sample_points(n_samples, seed) {
            let v = self.lambda0.eval(&Point::new(t, &x, w));
            if !(0.0..=self.lambda0_sup + 1e-12).contains(&v) {
                return Err(Error::Precondition(format!(
                    "lambda0 = {v} at t = {t}, x = {x:?} outside [0, {}]",
                    self.lambda0_sup
                )));
            }
        }
        Ok(())
    }
}

/// Problem data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub d: usize,
    pub d0: usize,
    pub domain: BoxDomain,
    pub horizon: f64,
    pub a: Arc<dyn MatrixField>,
    pub sigma: Arc<dyn MatrixField>,
    pub f: Arc<dyn Driver>,
    pub phi: Arc<dyn ScalarField>,
    pub mode: CoefficientMode,
    /// Coefficients do not depend on `t`; lets the solver reuse factorizations.
    pub autonomous: bool,
    /// `phi` must vanish on the boundary.
    pub terminal_compatible: bool,
    /// Declared bound on the entries of `a` and `sigma`.
    pub coeff_bound: f64,
    /// Half-width of the sampled Wiener range in lift mode.
    pub w_span: f64,
    pub envelope: Option<GrowthEnvelope>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("d", &self.d)
            .field("d0", &self.d0)
            .field("domain", &self.domain)
            .field("horizon", &self.horizon)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Unit box, `a = I/2`, `sigma = 0`, `f = 0`, `phi = 0`.
    pub fn new(d: usize, d0: usize, horizon: f64) -> Self {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 0.5;
        }
        ProblemSpec {
            d,
            d0,
            domain: BoxDomain::unit(d),
            horizon,
            a: const_matrix(a),
            sigma: const_matrix(vec![0.0; d * d0]),
            f: zero_driver(),
            phi: scalar_fn(|_| 0.0),
            mode: CoefficientMode::Deterministic,
            autonomous: true,
            terminal_compatible: true,
            coeff_bound: 1e6,
            w_span: 5.0 * horizon.sqrt(),
            envelope: None,
        }
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = domain;
        self
    }
    pub fn with_a(mut self, a: Arc<dyn MatrixField>) -> Self {
        self.a = a;
        self
    }
    pub fn with_sigma(mut self, sigma: Arc<dyn MatrixField>) -> Self {
        self.sigma = sigma;
        self
    }
    pub fn with_driver(mut self, f: Arc<dyn Driver>) -> Self {
        self.f = f;
        self
    }
    pub fn with_terminal(mut self, phi: Arc<dyn ScalarField>) -> Self {
        self.phi = phi;
        self
    }
    pub fn with_mode(mut self, mode: CoefficientMode) -> Self {
        self.mode = mode;
        self
    }
    pub fn with_envelope(mut self, env: GrowthEnvelope) -> Self {
        self.envelope = Some(env);
        self
    }

    pub fn eval_a(&self, pt: &Point<'_>) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.d * self.d];
        self.a.eval_into(pt, &mut buf);
        DMatrix::from_row_slice(self.d, self.d, &buf)
    }

    pub fn eval_sigma(&self, pt: &Point<'_>) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.d * self.d0];
        self.sigma.eval_into(pt, &mut buf);
        DMatrix::from_row_slice(self.d, self.d0, &buf)
    }

    /// Uniform samples of `(t, x[, w])`; point `i` uses its own stream.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<(f64, Vec<f64>, Option<f64>)> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = rng::stream(seed, i as u64);
                let t = g.random::<f64>() * self.horizon;
                let x: Vec<f64> = (0..self.d)
                    .map(|k| self.domain.lo[k] + g.random::<f64>() * (self.domain.hi[k] - self.domain.lo[k]))
                    .collect();
                let w = match self.mode {
                    CoefficientMode::MarkovianLift => Some((2.0 * g.random::<f64>() - 1.0) * self.w_span),
                    CoefficientMode::Deterministic => None,
                };
                (t, x, w)
            })
            .collect()
    }

    /// Structural checks: dimensions, symmetry of `a`, bounded coefficients,
    /// terminal compatibility.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d0 == 0 {
            return Err(Error::Argument("dimensions must be positive".into()));
        }
        if self.domain.dim() != self.d || self.domain.hi.len() != self.d {
            return Err(Error::Dimension {
                what: "domain",
                expected: self.d,
                got: self.domain.dim(),
            });
        }
        if self.domain.lo.iter().zip(&self.domain.hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Argument("domain needs lo < hi on every axis".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Argument(format!("horizon {} must be positive", self.horizon)));
        }
        if self.mode == CoefficientMode::MarkovianLift && self.d0 != 1 {
            return Err(Error::Argument("lift mode supports a single Wiener coordinate".into()));
        }
        for (t, x, w) in self.sample_points(64, 0x5eed) {
            let pt = Point::new(t, &x, w);
            let a = self.eval_a(&pt);
            let s = self.eval_sigma(&pt);
            check_symmetric(&a, &pt)?;
            if a.iter().chain(s.iter()).any(|v| !v.is_finite() || v.abs() > self.coeff_bound) {
                return Err(Error::Structural(format!(
                    "coefficients not bounded by {} at t = {t}, x = {x:?}",
                    self.coeff_bound
                )));
            }
        }
        if self.terminal_compatible {
            for (i, (_, mut x, w)) in self.sample_points(64, 0xb0d).into_iter().enumerate() {
                let axis = i % self.d;
                x[axis] = if i % 2 == 0 { self.domain.lo[axis] } else { self.domain.hi[axis] };
                let v = self.phi.eval(&Point::new(self.horizon, &x, w));
                if v.abs() > 1e-12 {
                    return Err(Error::Structural(format!(
                        "terminal datum is {v} at boundary point {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_symmetric(a: &DMatrix<f64>, pt: &Point<'_>) -> Result<()> {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::Structural(format!(
                    "a is not symmetric at t = {}, x = {:?}, w = {:?}: a[{i}][{j}] = {} but a[{j}][{i}] = {}",
                    pt.t,
                    pt.x,
                    pt.w,
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SampleViolation {
    pub t: f64,
    pub x: Vec<f64>,
    pub w: Option<f64>,
    pub min_eig: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SuperparabolicReport {
    pub kappa_est: f64,
    pub k_est: f64,
    pub violations: Vec<SampleViolation>,
}

/// Estimate `kappa` and `K` in `kappa I + sigma sigma^T <= 2a <= K I` from samples.
pub fn validate_superparabolic(spec: &ProblemSpec, n_samples: usize, seed: u64) -> Result<SuperparabolicReport> {
    if n_samples == 0 {
        return Err(Error::Argument("n_samples must be at least 1".into()));
    }
    let pts = spec.sample_points(n_samples, seed);
    let per_point: Vec<Result<(f64, f64, Option<SampleViolation>)>> = pts
        .par_iter()
        .map(|(t, x, w)| {
            let pt = Point::new(*t, x, *w);
            let a = spec.eval_a(&pt);
            check_symmetric(&a, &pt)?;
            let s = spec.eval_sigma(&pt);
            let two_a = &a * 2.0;
            let gap = &two_a - &s * s.transpose();
            let (lo, _) = sym_eig_extremes(&gap);
            let (_, hi) = sym_eig_extremes(&two_a);
            let viol = (lo <= EIG_TOL).then(|| SampleViolation {
                t: *t,
                x: x.clone(),
                w: *w,
                min_eig: lo,
            });
            Ok((lo, hi, viol))
        })
        .collect();
    let mut kappa = f64::INFINITY;
    let mut k = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for r in per_point {
        let (lo, hi, v) = r?;
        kappa = kappa.min(lo);
        k = k.max(hi);
        violations.extend(v);
    }
    Ok(SuperparabolicReport {
        kappa_est: kappa,
        k_est: k,
        violations,
    })
}

/// Coercivity constant `kappa / (1 + 2K)`.
pub fn mu0(kappa: f64, k: f64) -> Result<f64> {
    if !(kappa > 0.0) || !(k > 0.0) || kappa > k || !kappa.is_finite() || !k.is_finite() {
        return Err(Error::Argument(format!("need 0 < kappa <= K, got kappa = {kappa}, K = {k}")));
    }
    Ok(kappa / (1.0 + 2.0 * k))
}

/// `2 a p.p + 2 sigma p.r + |r|^2 - mu0 (|p|^2 + |r|^2)`.
pub fn coercivity_gap(a: &DMatrix<f64>, sigma: &DMatrix<f64>, p: &[f64], r: &[f64], mu0: f64) -> Result<f64> {
    let d = p.len();
    let d0 = r.len();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension {
            what: "a",
            expected: d,
            got: a.nrows(),
        });
    }
    if sigma.nrows() != d || sigma.ncols() != d0 {
        return Err(Error::Dimension {
            what: "sigma",
            expected: d * d0,
            got: sigma.nrows() * sigma.ncols(),
        });
    }
    let mut app = 0.0;
    let mut spr = 0.0;
    for i in 0..d {
        for j in 0..d {
            app += a[(i, j)] * p[i] * p[j];
        }
        for k in 0..d0 {
            spr += sigma[(i, k)] * p[i] * r[k];
        }
    }
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    Ok(2.0 * app + 2.0 * spr + rr - mu0 * (pp + rr))
}

/// Constants for the uniqueness argument.
#[derive(Clone)]
pub struct UniquenessAssumptions {
    pub m_bound: f64,
    pub l: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub l_sup: f64,
    pub k: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub big_lambda: f64,
    pub l_eps: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub a_const: f64,
    pub b_fn: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for UniquenessAssumptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UniquenessAssumptions")
            .field("m_bound", &self.m_bound)
            .field("l_sup", &self.l_sup)
            .field("big_lambda", &self.big_lambda)
            .field("a_const", &self.a_const)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct AssumptionCheck {
    pub samples: usize,
    pub growth_violations: usize,
    pub gradient_violations: usize,
    pub fu_violations: usize,
    pub monotone_violations: usize,
    pub worst_growth_excess: f64,
}

impl AssumptionCheck {
    /// Growth, gradient and `f_u` bounds all hold on the samples.
    pub fn growth_pass(&self) -> bool {
        self.growth_violations == 0 && self.gradient_violations == 0 && self.fu_violations == 0
    }

    /// The stricter one-sided condition `f_u + a |f_z|^2 <= b` holds too.
    pub fn strict_pass(&self) -> bool {
        self.growth_pass() && self.monotone_violations == 0
    }
}

const FD_STEP: f64 = 1e-5;

impl UniquenessAssumptions {
    /// Constants with `l`, `k`, `b` constant in time.
    pub fn constant(m_bound: f64, l: f64, k: f64, big_lambda: f64, a_const: f64, b: f64) -> Self {
        UniquenessAssumptions {
            m_bound,
            l: Arc::new(move |_| l),
            l_sup: l,
            k: Arc::new(move |_| k),
            big_lambda,
            l_eps: Arc::new(move |_, _| l),
            a_const,
            b_fn: Arc::new(move |_| b),
        }
    }

    /// Spot-check `|f| <= l + Lambda |z|^2`, `|f_z| <= k + Lambda |z|`,
    /// `|f_u| <= l_eps + eps |z|^2` and the one-sided condition
    /// `f_u + a |f_z|^2 <= b(t)` by sampling `|u| <= M`, `|z_i| <= z_scale`.
    pub fn check(&self, spec: &ProblemSpec, n_samples: usize, z_scale: f64, eps: f64, seed: u64) -> AssumptionCheck {
        let d = spec.d;
        let d0 = spec.d0;
        let pts = spec.sample_points(n_samples, seed);
        let rows: Vec<(bool, bool, bool, bool, f64)> = pts
            .par_iter()
            .enumerate()
            .map(|(i, (t, x, w))| {
                let mut g = rng::stream(rng::subseed(seed, 1), i as u64);
                let u = (2.0 * g.random::<f64>() - 1.0) * self.m_bound;
                let mut z: Vec<f64> = (0..d + d0).map(|_| (2.0 * g.random::<f64>() - 1.0) * z_scale).collect();
                let pt = Point::new(*t, x, *w);
                let eval = |u: f64, z: &[f64]| spec.f.eval(&pt, u, &z[..d], &z[d..]);
                let fv = eval(u, &z);
                let zz: f64 = z.iter().map(|v| v * v).sum();
                let growth_bound = (self.l)(*t) + self.big_lambda * zz;
                let growth_bad = fv.abs() > growth_bound * (1.0 + 1e-12) + 1e-12;
                let mut fz2 = 0.0;
                for j in 0..z.len() {
                    let z0 = z[j];
                    z[j] = z0 + FD_STEP;
                    let up = eval(u, &z);
                    z[j] = z0 - FD_STEP;
                    let dn = eval(u, &z);
                    z[j] = z0;
                    let dj = (up - dn) / (2.0 * FD_STEP);
                    fz2 += dj * dj;
                }
                let grad_bad = fz2.sqrt() > ((self.k)(*t) + self.big_lambda * zz.sqrt()) * (1.0 + 1e-6) + 1e-6;
                let fu = (eval(u + FD_STEP, &z) - eval(u - FD_STEP, &z)) / (2.0 * FD_STEP);
                let fu_bad = fu.abs() > (self.l_eps)(eps, *t) + eps * zz + 1e-6;
                let mono_bad = fu + self.a_const * fz2 > (self.b_fn)(*t) + 1e-6;
                (growth_bad, grad_bad, fu_bad, mono_bad, fv.abs() - growth_bound)
            })
            .collect();
        let mut out = AssumptionCheck {
            samples: n_samples,
            worst_growth_excess: f64::NEG_INFINITY,
            ..Default::default()
        };
        for (g, k, u, m, e) in rows {
            out.growth_violations += g as usize;
            out.gradient_violations += k as usize;
            out.fu_violations += u as usize;
            out.monotone_violations += m as usize;
            out.worst_growth_excess = out.worst_growth_excess.max(e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_spec(diag: &[f64]) -> ProblemSpec {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = diag[i];
        }
        ProblemSpec::new(d, 1, 1.0).with_a(const_matrix(a))
    }

    #[test]
    fn identity_coefficients_give_unit_constants() {
        let r = validate_superparabolic(&diag_spec(&[0.5]), 50, 1).unwrap();
        assert_eq!(r.kappa_est, 1.0);
        assert_eq!(r.k_est, 1.0);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn degenerate_noise_is_flagged_everywhere() {
        let spec = diag_spec(&[0.5]).with_sigma(const_matrix(vec![1.0]));
        let r = validate_superparabolic(&spec, 20, 3).unwrap();
        assert_eq!(r.violations.len(), 20);
    }

    #[test]
    fn diagonal_constants() {
        let spec = diag_spec(&[1.0, 0.5]);
        let r = validate_superparabolic(&spec, 30, 2).unwrap();
        assert!((r.kappa_est - 1.0).abs() < 1e-14);
        assert!((r.k_est - 2.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_a_is_structural_error() {
        let spec = ProblemSpec::new(2, 1, 1.0).with_a(const_matrix(vec![1.0, 0.1, 0.0, 1.0]));
        let err = validate_superparabolic(&spec, 5, 0).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
        assert!(spec.validate().is_err());
    }

    #[test]
    fn mu0_values_and_errors() {
        assert!((mu0(1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((mu0(1.0, 2.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((mu0(0.5, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(mu0(2.0, 1.0).is_err());
        assert!(mu0(0.0, 1.0).is_err());
        assert!(mu0(-1.0, 1.0).is_err());
    }

    #[test]
    fn coercivity_gap_hand_value() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let s = DMatrix::from_element(1, 1, 0.0);
        let g = coercivity_gap(&a, &s, &[1.0], &[1.0], 1.0 / 3.0).unwrap();
        assert!((g - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(coercivity_gap(&a, &s, &[0.0], &[0.0], 1.0 / 3.0).unwrap(), 0.0);
        assert!(coercivity_gap(&a, &s, &[1.0, 2.0], &[1.0], 0.1).is_err());
    }

    #[test]
    fn terminal_compatibility_is_checked() {
        let bad = ProblemSpec::new(1, 1, 1.0).with_terminal(scalar_fn(|_| 1.0));
        assert!(bad.validate().is_err());
        let good = ProblemSpec::new(1, 1, 1.0)
            .with_terminal(scalar_fn(|p| (std::f64::consts::PI * p.x[0]).sin().max(0.0) * (1.0 - p.x[0]) * p.x[0]));
        good.validate().unwrap();
    }

    #[test]
    fn envelope_validation() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let env = GrowthEnvelope::constant(1.0, 0.5, 2.0, 1.0, &spec.domain, 1.0);
        env.validate(&spec, 100, 1).unwrap();
        let mut bad = env.clone();
        bad.gamma = Arc::new(|s| -s);
        assert!(bad.validate(&spec, 10, 1).is_err());
        let mut bad = env;
        bad.lambda0_sup = 0.5;
        assert!(bad.validate(&spec, 10, 1).is_err());
    }

    #[test]
    fn uniqueness_spot_check() {
        let spec = ProblemSpec::new(1, 1, 1.0).with_driver(driver_fn(ArgMask::ALL, |_, _, p, r| 0.5 * (p[0] * p[0] + r[0] * r[0])));
        let ok = UniquenessAssumptions::constant(1.0, 0.0, 0.0, 1.0, 0.5, 1.0);
        let r = ok.check(&spec, 500, 10.0, 0.1, 9);
        assert!(r.growth_pass(), "{r:?}");
        assert!(r.monotone_violations > 0);
        let tight = UniquenessAssumptions::constant(1.0, 0.0, 0.0, 0.1, 0.5, 0.0);
        let r = tight.check(&spec, 500, 10.0, 0.1, 9);
        assert!(r.growth_violations > 0 && r.gradient_violations > 0);
        let lin = ProblemSpec::new(1, 1, 1.0).with_driver(driver_fn(ArgMask::ALL, |_, u, _, _| -u));
        let r = UniquenessAssumptions::constant(1.0, 1.0, 0.0, 1.0, 0.5, 0.0).check(&lin, 200, 1.0, 0.1, 1);
        assert!(r.strict_pass(), "{r:?}");
    }
}
