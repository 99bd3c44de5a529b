//! Named problems, the JSON problem description, and a catalog of
//! super-parabolic coefficient sets.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::ControlProblem;
use crate::error::{Error, Result};
use crate::spec::{
    const_matrix, driver_fn, matrix_fn, scalar_fn, zero_driver, ArgMask, BoxDomain, CoefficientMode, Driver, GrowthEnvelope, MatrixField, Point, ProblemSpec,
};
use crate::transforms::quad_form;

/// Product of `sin(k_i pi (x_i - lo_i)/(hi_i - lo_i))`.
fn sine_mode(domain: &BoxDomain, modes: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let k = modes.get(i).copied().unwrap_or(1.0);
            (k * PI * (xi - domain.lo[i]) / (domain.hi[i] - domain.lo[i])).sin()
        })
        .product()
}

/// `f = (lambda / 2)(2 a p.p + 2 sigma p.r + |r|^2)`; the `v = e^{lambda u} - 1`
/// equation has driver zero.
pub struct QuadraticDriver {
    pub lambda: f64,
    a: Arc<dyn MatrixField>,
    sigma: Arc<dyn MatrixField>,
    d: usize,
    d0: usize,
}

impl QuadraticDriver {
    pub fn new(lambda: f64, spec: &ProblemSpec) -> Self {
        QuadraticDriver {
            lambda,
            a: spec.a.clone(),
            sigma: spec.sigma.clone(),
            d: spec.d,
            d0: spec.d0,
        }
    }
}

impl Driver for QuadraticDriver {
    fn eval(&self, pt: &Point<'_>, _v: f64, p: &[f64], r: &[f64]) -> f64 {
        0.5 * self.lambda * quad_form(&*self.a, &*self.sigma, self.d, self.d0, pt, p, r)
    }
    fn args(&self) -> ArgMask {
        ArgMask { v: false, p: true, r: true }
    }
    fn exponentiated(&self, lambda: f64) -> Option<Arc<dyn Driver>> {
        (lambda == self.lambda).then(zero_driver)
    }
}

/// `f = g(t, x, v) + lambda (2 a p.p + 2 sigma p.r + |r|^2)`; at transform
/// parameter `2 lambda` the quadratic part cancels.
pub struct ShiftedQuadratic {
    pub lambda: f64,
    g: Arc<dyn Fn(&Point<'_>, f64) -> f64 + Send + Sync>,
    quad: QuadraticDriver,
}

impl Driver for ShiftedQuadratic {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        (self.g)(pt, v) + self.quad.eval(pt, v, p, r)
    }
    fn args(&self) -> ArgMask {
        ArgMask::ALL
    }
    fn exponentiated(&self, lambda: f64) -> Option<Arc<dyn Driver>> {
        if lambda != 2.0 * self.lambda {
            return None;
        }
        let g = self.g.clone();
        Some(driver_fn(ArgMask { v: true, p: false, r: false }, move |pt, v, _, _| {
            let w = v + 1.0;
            lambda * w * g(pt, w.ln() / lambda)
        }))
    }
}

/// A named problem with its reference resolution.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: ProblemSpec,
    pub nx: Vec<usize>,
    pub n_t: usize,
    pub n_w: usize,
    pub w_max: f64,
    /// Transform parameter used by the monotone scheme (the chain works
    /// with `e^{2 lambda u}`).
    pub chain_lambda: Option<f64>,
}

pub const PRESET_NAMES: [&str; 8] = [
    "heat_eigenmode",
    "heat_source",
    "cole_hopf",
    "lifted_linear_w",
    "lifted_coupled",
    "monotone_seq",
    "heat_2d",
    "control_markov",
];

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "heat_eigenmode" => Ok(heat_eigenmode(0.1)),
        "heat_source" => Ok(heat_source(1.0)),
        "cole_hopf" => Ok(cole_hopf(1.0, 0.5)),
        "lifted_linear_w" => Ok(lifted_linear_w()),
        "lifted_coupled" => Ok(lifted_coupled()),
        "monotone_seq" => Ok(monotone_seq(0.5)),
        "heat_2d" => Ok(heat_2d()),
        "control_markov" => Err(Error::Argument("control_markov is a control problem; use control_preset".into())),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "heat_eigenmode" => "a = 1/2, f = 0, phi = sin(pi x) on [0, 1], T = 0.1",
        "heat_source" => "a = 1/2, f = c, phi = 0 on [0, 1], T = 0.5",
        "cole_hopf" => "a = 1/2, f = (lambda/2)|u_x|^2, phi = 0.5 sin(pi x), T = 0.5",
        "lifted_linear_w" => "lifted noise, phi = w sin(pi x), f = 0, T = 0.5",
        "lifted_coupled" => "lifted noise with w-dependent sigma and a driver reading q",
        "monotone_seq" => "f = g(x, u) + lambda(|u_x|^2 + |q|^2) for the monotone scheme",
        "heat_2d" => "anisotropic a on the unit square, linear damping",
        "control_markov" => "one-dimensional controlled diffusion with a quadratic recursive cost",
        _ => return None,
    })
}

fn envelope(spec: &ProblemSpec, l0: f64, l1: f64, gamma: f64, lambda: f64) -> GrowthEnvelope {
    GrowthEnvelope::constant(l0, l1, gamma, lambda, &spec.domain, spec.horizon)
}

pub fn heat_eigenmode(horizon: f64) -> Preset {
    let spec = ProblemSpec::new(1, 1, horizon).with_terminal(scalar_fn(|p| (PI * p.x[0]).sin()));
    let env = envelope(&spec, 0.0, 0.0, 0.0, 0.0);
    Preset {
        name: "heat_eigenmode",
        description: describe("heat_eigenmode").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![101],
        n_t: 200,
        n_w: 1,
        w_max: 0.0,
        chain_lambda: None,
    }
}

pub fn heat_source(c: f64) -> Preset {
    let spec = ProblemSpec::new(1, 1, 0.5).with_driver(driver_fn(ArgMask::NONE, move |_, _, _, _| c));
    let env = envelope(&spec, c.abs(), 0.0, 0.0, 0.0);
    Preset {
        name: "heat_source",
        description: describe("heat_source").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![101],
        n_t: 100,
        n_w: 1,
        w_max: 0.0,
        chain_lambda: None,
    }
}

pub fn cole_hopf(lambda: f64, amplitude: f64) -> Preset {
    let base = ProblemSpec::new(1, 1, 0.5).with_terminal(scalar_fn(move |p| amplitude * (PI * p.x[0]).sin()));
    let f = Arc::new(QuadraticDriver::new(lambda, &base));
    let spec = base.with_driver(f);
    // a = 1/2 gives mu0 = 1/3 and |f| <= (lambda/2)(|p|^2 + |r|^2)
    let env = envelope(&spec, 0.0, 0.0, 0.5 * lambda, 1.5 * lambda);
    Preset {
        name: "cole_hopf",
        description: describe("cole_hopf").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![101],
        n_t: 400,
        n_w: 1,
        w_max: 0.0,
        chain_lambda: Some(0.5 * lambda),
    }
}

pub fn lifted_linear_w() -> Preset {
    let horizon = 0.5;
    let spec = ProblemSpec::new(1, 1, horizon)
        .with_mode(CoefficientMode::MarkovianLift)
        .with_terminal(scalar_fn(|p| p.w.unwrap_or(0.0) * (PI * p.x[0]).sin()));
    let env = envelope(&spec, 0.0, 0.0, 0.0, 0.0);
    Preset {
        name: "lifted_linear_w",
        description: describe("lifted_linear_w").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![41],
        n_t: 50,
        n_w: 81,
        w_max: 5.0 * horizon.sqrt(),
        chain_lambda: None,
    }
}

pub fn lifted_coupled() -> Preset {
    let horizon = 0.5;
    let spec = ProblemSpec::new(1, 1, horizon)
        .with_mode(CoefficientMode::MarkovianLift)
        .with_a(const_matrix(vec![0.6]))
        .with_sigma(matrix_fn(|p, out| out[0] = 0.3 * p.w.unwrap_or(0.0).cos()))
        .with_driver(driver_fn(ArgMask::ALL, |p, v, _, r| {
            0.3 * (PI * p.x[0]).sin() * p.w.unwrap_or(0.0).cos() - 0.5 * v + 0.2 * r[0]
        }))
        .with_terminal(scalar_fn(|p| (PI * p.x[0]).sin() * (1.0 + 0.5 * p.w.unwrap_or(0.0).tanh())));
    // 0.2|r| <= 0.1 + 0.1 |r|^2; kappa = 1.11, K = 1.2 give mu0 > 0.32
    let env = envelope(&spec, 0.4, 0.5, 0.1, 0.35);
    Preset {
        name: "lifted_coupled",
        description: describe("lifted_coupled").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![41],
        n_t: 50,
        n_w: 81,
        w_max: 5.0 * horizon.sqrt(),
        chain_lambda: None,
    }
}

pub fn monotone_seq(lambda: f64) -> Preset {
    let base = ProblemSpec::new(1, 1, 0.5).with_terminal(scalar_fn(|p| 0.5 * (PI * p.x[0]).sin()));
    let g: Arc<dyn Fn(&Point<'_>, f64) -> f64 + Send + Sync> = Arc::new(|p, u| 0.5 * (PI * p.x[0]).sin() * u.cos());
    // (lambda/2)(2 a p.p + |r|^2) * 2 = lambda (|p|^2 + |r|^2) for a = 1/2
    let quad = QuadraticDriver::new(2.0 * lambda, &base);
    let f = Arc::new(ShiftedQuadratic { lambda, g, quad });
    let spec = base.with_driver(f);
    let env = envelope(&spec, 0.5, 0.0, lambda, 3.0 * lambda);
    Preset {
        name: "monotone_seq",
        description: describe("monotone_seq").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![41],
        n_t: 50,
        n_w: 1,
        w_max: 0.0,
        chain_lambda: Some(lambda),
    }
}

pub fn heat_2d() -> Preset {
    let spec = ProblemSpec::new(2, 1, 0.2)
        .with_a(const_matrix(vec![0.5, 0.1, 0.1, 0.4]))
        .with_driver(driver_fn(ArgMask { v: true, p: false, r: false }, |_, v, _, _| -0.3 * v))
        .with_terminal(scalar_fn(|p| (PI * p.x[0]).sin() * (PI * p.x[1]).sin()));
    let env = envelope(&spec, 0.0, 0.3, 0.0, 0.0);
    Preset {
        name: "heat_2d",
        description: describe("heat_2d").unwrap(),
        spec: spec.with_envelope(env),
        nx: vec![31, 31],
        n_t: 40,
        n_w: 1,
        w_max: 0.0,
        chain_lambda: None,
    }
}

/// Bump `(1 + cos(pi x / 3)) / 2` on `[-3, 3]`, zero outside.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 3.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * x / 3.0).cos())
    }
}

/// Parameters of the control preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub drift: f64,
    pub sigma: f64,
    pub pi: f64,
    pub control_cost: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            drift: 0.5,
            sigma: 0.4,
            pi: 0.3,
            control_cost: 0.1,
            gamma: 0.25,
            rho: 0.1,
        }
    }
}

/// `dX = v drift dt + sigma dW + pi dB` on `[-3, 3]`, `T = 1`, `V = {-1, 0, 1}`,
/// `f = h(x) + c|v| + gamma(z~^2 + z-^2) - rho y`, `h = phi = bump`.
pub fn control_markov(params: ControlParams, controls: Vec<f64>) -> ControlProblem {
    let ControlParams {
        drift,
        sigma,
        pi,
        control_cost,
        gamma,
        rho,
    } = params;
    let vmax = controls.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ControlProblem {
        state_dim: 1,
        horizon: 1.0,
        domain: (-3.0, 3.0),
        b: Arc::new(move |_, _, v| v * drift),
        sigma_w: Arc::new(move |_, _| sigma),
        pi_b: Arc::new(move |_, _| pi),
        f: Arc::new(move |_, x, y, zt, zb, v| bump(x) + control_cost * v.abs() + gamma * (zt * zt + zb * zb) - rho * y),
        phi: Arc::new(bump),
        controls,
        lipschitz: drift.abs().max(1e-12),
        coeff_bound: (drift.abs() * vmax).max(sigma.abs()).max(pi.abs()),
        lambda0: 1.0 + control_cost * vmax,
        lambda1: rho.abs(),
        gamma,
        exp_lambda: Some(2.0 * gamma),
        constant_diffusion: true,
    }
}

pub fn control_preset(name: &str) -> Result<ControlProblem> {
    match name {
        "control_markov" => Ok(control_markov(ControlParams::default(), vec![-1.0, 0.0, 1.0])),
        other if PRESET_NAMES.contains(&other) => Err(Error::Argument(format!("{other} is not a control problem"))),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// One super-parabolic coefficient set with analytic `kappa` and `K`.
#[derive(Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub spec: ProblemSpec,
    pub kappa: f64,
    pub k: f64,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("name", &self.name)
            .field("kappa", &self.kappa)
            .field("k", &self.k)
            .finish()
    }
}

fn entry(name: &'static str, d: usize, d0: usize, a: Arc<dyn MatrixField>, sigma: Arc<dyn MatrixField>, kappa: f64, k: f64) -> CatalogEntry {
    CatalogEntry {
        name,
        spec: ProblemSpec::new(d, d0, 1.0).with_a(a).with_sigma(sigma),
        kappa,
        k,
    }
}

/// Ten coefficient sets `(a, sigma)`; `kappa` and `K` are exact for
/// `kappa I + sigma sigma^T <= 2a <= K I` over the unit box and `t in [0, 1]`.
pub fn coefficient_catalog() -> Vec<CatalogEntry> {
    vec![
        entry("half_identity_1d", 1, 1, const_matrix(vec![0.5]), const_matrix(vec![0.0]), 1.0, 1.0),
        entry("constant_sigma_1d", 1, 1, const_matrix(vec![0.5]), const_matrix(vec![0.6]), 0.64, 1.0),
        entry(
            "variable_a_1d",
            1,
            1,
            matrix_fn(|p, out| out[0] = 0.5 + 0.25 * (2.0 * PI * p.x[0]).sin()),
            const_matrix(vec![0.3]),
            0.41,
            1.5,
        ),
        entry(
            "time_dependent_1d",
            1,
            1,
            matrix_fn(|p, out| out[0] = 0.75 + 0.25 * p.t),
            matrix_fn(|p, out| out[0] = 0.5 * p.t),
            1.5,
            2.0,
        ),
        entry("two_noises_1d", 1, 2, const_matrix(vec![0.7]), const_matrix(vec![0.4, 0.5]), 0.99, 1.4),
        entry("isotropic_2d", 2, 1, const_matrix(vec![0.5, 0.0, 0.0, 0.5]), const_matrix(vec![0.0, 0.0]), 1.0, 1.0),
        entry("anisotropic_2d", 2, 1, const_matrix(vec![0.5, 0.1, 0.1, 0.4]), const_matrix(vec![0.3, 0.2]), {
            // 2a - s s^T = [[0.91, 0.14], [0.14, 0.76]]
            let (tr, det): (f64, f64) = (0.91 + 0.76, 0.91 * 0.76 - 0.14 * 0.14);
            0.5 * (tr - (tr * tr - 4.0 * det).sqrt())
        }, {
            // 2a = [[1.0, 0.2], [0.2, 0.8]]
            let (tr, det): (f64, f64) = (1.8, 0.8 - 0.04);
            0.5 * (tr + (tr * tr - 4.0 * det).sqrt())
        }),
        entry(
            "rotating_2d",
            2,
            1,
            matrix_fn(|p, out| {
                let (c, s) = ((PI * p.x[0]).cos(), (PI * p.x[0]).sin());
                // R diag(0.8, 0.4) R^T
                out[0] = 0.8 * c * c + 0.4 * s * s;
                out[1] = 0.4 * c * s;
                out[2] = out[1];
                out[3] = 0.8 * s * s + 0.4 * c * c;
            }),
            const_matrix(vec![0.0, 0.0]),
            0.8,
            1.6,
        ),
        entry(
            "diagonal_noise_2d",
            2,
            2,
            const_matrix(vec![0.6, 0.0, 0.0, 0.9]),
            const_matrix(vec![0.5, 0.0, 0.0, 0.7]),
            0.95,
            1.8,
        ),
        entry(
            "space_time_sigma_2d",
            2,
            1,
            const_matrix(vec![0.75, 0.0, 0.0, 0.75]),
            matrix_fn(|p, out| {
                out[0] = 0.5 * p.x[0] * p.t;
                out[1] = 0.5 * p.x[1] * p.t;
            }),
            // sigma sigma^T has eigenvalues 0 and |sigma|^2 <= 0.5
            1.0,
            1.5,
        ),
    ]
}

/// Matrix coefficient in a problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixForm {
    /// Row-major entries.
    Constant(Vec<f64>),
    ScaledIdentity(f64),
    Zero,
}

impl MatrixForm {
    fn build(&self, rows: usize, cols: usize) -> Result<Arc<dyn MatrixField>> {
        Ok(match self {
            MatrixForm::Constant(v) => {
                if v.len() != rows * cols {
                    return Err(Error::Dimension {
                        what: "matrix coefficient",
                        expected: rows * cols,
                        got: v.len(),
                    });
                }
                const_matrix(v.clone())
            }
            MatrixForm::ScaledIdentity(c) => {
                let mut v = vec![0.0; rows * cols];
                for i in 0..rows.min(cols) {
                    v[i * cols + i] = *c;
                }
                const_matrix(v)
            }
            MatrixForm::Zero => const_matrix(vec![0.0; rows * cols]),
        })
    }
}

/// Driver in a problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverForm {
    Zero,
    Constant(f64),
    /// `c0 + cv v + cp.p + cr.r`.
    Linear {
        c0: f64,
        cv: f64,
        #[serde(default)]
        cp: Vec<f64>,
        #[serde(default)]
        cr: Vec<f64>,
    },
    /// `(lambda / 2)(2 a p.p + 2 sigma p.r + |r|^2)`.
    Quadratic { lambda: f64 },
}

/// Terminal condition in a problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalForm {
    Zero,
    /// `amplitude * prod sin(k_i pi x_i)` on the box, times `w` when `w_linear`.
    SineMode {
        amplitude: f64,
        #[serde(default)]
        modes: Vec<f64>,
        #[serde(default)]
        w_linear: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDoc {
    pub lambda0: f64,
    pub lambda1: f64,
    pub gamma: f64,
    pub lambda: f64,
}

/// JSON description of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub d: usize,
    #[serde(default = "one")]
    pub d0: usize,
    pub horizon: f64,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
    #[serde(default = "half_identity")]
    pub a: MatrixForm,
    #[serde(default = "zero_matrix")]
    pub sigma: MatrixForm,
    #[serde(default = "zero_form")]
    pub f: DriverForm,
    #[serde(default = "zero_terminal")]
    pub phi: TerminalForm,
    #[serde(default = "deterministic")]
    pub mode: CoefficientMode,
    #[serde(default)]
    pub envelope: Option<EnvelopeDoc>,
}

fn one() -> usize {
    1
}
fn half_identity() -> MatrixForm {
    MatrixForm::ScaledIdentity(0.5)
}
fn zero_matrix() -> MatrixForm {
    MatrixForm::Zero
}
fn zero_form() -> DriverForm {
    DriverForm::Zero
}
fn zero_terminal() -> TerminalForm {
    TerminalForm::Zero
}
fn deterministic() -> CoefficientMode {
    CoefficientMode::Deterministic
}

impl ProblemDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let (d, d0) = (self.d, self.d0);
        if d == 0 || d0 == 0 {
            return Err(Error::Structural("d and d0 must be positive".into()));
        }
        let domain = BoxDomain {
            lo: self.lo.clone().unwrap_or_else(|| vec![0.0; d]),
            hi: self.hi.clone().unwrap_or_else(|| vec![1.0; d]),
        };
        let mut spec = ProblemSpec::new(d, d0, self.horizon)
            .with_domain(domain.clone())
            .with_mode(self.mode)
            .with_a(self.a.build(d, d)?)
            .with_sigma(self.sigma.build(d, d0)?);
        spec.f = match &self.f {
            DriverForm::Zero => zero_driver(),
            DriverForm::Constant(c) => {
                let c = *c;
                driver_fn(ArgMask::NONE, move |_, _, _, _| c)
            }
            DriverForm::Linear { c0, cv, cp, cr } => {
                let (c0, cv) = (*c0, *cv);
                let cp = if cp.is_empty() { vec![0.0; d] } else { cp.clone() };
                let cr = if cr.is_empty() { vec![0.0; d0] } else { cr.clone() };
                if cp.len() != d || cr.len() != d0 {
                    return Err(Error::Dimension {
                        what: "linear driver coefficients",
                        expected: d + d0,
                        got: cp.len() + cr.len(),
                    });
                }
                let mask = ArgMask {
                    v: cv != 0.0,
                    p: cp.iter().any(|&c| c != 0.0),
                    r: cr.iter().any(|&c| c != 0.0),
                };
                driver_fn(mask, move |_, v, p, r| {
                    c0 + cv * v + cp.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + cr.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()
                })
            }
            DriverForm::Quadratic { lambda } => Arc::new(QuadraticDriver::new(*lambda, &spec)),
        };
        spec.phi = match &self.phi {
            TerminalForm::Zero => scalar_fn(|_| 0.0),
            TerminalForm::SineMode { amplitude, modes, w_linear } => {
                let (amp, modes, wl) = (*amplitude, modes.clone(), *w_linear);
                scalar_fn(move |p| {
                    let base = amp * sine_mode(&domain, &modes, p.x);
                    if wl {
                        base * p.w.unwrap_or(0.0)
                    } else {
                        base
                    }
                })
            }
        };
        if let Some(e) = &self.envelope {
            let env = GrowthEnvelope::constant(e.lambda0, e.lambda1, e.gamma, e.lambda, &spec.domain, spec.horizon);
            spec = spec.with_envelope(env);
        }
        spec.validate()?;
        Ok(spec)
    }
}
