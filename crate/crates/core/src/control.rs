//! Stochastic control with a recursive cost given by a quadratic BSDE:
//! controlled diffusion, least-squares Monte Carlo cost, brute-force dynamic
//! programming over binned states, the dynamic programming check, and the
//! HJB equation solved as a semilinear terminal-value problem.
//!
//! Only one-dimensional states are supported.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridStack, SolutionField};
use crate::linalg::least_squares;
use crate::rng;
use crate::solver::{solve_deterministic, SolverConfig};
use crate::spec::{const_matrix, driver_fn, scalar_fn, ArgMask, BoxDomain, ProblemSpec};

pub type Drift = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type Diffusion = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `f(t, x, y, z~, z-, v)`.
pub type CostDriver = Arc<dyn Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type Terminal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `dX = b(t, X, v) dt + sigma(t, X) dW + pi(t, X) dB`, cost
/// `dY = -f(t, X, Y, Z~, Z-, v) dt + Z~ dW + Z- dB`, `Y_T = phi(X_T)`.
#[derive(Clone)]
pub struct ControlProblem {
    pub state_dim: usize,
    pub horizon: f64,
    /// State window used for bins and the HJB domain.
    pub domain: (f64, f64),
    pub b: Drift,
    pub sigma_w: Diffusion,
    pub pi_b: Diffusion,
    pub f: CostDriver,
    pub phi: Terminal,
    pub controls: Vec<f64>,
    /// Declared Lipschitz constant of `b`, `sigma`, `pi`.
    pub lipschitz: f64,
    /// Declared bound on `|b|`, `|sigma|`, `|pi|`.
    pub coeff_bound: f64,
    /// Envelope of the cost driver: `|f| <= lambda0 + lambda1 |y| + gamma |z|^2`.
    pub lambda0: f64,
    pub lambda1: f64,
    pub gamma: f64,
    /// Exponential pre-transform parameter for the cost BSDE, if any.
    pub exp_lambda: Option<f64>,
    /// True when `sigma` and `pi` are constants, which the HJB solve needs.
    pub constant_diffusion: bool,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.state_dim)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("controls", &self.controls)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ControlValidation {
    pub samples: usize,
    pub bound_violations: usize,
    pub lipschitz_violations: usize,
}

impl ControlValidation {
    pub fn pass(&self) -> bool {
        self.bound_violations == 0 && self.lipschitz_violations == 0
    }
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim != 1 {
            return Err(Error::Structural(format!("only one-dimensional states are supported, got n = {}", self.state_dim)));
        }
        if self.controls.is_empty() {
            return Err(Error::Structural("control set is empty".into()));
        }
        if !(self.horizon > 0.0) || !(self.domain.1 > self.domain.0) {
            return Err(Error::Structural("need T > 0 and a nonempty state window".into()));
        }
        Ok(())
    }

    /// Sample (A1)-(A2): bounds and Lipschitz ratios of `b`, `sigma`, `pi`.
    pub fn check_coefficients(&self, n: usize, seed: u64) -> ControlValidation {
        use rand::Rng as _;
        let mut g = rng::stream(rng::subseed(seed, 11), 0);
        let (lo, hi) = self.domain;
        let mut out = ControlValidation {
            samples: n,
            ..Default::default()
        };
        let tol = 1e-12;
        for _ in 0..n {
            let t = g.random::<f64>() * self.horizon;
            let x = lo + (hi - lo) * g.random::<f64>();
            let x2 = lo + (hi - lo) * g.random::<f64>();
            let v = self.controls[g.random_range(0..self.controls.len())];
            let v2 = self.controls[g.random_range(0..self.controls.len())];
            let b = (self.b)(t, x, v);
            let s = (self.sigma_w)(t, x);
            let p = (self.pi_b)(t, x);
            if b.abs().max(s.abs()).max(p.abs()) > self.coeff_bound + tol {
                out.bound_violations += 1;
            }
            let lhs = (b - (self.b)(t, x2, v2)).abs() + (s - (self.sigma_w)(t, x2)).abs() + (p - (self.pi_b)(t, x2)).abs();
            if lhs > self.lipschitz * ((x - x2).abs() + (v - v2).abs()) + tol {
                out.lipschitz_violations += 1;
            }
        }
        out
    }

    /// Closed-form sup bound for the value at time `t`.
    pub fn value_bound(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain;
        let phi_sup = (0..=200)
            .map(|i| (self.phi)(lo + (hi - lo) * i as f64 / 200.0).abs())
            .fold(0.0, f64::max);
        crate::estimates::linf_bound(t, self.lambda0, self.lambda1, phi_sup, self.horizon)
    }
}

/// Uniform cells over the state window; values live at cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateBins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl StateBins {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn index(&self, x: f64) -> usize {
        (((x - self.lo) / self.width()).floor().max(0.0) as usize).min(self.n - 1)
    }

    /// Piecewise-linear interpolation of cell-centre values, constant beyond
    /// the outer centres.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let s = (x - self.lo) / self.width() - 0.5;
        if s <= 0.0 {
            return values[0];
        }
        let i = s.floor() as usize;
        if i + 1 >= self.n {
            return values[self.n - 1];
        }
        let w = s - i as f64;
        (1.0 - w) * values[i] + w * values[i + 1]
    }
}

/// Feedback policy, constant on each of `n_t` time intervals of `[0, T]` and
/// on each state cell; entries index the control set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPolicy {
    pub n_t: usize,
    pub bins: StateBins,
    pub table: Vec<usize>,
}

impl ControlPolicy {
    pub fn constant(n_t: usize, bins: StateBins, index: usize) -> Self {
        ControlPolicy {
            n_t,
            bins,
            table: vec![index; n_t * bins.n],
        }
    }

    pub fn lookup(&self, t: f64, horizon: f64, x: f64) -> usize {
        let k = ((t / horizon * self.n_t as f64 + 1e-9).floor() as usize).min(self.n_t - 1);
        self.table[k * self.bins.n + self.bins.index(x)]
    }
}

/// Euler paths with the Wiener increments that drove them and the control
/// index applied on each step.
#[derive(Debug, Clone)]
pub struct StatePaths {
    pub n_paths: usize,
    pub n_steps: usize,
    pub t0: f64,
    pub dt: f64,
    /// `n_paths * (n_steps + 1)`, path-major.
    pub x: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub control: Vec<usize>,
}

impl StatePaths {
    pub fn x_at(&self, path: usize, k: usize) -> f64 {
        self.x[path * (self.n_steps + 1) + k]
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    fn step(&self, path: usize, k: usize) -> usize {
        path * self.n_steps + k
    }
}

/// How controls are chosen along a path.
#[derive(Clone, Copy)]
pub enum Steering<'a> {
    Policy(&'a ControlPolicy),
    Fixed(usize),
}

fn simulate(prob: &ControlProblem, steer: Steering<'_>, t0: f64, t1: f64, x0: f64, n_paths: usize, n_steps: usize, seed: u64) -> StatePaths {
    let dt = (t1 - t0) / n_steps as f64;
    let sq = dt.sqrt();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut g = rng::stream(seed, p as u64);
            let mut x = Vec::with_capacity(n_steps + 1);
            let mut dw = Vec::with_capacity(n_steps);
            let mut db = Vec::with_capacity(n_steps);
            let mut ctl = Vec::with_capacity(n_steps);
            let mut xc = x0;
            x.push(xc);
            for k in 0..n_steps {
                let t = t0 + k as f64 * dt;
                let ci = match steer {
                    Steering::Policy(pol) => pol.lookup(t, prob.horizon, xc),
                    Steering::Fixed(i) => i,
                };
                let v = prob.controls[ci];
                let a: f64 = StandardNormal.sample(&mut g);
                let c: f64 = StandardNormal.sample(&mut g);
                let (w, bb) = (a * sq, c * sq);
                xc += (prob.b)(t, xc, v) * dt + (prob.sigma_w)(t, xc) * w + (prob.pi_b)(t, xc) * bb;
                x.push(xc);
                dw.push(w);
                db.push(bb);
                ctl.push(ci);
            }
            (x, dw, db, ctl)
        })
        .collect();
    let mut out = StatePaths {
        n_paths,
        n_steps,
        t0,
        dt,
        x: Vec::with_capacity(n_paths * (n_steps + 1)),
        dw: Vec::with_capacity(n_paths * n_steps),
        db: Vec::with_capacity(n_paths * n_steps),
        control: Vec::with_capacity(n_paths * n_steps),
    };
    for (x, dw, db, c) in rows {
        out.x.extend(x);
        out.dw.extend(dw);
        out.db.extend(db);
        out.control.extend(c);
    }
    out
}

/// Euler-Maruyama paths on `[t0, T]` under a feedback policy.
pub fn simulate_sde(prob: &ControlProblem, policy: &ControlPolicy, t0: f64, x0: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<StatePaths> {
    prob.validate()?;
    if !(0.0..=prob.horizon).contains(&t0) || n_steps == 0 {
        return Err(Error::Argument(format!("need t0 in [0, T] and at least one step; got t0 = {t0}, steps = {n_steps}")));
    }
    Ok(simulate(prob, Steering::Policy(policy), t0, prob.horizon, x0, n_paths, n_steps, seed))
}

/// Standardized monomials `((x - mean)/sd)^j`, `j <= degree`; degree 0 when
/// the sample is constant.
fn design(xs: &[f64], degree: usize) -> DMatrix<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let deg = if hi - lo <= 1e-12 * (1.0 + mean.abs()) { 0 } else { degree };
    DMatrix::from_fn(xs.len(), deg + 1, |i, j| if j == 0 { 1.0 } else { ((xs[i] - mean) / sd).powi(j as i32) })
}

fn project(basis: &DMatrix<f64>, y: &[f64], step: usize) -> Result<Vec<f64>> {
    let yv = DVector::from_column_slice(y);
    let coef = least_squares(basis, &yv).ok_or(Error::RankDeficient { step })?;
    Ok((basis * coef).iter().copied().collect())
}

/// Settings for the least-squares Monte Carlo cost solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsmcConfig {
    pub degree: usize,
    /// Solve for `P = e^{lambda Y} - 1` instead of `Y`.
    pub exp_lambda: Option<f64>,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        LsmcConfig {
            degree: 3,
            exp_lambda: None,
        }
    }
}

/// Driver of `P = e^{lambda Y} - 1`: `lambda (P+1) f(ln(P+1)/lambda, R/(lambda(P+1))) - |R|^2 / (2(P+1))`.
fn exp_driver(f: &CostDriver, lambda: f64, t: f64, x: f64, p: f64, rt: f64, rb: f64, v: f64) -> f64 {
    let w = p + 1.0;
    lambda * w * f(t, x, w.ln() / lambda, rt / (lambda * w), rb / (lambda * w), v) - (rt * rt + rb * rb) / (2.0 * w)
}

/// Backward regression solve of the cost BSDE along `paths` with terminal
/// values `terminal` (one per path). Returns `Y` at every step, path-major.
pub fn solve_cost_bsde_with(prob: &ControlProblem, paths: &StatePaths, terminal: &[f64], cfg: &LsmcConfig) -> Result<Vec<f64>> {
    let np = paths.n_paths;
    if np == 0 {
        return Err(Error::EmptySamples);
    }
    let ns = paths.n_steps;
    let dt = paths.dt;
    let lambda = cfg.exp_lambda;
    if let Some(l) = lambda {
        if !(l > 0.0) {
            return Err(Error::Argument(format!("transform parameter must be positive, got {l}")));
        }
        if terminal.iter().any(|&y| (l * y).abs() > crate::transforms::EXP_GUARD) {
            return Err(Error::Range("terminal values overflow the exponential transform".into()));
        }
    }
    let mut y = vec![0.0; np * (ns + 1)];
    let mut next: Vec<f64> = match lambda {
        Some(l) => terminal.iter().map(|&v| (l * v).exp_m1()).collect(),
        None => terminal.to_vec(),
    };
    let store = |y: &mut Vec<f64>, k: usize, vals: &[f64]| {
        for (p, &v) in vals.iter().enumerate() {
            y[p * (ns + 1) + k] = match lambda {
                Some(l) => (1.0 + v).max(f64::MIN_POSITIVE).ln() / l,
                None => v,
            };
        }
    };
    store(&mut y, ns, &next);
    for k in (0..ns).rev() {
        let xs: Vec<f64> = (0..np).map(|p| paths.x_at(p, k)).collect();
        let basis = design(&xs, cfg.degree);
        let cond = project(&basis, &next, k)?;
        let resid: Vec<f64> = next.iter().zip(&cond).map(|(a, b)| a - b).collect();
        let yw: Vec<f64> = (0..np).map(|p| resid[p] * paths.dw[paths.step(p, k)] / dt).collect();
        let yb: Vec<f64> = (0..np).map(|p| resid[p] * paths.db[paths.step(p, k)] / dt).collect();
        let zt = project(&basis, &yw, k)?;
        let zb = project(&basis, &yb, k)?;
        let t = paths.t(k);
        let eval = |p: usize, ystar: f64| {
            let v = prob.controls[paths.control[paths.step(p, k)]];
            match lambda {
                Some(l) => exp_driver(&prob.f, l, t, xs[p], ystar, zt[p], zb[p], v),
                None => (prob.f)(t, xs[p], ystar, zt[p], zb[p], v),
            }
        };
        let mut cur: Vec<f64> = (0..np).map(|p| cond[p] + eval(p, cond[p]) * dt).collect();
        for p in 0..np {
            cur[p] = cond[p] + eval(p, cur[p]) * dt;
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { level: k });
        }
        if lambda.is_some() && cur.iter().any(|&v| v <= -1.0) {
            return Err(Error::Domain {
                index: k,
                msg: "transformed cost left (-1, inf)".into(),
            });
        }
        store(&mut y, k, &cur);
        next = cur;
    }
    Ok(y)
}

/// Cost BSDE along simulated paths with terminal `phi(X_T)`.
pub fn solve_cost_bsde(prob: &ControlProblem, paths: &StatePaths, cfg: &LsmcConfig) -> Result<Vec<f64>> {
    let terminal: Vec<f64> = (0..paths.n_paths).map(|p| (prob.phi)(paths.x_at(p, paths.n_steps))).collect();
    solve_cost_bsde_with(prob, paths, &terminal, cfg)
}

fn mean_at_start(y: &[f64], paths: &StatePaths) -> f64 {
    (0..paths.n_paths).map(|p| y[p * (paths.n_steps + 1)]).sum::<f64>() / paths.n_paths as f64
}

/// `J(t0, x0; policy)`: the regression value of `Y` at `t0`.
pub fn cost_functional(prob: &ControlProblem, policy: &ControlPolicy, t0: f64, x0: f64, n_paths: usize, n_steps: usize, seed: u64, cfg: &LsmcConfig) -> Result<f64> {
    let paths = simulate_sde(prob, policy, t0, x0, n_paths, n_steps, seed)?;
    let y = solve_cost_bsde(prob, &paths, cfg)?;
    Ok(mean_at_start(&y, &paths))
}

/// `G[eta]`: the cost BSDE on `[t, t + delta]` from `x` under the constant
/// control `controls[v_index]`, with terminal `eta(X_{t+delta})`.
#[allow(clippy::too_many_arguments)]
pub fn backward_semigroup(prob: &ControlProblem, v_index: usize, t: f64, delta: f64, x: f64, eta: &dyn Fn(f64) -> f64, n_paths: usize, substeps: usize, seed: u64, cfg: &LsmcConfig) -> Result<f64> {
    prob.validate()?;
    if v_index >= prob.controls.len() {
        return Err(Error::Argument(format!("control index {v_index} out of range")));
    }
    if !(delta >= 0.0) || t + delta > prob.horizon * (1.0 + 1e-12) {
        return Err(Error::Argument(format!("need 0 <= delta <= T - t; got t = {t}, delta = {delta}")));
    }
    if delta == 0.0 {
        return Ok(eta(x));
    }
    let paths = simulate(prob, Steering::Fixed(v_index), t, t + delta, x, n_paths, substeps.max(1), seed);
    let terminal: Vec<f64> = (0..n_paths).map(|p| eta(paths.x_at(p, paths.n_steps))).collect();
    let y = solve_cost_bsde_with(prob, &paths, &terminal, cfg)?;
    Ok(mean_at_start(&y, &paths))
}

/// Largest brute-force problem accepted.
pub const MAX_CONTROLS: usize = 5;
pub const MAX_STEPS: usize = 20;
pub const MAX_BINS: usize = 50;

/// Value table from backward dynamic programming: `values[k][i]` at time
/// `t_k` and cell centre `i`, with the minimizing policy.
#[derive(Debug, Clone, Serialize)]
pub struct DpTable {
    pub n_t: usize,
    pub dt: f64,
    pub bins: StateBins,
    pub values: Vec<Vec<f64>>,
    pub policy: ControlPolicy,
}

impl DpTable {
    pub fn value(&self, k: usize, x: f64) -> f64 {
        self.bins.interpolate(&self.values[k], x)
    }
}

/// One-step semigroup from `x` over `dt` with shared normals `(a, c)`.
#[allow(clippy::too_many_arguments)]
fn one_step(prob: &ControlProblem, t: f64, dt: f64, x: f64, v: f64, normals: &[(f64, f64)], eta: &dyn Fn(f64) -> f64) -> f64 {
    let sq = dt.sqrt();
    let n = normals.len() as f64;
    let b = (prob.b)(t, x, v);
    let s = (prob.sigma_w)(t, x);
    let p = (prob.pi_b)(t, x);
    let vals: Vec<(f64, f64, f64)> = normals
        .iter()
        .map(|&(a, c)| {
            let (dw, db) = (a * sq, c * sq);
            (eta(x + b * dt + s * dw + p * db), dw, db)
        })
        .collect();
    let mean = vals.iter().map(|r| r.0).sum::<f64>() / n;
    let zt = vals.iter().map(|r| (r.0 - mean) * r.1).sum::<f64>() / (n * dt);
    let zb = vals.iter().map(|r| (r.0 - mean) * r.2).sum::<f64>() / (n * dt);
    let y0 = mean + (prob.f)(t, x, mean, zt, zb, v) * dt;
    mean + (prob.f)(t, x, y0, zt, zb, v) * dt
}

/// Backward dynamic programming over binned states and the finite control
/// set, using common random numbers within each step.
pub fn dp_solve(prob: &ControlProblem, n_t: usize, n_bins: usize, n_paths: usize, seed: u64) -> Result<DpTable> {
    prob.validate()?;
    if prob.controls.len() > MAX_CONTROLS || n_t > MAX_STEPS || n_bins > MAX_BINS {
        return Err(Error::Scale(format!(
            "|V| = {}, n_t = {n_t}, bins = {n_bins}; limits are {MAX_CONTROLS}, {MAX_STEPS}, {MAX_BINS}",
            prob.controls.len()
        )));
    }
    if n_t == 0 || n_bins < 2 || n_paths == 0 {
        return Err(Error::Argument("need n_t >= 1, at least two bins and one path".into()));
    }
    let bins = StateBins {
        lo: prob.domain.0,
        hi: prob.domain.1,
        n: n_bins,
    };
    let dt = prob.horizon / n_t as f64;
    let mut values = vec![Vec::new(); n_t + 1];
    values[n_t] = (0..n_bins).map(|i| (prob.phi)(bins.center(i))).collect();
    let mut table = vec![0; n_t * n_bins];
    for k in (0..n_t).rev() {
        let mut g = rng::stream(rng::subseed(seed, 21), k as u64);
        let normals: Vec<(f64, f64)> = (0..n_paths)
            .map(|_| (StandardNormal.sample(&mut g), StandardNormal.sample(&mut g)))
            .collect();
        let later = values[k + 1].clone();
        let eta = |x: f64| bins.interpolate(&later, x);
        let t = k as f64 * dt;
        let best: Vec<(f64, usize)> = (0..n_bins)
            .into_par_iter()
            .map(|i| {
                let x = bins.center(i);
                let mut best = (f64::INFINITY, 0);
                for (ci, &v) in prob.controls.iter().enumerate() {
                    let val = one_step(prob, t, dt, x, v, &normals, &eta);
                    if val < best.0 {
                        best = (val, ci);
                    }
                }
                best
            })
            .collect();
        values[k] = best.iter().map(|b| b.0).collect();
        for (i, b) in best.iter().enumerate() {
            table[k * n_bins + i] = b.1;
        }
    }
    Ok(DpTable {
        n_t,
        dt,
        bins,
        values,
        policy: ControlPolicy { n_t, bins, table },
    })
}

/// Brute-force value at `(t0, x0)`; `t0` must be a DP time level.
pub fn value_bruteforce(prob: &ControlProblem, t0: f64, x0: f64, n_t: usize, n_bins: usize, n_paths: usize, seed: u64) -> Result<f64> {
    let table = dp_solve(prob, n_t, n_bins, n_paths, seed)?;
    let s = t0 / table.dt;
    let k = s.round();
    if (s - k).abs() > 1e-9 || k < 0.0 || k as usize > n_t {
        return Err(Error::Argument(format!("t0 = {t0} is not a time level of the dynamic programming grid")));
    }
    Ok(table.value(k as usize, x0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DppReport {
    pub lhs: f64,
    pub rhs: f64,
    pub per_control: Vec<f64>,
    /// `|lhs - rhs| / max(1, |lhs|)`.
    pub defect: f64,
}

/// Compare the table value at `(t_k, x)` with the minimum over constant
/// controls of the semigroup applied to the table at `t_{k + steps}`,
/// computed from fresh paths with `substeps` Euler steps per DP step.
#[allow(clippy::too_many_arguments)]
pub fn dpp_check(prob: &ControlProblem, table: &DpTable, k: usize, steps: usize, x: f64, n_paths: usize, substeps: usize, seed: u64, cfg: &LsmcConfig) -> Result<DppReport> {
    if k + steps > table.n_t {
        return Err(Error::Argument(format!("level {k} + {steps} beyond the table")));
    }
    let lhs = table.value(k, x);
    if steps == 0 {
        return Ok(DppReport {
            lhs,
            rhs: lhs,
            per_control: vec![lhs; prob.controls.len()],
            defect: 0.0,
        });
    }
    let later = &table.values[k + steps];
    let eta = |y: f64| table.bins.interpolate(later, y);
    let t = k as f64 * table.dt;
    let delta = steps as f64 * table.dt;
    let per_control: Vec<f64> = (0..prob.controls.len())
        .map(|ci| backward_semigroup(prob, ci, t, delta, x, &eta, n_paths, substeps * steps, rng::subseed(seed, 31 + ci as u64), cfg))
        .collect::<Result<_>>()?;
    let rhs = per_control.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DppReport {
        lhs,
        rhs,
        per_control,
        defect: (lhs - rhs).abs() / lhs.abs().max(1.0),
    })
}

/// HJB equation for the value with constant `sigma`, `pi`:
/// `u_t + (sigma^2 + pi^2)/2 u_xx + min_v [f(t, x, u, sigma u_x, pi u_x, v) + b(t, x, v) u_x] = 0`,
/// zero on the edges of the state window.
pub fn hjb_spec(prob: &ControlProblem) -> Result<ProblemSpec> {
    prob.validate()?;
    if !prob.constant_diffusion {
        return Err(Error::Precondition("HJB solve needs constant sigma and pi".into()));
    }
    let s = (prob.sigma_w)(0.0, prob.domain.0);
    let p = (prob.pi_b)(0.0, prob.domain.0);
    let diff = 0.5 * (s * s + p * p);
    let pr = prob.clone();
    let driver = driver_fn(ArgMask::ALL, move |pt, u, grad, _| {
        let x = pt.x[0];
        let g = grad[0];
        pr.controls
            .iter()
            .map(|&v| (pr.f)(pt.t, x, u, s * g, p * g, v) + (pr.b)(pt.t, x, v) * g)
            .fold(f64::INFINITY, f64::min)
    });
    let phi = prob.phi.clone();
    let mut spec = ProblemSpec::new(1, 1, prob.horizon)
        .with_domain(BoxDomain {
            lo: vec![prob.domain.0],
            hi: vec![prob.domain.1],
        })
        .with_a(const_matrix(vec![diff]))
        .with_driver(driver)
        .with_terminal(scalar_fn(move |pt| phi(pt.x[0])));
    spec.autonomous = true;
    Ok(spec)
}

pub fn solve_hjb(prob: &ControlProblem, nx: usize, n_t: usize, cfg: &SolverConfig) -> Result<SolutionField> {
    let spec = hjb_spec(prob)?;
    let grid = GridStack::new(&spec.domain, &[nx], None, spec.horizon, n_t)?;
    solve_deterministic(&spec, &grid, cfg)
}

/// Linear interpolation of a one-dimensional solution at `(level, x)`.
pub fn interpolate_1d(sol: &SolutionField, level: usize, x: f64) -> f64 {
    let ax = &sol.grid.space[0];
    let u = sol.level(level);
    let s = ((x - ax.lo) / ax.dx()).clamp(0.0, (ax.n - 1) as f64);
    let i = (s.floor() as usize).min(ax.n - 2);
    let w = s - i as f64;
    (1.0 - w) * u[i] + w * u[i + 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(b: f64, s: f64, p: f64, f: CostDriver, phi: Terminal, controls: Vec<f64>) -> ControlProblem {
        ControlProblem {
            state_dim: 1,
            horizon: 1.0,
            domain: (-3.0, 3.0),
            b: Arc::new(move |_, _, v| b * v),
            sigma_w: Arc::new(move |_, _| s),
            pi_b: Arc::new(move |_, _| p),
            f,
            phi,
            controls,
            lipschitz: b.abs().max(1e-12),
            coeff_bound: b.abs().max(s).max(p),
            lambda0: 1.0,
            lambda1: 0.0,
            gamma: 0.0,
            exp_lambda: None,
            constant_diffusion: true,
        }
    }

    fn bins() -> StateBins {
        StateBins { lo: -3.0, hi: 3.0, n: 10 }
    }

    #[test]
    fn frozen_dynamics_and_pure_drift() {
        let prob = simple(0.0, 0.0, 0.0, Arc::new(|_, _, _, _, _, _| 0.0), Arc::new(|x| x), vec![1.0]);
        let pol = ControlPolicy::constant(4, bins(), 0);
        let paths = simulate_sde(&prob, &pol, 0.25, 0.7, 16, 8, 1).unwrap();
        assert!(paths.x.iter().all(|&x| x == 0.7));
        let drift = simple(1.0, 0.0, 0.0, Arc::new(|_, _, _, _, _, _| 0.0), Arc::new(|x| x), vec![1.0]);
        let paths = simulate_sde(&drift, &pol, 0.25, 0.7, 4, 8, 1).unwrap();
        for p in 0..4 {
            assert!((paths.x_at(p, 8) - 1.45).abs() < 1e-12);
        }
    }

    #[test]
    fn brownian_variance() {
        let prob = simple(0.0, 1.0, 0.0, Arc::new(|_, _, _, _, _, _| 0.0), Arc::new(|x| x), vec![0.0]);
        let pol = ControlPolicy::constant(1, bins(), 0);
        let n = 10_000;
        let paths = simulate_sde(&prob, &pol, 0.2, 0.0, n, 10, 7).unwrap();
        let incs: Vec<f64> = (0..n).map(|p| paths.x_at(p, 10)).collect();
        let m2: Vec<f64> = incs.iter().map(|x| x * x).collect();
        let mean = m2.iter().sum::<f64>() / n as f64;
        let sd = (m2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.8).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn constant_cost_integrates_time() {
        let prob = simple(0.0, 0.5, 0.1, Arc::new(|_, _, _, _, _, _| 1.0), Arc::new(|_| 0.0), vec![0.0]);
        let pol = ControlPolicy::constant(5, bins(), 0);
        let j = cost_functional(&prob, &pol, 0.3, 0.0, 500, 7, 3, &LsmcConfig::default()).unwrap();
        assert!((j - 0.7).abs() < 1e-10);
    }

    #[test]
    fn linear_terminal_gives_conditional_mean() {
        let prob = simple(0.5, 0.4, 0.3, Arc::new(|_, _, _, _, _, _| 0.0), Arc::new(|x| 2.0 * x + 1.0), vec![1.0]);
        let pol = ControlPolicy::constant(5, bins(), 0);
        let n = 10_000;
        let paths = simulate_sde(&prob, &pol, 0.0, 0.2, n, 10, 5).unwrap();
        let y = solve_cost_bsde(&prob, &paths, &LsmcConfig::default()).unwrap();
        let j = mean_at_start(&y, &paths);
        let exact = 2.0 * (0.2 + 0.5) + 1.0;
        let se = 2.0 * 0.5 / (n as f64).sqrt();
        assert!((j - exact).abs() < 3.0 * se, "{j} vs {exact}");
    }

    #[test]
    fn quadratic_cost_agrees_with_transform() {
        let gamma = 0.5;
        let f: CostDriver = Arc::new(move |_, x, _, zt, zb, _| 0.5 * (std::f64::consts::PI * x / 3.0).cos().max(0.0) + gamma * (zt * zt + zb * zb));
        let prob = simple(0.0, 0.6, 0.4, f, Arc::new(|x| (x * 0.8).sin()), vec![0.0]);
        let pol = ControlPolicy::constant(5, bins(), 0);
        let paths = simulate_sde(&prob, &pol, 0.0, 0.1, 10_000, 20, 9).unwrap();
        let direct = mean_at_start(&solve_cost_bsde(&prob, &paths, &LsmcConfig::default()).unwrap(), &paths);
        let cfg = LsmcConfig {
            exp_lambda: Some(2.0 * gamma),
            ..Default::default()
        };
        let via = mean_at_start(&solve_cost_bsde(&prob, &paths, &cfg).unwrap(), &paths);
        assert!((direct - via).abs() <= 0.02 * direct.abs().max(1.0), "{direct} vs {via}");
    }

    #[test]
    fn semigroup_basics() {
        let zero = simple(0.3, 0.5, 0.2, Arc::new(|_, _, _, _, _, _| 0.0), Arc::new(|_| 0.0), vec![1.0]);
        let cfg = LsmcConfig::default();
        assert_eq!(backward_semigroup(&zero, 0, 0.0, 0.5, 0.0, &|_| 0.0, 100, 4, 1, &cfg).unwrap(), 0.0);
        let lo = backward_semigroup(&zero, 0, 0.0, 0.5, 0.0, &|x| x.sin(), 2000, 4, 1, &cfg).unwrap();
        let hi = backward_semigroup(&zero, 0, 0.0, 0.5, 0.0, &|x| x.sin() + 0.1, 2000, 4, 1, &cfg).unwrap();
        assert!(lo <= hi);
        assert!(backward_semigroup(&zero, 0, 0.8, 0.5, 0.0, &|_| 0.0, 10, 1, 1, &cfg).is_err());
    }

    #[test]
    fn dp_picks_sign_of_linear_cost() {
        let f: CostDriver = Arc::new(|_, _, _, _, _, v| 0.5 * v);
        let prob = simple(0.0, 0.3, 0.0, f, Arc::new(|_| 0.0), vec![-1.0, 1.0]);
        let table = dp_solve(&prob, 5, 8, 200, 2).unwrap();
        assert!(table.policy.table.iter().all(|&c| c == 0));
        assert!((table.value(0, 0.0) + 0.5).abs() < 1e-12);
        assert!(matches!(dp_solve(&prob, 30, 8, 10, 1), Err(Error::Scale(_))));
    }

    #[test]
    fn bins_interpolate_linear_data() {
        let b = bins();
        let vals: Vec<f64> = (0..b.n).map(|i| 2.0 * b.center(i)).collect();
        assert!((b.interpolate(&vals, 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(b.interpolate(&vals, -10.0), vals[0]);
        assert_eq!(b.index(2.99), 9);
    }

    #[test]
    fn hjb_bang_bang_driver() {
        let f: CostDriver = Arc::new(|_, _, _, _, _, _| 0.2);
        let prob = simple(1.5, 0.3, 0.1, f, Arc::new(|_| 0.0), vec![-1.0, 1.0]);
        let spec = hjb_spec(&prob).unwrap();
        let pt = crate::spec::Point::new(0.0, &[0.0], None);
        for &g in &[-2.0, 0.0, 0.7] {
            let val = spec.f.eval(&pt, 0.0, &[g], &[0.0]);
            assert!((val - (0.2 - 1.5 * g.abs())).abs() < 1e-14);
        }
    }
}
