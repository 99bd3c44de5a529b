//! Backward time stepping.
//!
//! Each step solves
//! `(I - theta dt L) u^n = u^{n+1} + dt [(1 - theta) L u^{n+1} + f(t_n, x, u*, u*_x, q*)]`
//! with `u*` updated by Picard iteration. In lift mode the unknown is
//! `U(t, x, w)` and `L` also carries `1/2 U_ww + (sigma U_w)_x`.

use crate::error::{Error, Result};
use crate::grid::{assemble_interior, GridStack, SolutionField};
use crate::linalg::{BandLu, BandMatrix};
use crate::rng;
use crate::spec::{validate_superparabolic, ArgMask, CoefficientMode, Point, ProblemSpec};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    #[default]
    BandedDirect,
}

/// Starting guess for the Picard loop at each time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PicardInit {
    /// The solution at the next time level.
    #[default]
    Previous,
    Zero,
    /// Next level shifted by a constant on interior nodes.
    Offset(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub picard_max_iters: usize,
    pub picard_tol: f64,
    pub linear_solver: LinearSolver,
    pub theta: f64,
    pub clip_bound: Option<f64>,
    pub picard_init: PicardInit,
    /// Fail when `|U_w|` on the noise boundary exceeds this.
    pub w_slope_limit: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            picard_max_iters: 200,
            picard_tol: 1e-10,
            linear_solver: LinearSolver::BandedDirect,
            theta: 1.0,
            clip_bound: None,
            picard_init: PicardInit::Previous,
            w_slope_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(Error::Argument(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if self.picard_max_iters == 0 {
            return Err(Error::Argument("picard_max_iters must be at least 1".into()));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::Argument(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if let Some(m) = self.clip_bound {
            if !(m > 0.0) {
                return Err(Error::Argument("clip_bound must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-node classification used by the stepper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Dirichlet,
    /// Noise-axis edge; `+1` extrapolates from above, `-1` from below.
    Extrapolate(isize),
    Interior,
}

struct Layout {
    rows: Vec<Row>,
    coords: Vec<Vec<f64>>,
}

impl Layout {
    fn new(grid: &GridStack) -> Self {
        let nw = grid.n_w();
        let lift = grid.noise.is_some();
        let mut rows = Vec::with_capacity(grid.n_nodes());
        for s in 0..grid.n_space() {
            let b = grid.is_boundary(s);
            for iw in 0..nw {
                rows.push(if b {
                    Row::Dirichlet
                } else if lift && iw == 0 {
                    Row::Extrapolate(1)
                } else if lift && iw + 1 == nw {
                    Row::Extrapolate(-1)
                } else {
                    Row::Interior
                });
            }
        }
        Layout {
            rows,
            coords: (0..grid.n_space()).map(|s| grid.coords(s)).collect(),
        }
    }
}

fn system_matrix(l: &BandMatrix, layout: &Layout, theta: f64, dt: f64) -> Result<BandLu> {
    let mut a = l.scaled_shift(-theta * dt, 1.0);
    for (node, row) in layout.rows.iter().enumerate() {
        if let Row::Extrapolate(dir) = *row {
            a.clear_row(node);
            let n1 = (node as isize + dir) as usize;
            let n2 = (node as isize + 2 * dir) as usize;
            a.set(node, node, 1.0);
            a.set(node, n1, -2.0);
            a.set(node, n2, 1.0);
        }
    }
    a.factor()
}

/// Central difference along space axis `k` at an interior node.
#[inline]
fn dx_central(u: &[f64], grid: &GridStack, node: usize, k: usize) -> f64 {
    let sk = grid.stride(k);
    (u[node + sk] - u[node - sk]) / (2.0 * grid.space[k].dx())
}

/// Noise derivative: central inside, one-sided second order at the edges.
#[inline]
fn dw_at(u: &[f64], grid: &GridStack, node: usize, iw: usize) -> f64 {
    let ax = grid.noise.as_ref().expect("noise axis");
    let h = ax.dw();
    let nw = ax.n;
    if iw == 0 {
        (-3.0 * u[node] + 4.0 * u[node + 1] - u[node + 2]) / (2.0 * h)
    } else if iw + 1 == nw {
        (3.0 * u[node] - 4.0 * u[node - 1] + u[node - 2]) / (2.0 * h)
    } else {
        (u[node + 1] - u[node - 1]) / (2.0 * h)
    }
}

/// Driver values `f(t, x[, w], u, u_x, q)` at interior nodes, zero elsewhere.
fn driver_values(spec: &ProblemSpec, grid: &GridStack, layout: &Layout, t: f64, u: &[f64], clip: Option<f64>) -> Vec<f64> {
    let d = grid.dim();
    let d0 = spec.d0;
    let nw = grid.n_w();
    let lift = grid.noise.is_some();
    let mask = spec.f.args();
    (0..u.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|node| {
            if layout.rows[node] != Row::Interior {
                return 0.0;
            }
            let s = node / nw;
            let iw = node % nw;
            let mut p = [0.0f64; 8];
            let mut r = [0.0f64; 8];
            let p = &mut p[..d];
            let r = &mut r[..d0];
            let mut v = u[node];
            if mask.p {
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = dx_central(u, grid, node, k);
                }
            }
            if lift && mask.r {
                r[0] = dw_at(u, grid, node, iw);
            }
            if let Some(m) = clip {
                v = v.clamp(-m, m);
                p.iter_mut().chain(r.iter_mut()).for_each(|z| *z = z.clamp(-m, m));
            }
            spec.f.eval(&Point::new(t, &layout.coords[s], grid.w(iw)), v, p, r)
        })
        .collect()
}

fn march(spec: &ProblemSpec, grid: &GridStack, cfg: &SolverConfig) -> Result<SolutionField> {
    cfg.validate()?;
    spec.validate()?;
    if grid.dim() != spec.d {
        return Err(Error::Dimension {
            what: "grid",
            expected: spec.d,
            got: grid.dim(),
        });
    }
    let sp = validate_superparabolic(spec, 64, 0x51ab)?;
    if let Some(v) = sp.violations.first() {
        return Err(Error::Precondition(format!(
            "coefficients are not super-parabolic at t = {}, x = {:?} (min eigenvalue {:e})",
            v.t, v.x, v.min_eig
        )));
    }
    let lift = grid.noise.is_some();
    let layout = Layout::new(grid);
    let nw = grid.n_w();
    let n = grid.n_nodes();
    let nt = grid.n_t;
    let dt = grid.dt();
    let mut sol = SolutionField::zeros(grid.clone(), spec.mode, spec.d0);

    {
        let last = sol.level_mut(nt);
        for s in 0..grid.n_space() {
            for iw in 0..nw {
                let node = s * nw + iw;
                if layout.rows[node] != Row::Dirichlet {
                    last[node] = spec.phi.eval(&Point::new(spec.horizon, &layout.coords[s], grid.w(iw)));
                }
            }
        }
        if last.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { level: nt });
        }
    }

    let depends_on_u = spec.f.args() != ArgMask::NONE;
    let mut cached: Option<(BandMatrix, BandLu)> = None;
    let mut base = vec![0.0; n];
    let mut lu_prev = vec![0.0; n];
    for level in (0..nt).rev() {
        let t = grid.t(level);
        if cached.is_none() || !spec.autonomous {
            let l = assemble_interior(spec, grid, t, lift);
            let lu = system_matrix(&l, &layout, cfg.theta, dt)?;
            cached = Some((l, lu));
        }
        let (l, lu) = cached.as_ref().unwrap();
        let prev = sol.level(level + 1).to_vec();
        if cfg.theta < 1.0 {
            l.matvec(&prev, &mut lu_prev);
        }
        for node in 0..n {
            base[node] = match layout.rows[node] {
                Row::Interior => prev[node] + (1.0 - cfg.theta) * dt * lu_prev[node],
                _ => 0.0,
            };
        }
        let mut ustar: Vec<f64> = match cfg.picard_init {
            PicardInit::Previous => prev.clone(),
            PicardInit::Zero => vec![0.0; n],
            PicardInit::Offset(c) => prev
                .iter()
                .zip(&layout.rows)
                .map(|(v, r)| if *r == Row::Interior { v + c } else { *v })
                .collect(),
        };
        let mut iters = 0;
        loop {
            iters += 1;
            let fv = driver_values(spec, grid, &layout, t, &ustar, cfg.clip_bound);
            let mut rhs: Vec<f64> = base.iter().zip(&fv).map(|(b, f)| b + dt * f).collect();
            lu.solve(&mut rhs);
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { level });
            }
            let diff = rhs.iter().zip(&ustar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ustar = rhs;
            if !depends_on_u || diff <= cfg.picard_tol {
                break;
            }
            if iters >= cfg.picard_max_iters {
                return Err(Error::PicardDivergence { level, residual: diff });
            }
        }
        sol.picard_iters[level] = iters;
        sol.level_mut(level).copy_from_slice(&ustar);
    }

    if lift {
        let mut slope = 0.0f64;
        for k in 0..=nt {
            let u = sol.level(k).to_vec();
            let q = sol.q_level_mut(k);
            for node in 0..n {
                if layout.rows[node] == Row::Dirichlet {
                    continue;
                }
                let iw = node % nw;
                q[node] = dw_at(&u, grid, node, iw);
                if iw == 0 || iw + 1 == nw {
                    slope = slope.max(q[node].abs());
                }
            }
        }
        sol.w_boundary_slope = Some(slope);
        if let Some(limit) = cfg.w_slope_limit {
            if slope > limit {
                return Err(Error::NoiseTruncation { slope, limit });
            }
        }
    }
    Ok(sol)
}

/// Solve with deterministic coefficients; `q` is identically zero.
pub fn solve_deterministic(spec: &ProblemSpec, grid: &GridStack, cfg: &SolverConfig) -> Result<SolutionField> {
    if spec.mode != CoefficientMode::Deterministic {
        return Err(Error::Argument("spec is not in deterministic mode".into()));
    }
    if grid.noise.is_some() {
        return Err(Error::Grid("deterministic solves take no noise axis".into()));
    }
    march(spec, grid, cfg)
}

/// Solve the lifted PDE on `(x, w)`; `q` is the noise derivative of `U`.
pub fn solve_markovian_lift(spec: &ProblemSpec, grid: &GridStack, cfg: &SolverConfig) -> Result<SolutionField> {
    if spec.mode != CoefficientMode::MarkovianLift {
        return Err(Error::Argument("spec is not in lift mode".into()));
    }
    if grid.noise.is_none() {
        return Err(Error::Grid("lift solves need a noise axis".into()));
    }
    if spec.d0 != 1 {
        return Err(Error::Argument("lift mode supports a single Wiener coordinate".into()));
    }
    march(spec, grid, cfg)
}

/// Dispatch on the spec's coefficient mode.
pub fn solve(spec: &ProblemSpec, grid: &GridStack, cfg: &SolverConfig) -> Result<SolutionField> {
    match spec.mode {
        CoefficientMode::Deterministic => solve_deterministic(spec, grid, cfg),
        CoefficientMode::MarkovianLift => solve_markovian_lift(spec, grid, cfg),
    }
}

/// Wiener paths on the time grid with `u`, `q` read off by interpolation in `w`.
#[derive(Debug, Clone)]
pub struct PathSamples {
    pub n_paths: usize,
    pub n_levels: usize,
    pub dt: f64,
    /// `n_paths * n_levels` Wiener values, path-major.
    pub w: Vec<f64>,
    pub clamped: Vec<bool>,
    pub clamped_count: usize,
}

impl PathSamples {
    pub fn w_at(&self, path: usize, k: usize) -> f64 {
        self.w[path * self.n_levels + k]
    }

    pub fn dw(&self, path: usize, k: usize) -> f64 {
        self.w_at(path, k + 1) - self.w_at(path, k)
    }

    /// `u(t_k, x_s, W_k)` for every space node.
    pub fn u_space(&self, sol: &SolutionField, path: usize, k: usize) -> Vec<f64> {
        let g = &sol.grid;
        let (i, frac) = interp_weights(sol, self.w_at(path, k));
        let nw = g.n_w();
        let u = sol.level(k);
        (0..g.n_space())
            .map(|s| {
                let b = s * nw + i;
                if frac == 0.0 {
                    u[b]
                } else {
                    (1.0 - frac) * u[b] + frac * u[b + 1]
                }
            })
            .collect()
    }

    /// `q(t_k, x_s, W_k)`, `d0` components per space node.
    pub fn q_space(&self, sol: &SolutionField, path: usize, k: usize) -> Vec<f64> {
        let g = &sol.grid;
        let (i, frac) = interp_weights(sol, self.w_at(path, k));
        let nw = g.n_w();
        let d0 = sol.d0;
        let q = sol.q_level(k);
        let mut out = vec![0.0; g.n_space() * d0];
        for s in 0..g.n_space() {
            for j in 0..d0 {
                let b = (s * nw + i) * d0 + j;
                out[s * d0 + j] = if frac == 0.0 {
                    q[b]
                } else {
                    (1.0 - frac) * q[b] + frac * q[b + d0]
                };
            }
        }
        out
    }
}

/// Lower noise index and weight of the upper neighbour for `w` (clamped).
pub fn interp_weights(sol: &SolutionField, w: f64) -> (usize, f64) {
    match &sol.grid.noise {
        None => (0, 0.0),
        Some(ax) => {
            let pos = ((w.clamp(-ax.w_max, ax.w_max) + ax.w_max) / ax.dw()).min((ax.n - 1) as f64);
            let i = (pos.floor() as usize).min(ax.n - 2);
            (i, pos - i as f64)
        }
    }
}

/// Simulate Wiener paths on the solution's time grid.
pub fn sample_random_field(sol: &SolutionField, n_paths: usize, seed: u64) -> Result<PathSamples> {
    let g = &sol.grid;
    let nl = g.n_levels();
    let sq = g.dt().sqrt();
    let w_max = g.noise.as_ref().map(|a| a.w_max);
    let per_path: Vec<(Vec<f64>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(seed, p as u64);
            let mut w = Vec::with_capacity(nl);
            let mut cur = 0.0f64;
            let mut clamped = false;
            w.push(cur);
            for _ in 1..nl {
                let z: f64 = StandardNormal.sample(&mut r);
                cur += sq * z;
                if let Some(m) = w_max {
                    clamped |= cur.abs() > m;
                }
                w.push(cur);
            }
            (w, clamped)
        })
        .collect();
    let mut w = Vec::with_capacity(n_paths * nl);
    let mut clamped = Vec::with_capacity(n_paths);
    for (pw, c) in per_path {
        w.extend(pw);
        clamped.push(c);
    }
    let clamped_count = clamped.iter().filter(|&&c| c).count();
    Ok(PathSamples {
        n_paths,
        n_levels: nl,
        dt: g.dt(),
        w,
        clamped,
        clamped_count,
    })
}

/// Lift-derived `q` against the sampling estimate `E[dU dW] / dt`.
#[derive(Debug, Clone, Serialize)]
pub struct QCheck {
    pub level: usize,
    pub space_node: usize,
    pub q_lift: f64,
    pub q_sampled: f64,
    pub std_err: f64,
    pub z_score: f64,
}

/// Compare over the step `[t_k, t_{k+1}]` at space node `s`. Given `W_{t_k}`,
/// Gaussian integration by parts gives `E[dU dW] / dt = E[U_w(t_{k+1}, W_{t_{k+1}})]`,
/// so the lift side is `E q(t_{k+1})` along the same paths.
pub fn q_martingale_check(sol: &SolutionField, samples: &PathSamples, k: usize, s: usize) -> Result<QCheck> {
    if samples.n_paths < 2 {
        return Err(Error::EmptySamples);
    }
    if k + 1 >= sol.grid.n_levels() || s >= sol.grid.n_space() {
        return Err(Error::Argument("level or node out of range".into()));
    }
    let dt = sol.grid.dt();
    let rows: Vec<(f64, f64)> = (0..samples.n_paths)
        .into_par_iter()
        .map(|p| {
            let u0 = samples.u_space(sol, p, k)[s];
            let u1 = samples.u_space(sol, p, k + 1)[s];
            let q1 = samples.q_space(sol, p, k + 1)[s * sol.d0];
            ((u1 - u0) * samples.dw(p, k) / dt, q1)
        })
        .collect();
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let q_lift = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let std_err = (var / n).sqrt();
    Ok(QCheck {
        level: k,
        space_node: s,
        q_lift,
        q_sampled: mean,
        std_err,
        z_score: (mean - q_lift) / std_err.max(f64::MIN_POSITIVE),
    })
}
