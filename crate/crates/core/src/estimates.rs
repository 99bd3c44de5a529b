//! Verifiers for the a-priori bounds, comparison statements, the Itô
//! identity for `integral psi(u)`, and the test functions used with it.

use crate::error::{Error, Result};
use crate::grid::{divergence_apply, h1_sq, sigma_div_apply, SolutionField};
use crate::solver::PathSamples;
use crate::spec::{GrowthEnvelope, Point, ProblemSpec, UniquenessAssumptions};
use crate::rng;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

/// `sum_{k >= k0} s^k / k!`, accurate for small `|s|`.
pub fn exp_tail(s: f64, k0: u32) -> f64 {
    if s.abs() < 1.0 {
        let mut term = 1.0;
        for k in 1..=k0 {
            term *= s / k as f64;
        }
        let mut sum = 0.0;
        let mut k = k0;
        while term != 0.0 {
            sum += term;
            k += 1;
            term *= s / k as f64;
            if term.abs() <= 1e-18 * sum.abs() {
                sum += term;
                break;
            }
        }
        sum
    } else {
        let mut head = 0.0;
        let mut term = 1.0;
        for k in 1..k0 {
            term *= s / k as f64;
            head += term;
        }
        s.exp_m1() - head
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    Psi1,
    Psi2,
    Psi3,
}

/// Test functions for the Itô identity, each with `psi'(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofTestFunction {
    pub kind: PsiKind,
    pub lambda: f64,
    pub m: f64,
}

impl ProofTestFunction {
    pub fn new(kind: PsiKind, lambda: f64, m: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(m > 0.0) {
            return Err(Error::Argument(format!("need lambda, M > 0; got {lambda}, {m}")));
        }
        Ok(ProofTestFunction { kind, lambda, m })
    }

    /// `[-M, M]` for the first two kinds, `[0, 2M]` for the third.
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            PsiKind::Psi1 | PsiKind::Psi2 => (-self.m, self.m),
            PsiKind::Psi3 => (0.0, 2.0 * self.m),
        }
    }

    pub fn value(&self, v: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            PsiKind::Psi1 => {
                if v > 0.0 {
                    exp_tail(2.0 * l * v, 3)
                } else {
                    0.0
                }
            }
            PsiKind::Psi2 => exp_tail(2.0 * l * v.abs(), 2) / (2.0 * l * l),
            PsiKind::Psi3 => exp_tail(20.0 * l * v, 2) / (200.0 * l * l),
        }
    }

    pub fn d1(&self, v: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            PsiKind::Psi1 => {
                if v > 0.0 {
                    2.0 * l * exp_tail(2.0 * l * v, 2)
                } else {
                    0.0
                }
            }
            PsiKind::Psi2 => v.signum() * (2.0 * l * v.abs()).exp_m1() / l * (v != 0.0) as u8 as f64,
            PsiKind::Psi3 => (20.0 * l * v).exp_m1() / (10.0 * l),
        }
    }

    pub fn d2(&self, v: f64) -> f64 {
        let l = self.lambda;
        match self.kind {
            PsiKind::Psi1 => {
                if v > 0.0 {
                    4.0 * l * l * (2.0 * l * v).exp_m1()
                } else {
                    0.0
                }
            }
            PsiKind::Psi2 => 2.0 * (2.0 * l * v.abs()).exp(),
            PsiKind::Psi3 => 2.0 * (20.0 * l * v).exp(),
        }
    }

    fn grid(&self, points: usize) -> Vec<f64> {
        let (lo, hi) = self.domain();
        (0..points)
            .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
            .collect()
    }

    /// Sandwich constants `k1 v^2 <= Psi2 <= k2 v^2`, `k3 |v| <= |Psi2'| <= k4 |v|`
    /// on `[-M, M]`, widened by a relative `1e-12` for rounding.
    pub fn sandwich(&self) -> Option<[f64; 4]> {
        if self.kind != PsiKind::Psi2 {
            return None;
        }
        let s = 2.0 * self.lambda * self.m;
        let widen = 1e-12;
        Some([
            1.0 - widen,
            2.0 * exp_tail(s, 2) / (s * s) * (1.0 + widen),
            2.0 * (1.0 - widen),
            2.0 * s.exp_m1() / s * (1.0 + widen),
        ])
    }

    /// Evaluate every displayed property on `points` grid points.
    pub fn check_identities(&self, points: usize) -> PsiReport {
        let xs = self.grid(points);
        let l = self.lambda;
        let m = self.m;
        let mut checks = Vec::new();
        let mut ineq = |name: &str, ok: &dyn Fn(f64) -> bool| {
            let bad = xs.iter().filter(|&&v| !ok(v)).count();
            checks.push(PsiCheck {
                name: name.to_string(),
                pass: bad == 0,
                worst: bad as f64,
                tolerance: 0.0,
            });
        };
        match self.kind {
            PsiKind::Psi1 => {
                ineq("psi >= 0", &|v| self.value(v) >= 0.0);
                ineq("psi' >= 0", &|v| self.d1(v) >= 0.0);
                ineq("psi = 0 iff v <= 0", &|v| (self.value(v) == 0.0) == (v <= 0.0));
                ineq("v psi' >= 0", &|v| v * self.d1(v) >= 0.0);
                ineq("v psi' <= 2(M+3) lambda psi", &|v| v * self.d1(v) <= 2.0 * (m + 3.0) * l * self.value(v));
                ineq("lambda psi' - psi''/2 <= 0", &|v| l * self.d1(v) - 0.5 * self.d2(v) <= 0.0);
            }
            PsiKind::Psi2 => {
                ineq("psi >= 0", &|v| self.value(v) >= 0.0);
                let bound = (2.0 * l * m).exp_m1() / l;
                ineq("|psi'| <= (e^{2 lambda M} - 1)/lambda", &|v| self.d1(v).abs() <= bound);
                let k = self.sandwich().unwrap();
                ineq("k1 v^2 <= psi <= k2 v^2", &|v| k[0] * v * v <= self.value(v) && self.value(v) <= k[1] * v * v);
                ineq("k3 |v| <= |psi'| <= k4 |v|", &|v| {
                    k[2] * v.abs() <= self.d1(v).abs() && self.d1(v).abs() <= k[3] * v.abs()
                });
                checks.push(PsiCheck {
                    name: "psi'(0) = 0".into(),
                    pass: self.d1(0.0) == 0.0,
                    worst: self.d1(0.0).abs(),
                    tolerance: 0.0,
                });
                let worst = xs
                    .iter()
                    .map(|&v| (0.5 * self.d2(v) - l * self.d1(v).abs() - 1.0).abs())
                    .fold(0.0, f64::max);
                checks.push(PsiCheck {
                    name: "psi''/2 - lambda |psi'| = 1".into(),
                    pass: worst <= 1e-10,
                    worst,
                    tolerance: 1e-10,
                });
            }
            PsiKind::Psi3 => {
                checks.push(PsiCheck {
                    name: "psi(0) = psi'(0) = 0".into(),
                    pass: self.value(0.0) == 0.0 && self.d1(0.0) == 0.0,
                    worst: self.value(0.0).abs().max(self.d1(0.0).abs()),
                    tolerance: 0.0,
                });
                let worst = xs
                    .iter()
                    .map(|&v| (0.5 * self.d2(v) - 10.0 * l * self.d1(v) - 1.0).abs())
                    .fold(0.0, f64::max);
                checks.push(PsiCheck {
                    name: "psi''/2 - 10 lambda psi' = 1".into(),
                    pass: worst <= 1e-10,
                    worst,
                    tolerance: 1e-10,
                });
            }
        }
        PsiReport {
            kind: self.kind,
            points,
            checks,
            sandwich: self.sandwich(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiCheck {
    pub name: String,
    pub pass: bool,
    /// Largest deviation for equalities, count of failing points otherwise.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub kind: PsiKind,
    pub points: usize,
    pub checks: Vec<PsiCheck>,
    pub sandwich: Option<[f64; 4]>,
}

impl PsiReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Closed-form sup bound
/// `xi(t) = (lambda0 / lambda1)(e^{lambda1 (T - t)} - 1) + e^{lambda1 (T - t)} phi_sup`,
/// with the limit `lambda0 (T - t) + phi_sup` at `lambda1 = 0`.
pub fn linf_bound(t: f64, lambda0_sup: f64, lambda1: f64, phi_sup: f64, horizon: f64) -> Result<f64> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Argument(format!("t = {t} outside [0, {horizon}]")));
    }
    if lambda1 < 0.0 || lambda0_sup < 0.0 || phi_sup < 0.0 {
        return Err(Error::Argument("bound constants must be nonnegative".into()));
    }
    let tau = horizon - t;
    if lambda1 == 0.0 {
        return Ok(lambda0_sup * tau + phi_sup);
    }
    Ok(lambda0_sup / lambda1 * (lambda1 * tau).exp_m1() + (lambda1 * tau).exp() * phi_sup)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinfViolation {
    pub level: usize,
    pub t: f64,
    pub sup: f64,
    pub bound: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinfReport {
    pub levels: usize,
    pub violations: Vec<LinfViolation>,
    /// Largest `sup |u(t)| - xi(t)` over levels.
    pub worst_excess: f64,
}

impl LinfReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `sup |u(t)| <= xi(t) + slack` at every time level.
pub fn check_linf(sol: &SolutionField, env: &GrowthEnvelope, phi_sup: f64, slack: f64) -> Result<LinfReport> {
    let g = &sol.grid;
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..g.n_levels() {
        let t = g.t(k);
        let bound = linf_bound(t, env.lambda0_sup, env.lambda1, phi_sup, g.horizon)?;
        let sup = sol.level(k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(sup - bound);
        if !(sup <= bound + slack) {
            violations.push(LinfViolation {
                level: k,
                t,
                sup,
                bound,
                excess: sup - bound,
            });
        }
    }
    Ok(LinfReport {
        levels: g.n_levels(),
        violations,
        worst_excess: worst,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub n_paths: usize,
    pub ux_sq: f64,
    pub q_sq: f64,
    pub std_err: f64,
    pub c1: Option<f64>,
    pub within: Option<bool>,
}

fn trapezoid_weights(n_levels: usize, dt: f64) -> Vec<f64> {
    (0..n_levels)
        .map(|k| if k == 0 || k + 1 == n_levels { 0.5 * dt } else { dt })
        .collect()
}

/// Monte Carlo estimate of `E int_0^T int_D (|u_x|^2 + |q|^2)`.
pub fn energy_report(sol: &SolutionField, samples: &PathSamples, c1: Option<f64>) -> Result<EnergyReport> {
    if samples.n_paths == 0 {
        return Err(Error::EmptySamples);
    }
    let g = &sol.grid;
    let space = g.space_only();
    let wts = trapezoid_weights(g.n_levels(), g.dt());
    let vol = g.cell_volume();
    let per_path: Vec<(f64, f64)> = (0..samples.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut ux = 0.0;
            let mut qq = 0.0;
            for (k, w) in wts.iter().enumerate() {
                let u = samples.u_space(sol, p, k);
                ux += w * h1_sq(&u, &space);
                let q = samples.q_space(sol, p, k);
                qq += w * q.iter().map(|v| v * v).sum::<f64>() * vol;
            }
            (ux, qq)
        })
        .collect();
    let n = per_path.len() as f64;
    let ux = per_path.iter().map(|r| r.0).sum::<f64>() / n;
    let qq = per_path.iter().map(|r| r.1).sum::<f64>() / n;
    let tot = ux + qq;
    let var = if per_path.len() > 1 {
        per_path.iter().map(|r| (r.0 + r.1 - tot).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(EnergyReport {
        n_paths: samples.n_paths,
        ux_sq: ux,
        q_sq: qq,
        std_err: (var / n).sqrt(),
        c1,
        within: c1.map(|c| tot <= c),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub pass: bool,
    pub violations: usize,
    /// Largest `u1 - u2` over all nodes and levels.
    pub max_excess: f64,
    /// `(level, node)` of the largest excess.
    pub worst: (usize, usize),
}

/// Nodewise `u1 <= u2 + tol`.
pub fn comparison_check(sol1: &SolutionField, sol2: &SolutionField, tol: f64) -> Result<ComparisonReport> {
    if !sol1.grid.same_shape(&sol2.grid) {
        return Err(Error::Grid("comparison needs identical grids".into()));
    }
    let n = sol1.grid.n_nodes();
    let mut worst = (0, 0);
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = 0;
    for (i, (a, b)) in sol1.u.iter().zip(&sol2.u).enumerate() {
        let e = a - b;
        if e > max_excess {
            max_excess = e;
            worst = (i / n, i % n);
        }
        if !(e <= tol) {
            violations += 1;
        }
    }
    Ok(ComparisonReport {
        pass: violations == 0,
        violations,
        max_excess,
        worst,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeReport {
    /// `zeta` at every time level of the solution grid.
    pub zeta: Vec<f64>,
    pub pass: bool,
    pub violations: usize,
    pub max_excess: f64,
}

pub const ODE_SUBSTEPS: usize = 8;

/// Integrate `zeta' = -g(t, zeta)` backward from `zeta(T)` with RK4 on the
/// solution's time grid (subdivided) and check `u <= zeta + tol`.
pub fn ode_supersolution_check(sol: &SolutionField, g: &dyn Fn(f64, f64) -> f64, zeta_t: f64, tol: f64) -> Result<OdeReport> {
    let grid = &sol.grid;
    let nt = grid.n_t;
    let mut zeta = vec![0.0; nt + 1];
    zeta[nt] = zeta_t;
    let rhs = |t: f64, z: f64| g(t, z);
    for k in (0..nt).rev() {
        let t_hi = grid.t(k + 1);
        let t_lo = grid.t(k);
        let h = (t_hi - t_lo) / ODE_SUBSTEPS as f64;
        let mut z = zeta[k + 1];
        for j in 0..ODE_SUBSTEPS {
            let t = t_hi - j as f64 * h;
            let k1 = rhs(t, z);
            let k2 = rhs(t - 0.5 * h, z + 0.5 * h * k1);
            let k3 = rhs(t - 0.5 * h, z + 0.5 * h * k2);
            let k4 = rhs(t - h, z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !z.is_finite() || z.abs() > 1e150 {
                return Err(Error::OdeBlowUp { t: t - h });
            }
        }
        zeta[k] = z;
    }
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for (k, z) in zeta.iter().enumerate() {
        for &u in sol.level(k) {
            let e = u - z;
            max_excess = max_excess.max(e);
            if !(e <= tol) {
                violations += 1;
            }
        }
    }
    Ok(OdeReport {
        zeta,
        pass: violations == 0,
        violations,
        max_excess,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ItoResidual {
    pub residual: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Pathwise residual of the Itô formula for `int psi(u(t))` between `0` and
/// `T`, averaged over paths. Drift terms use the solver's stencil, time
/// integrals the trapezoid rule, the stochastic integral forward points.
pub fn ito_identity_residual(sol: &SolutionField, spec: &ProblemSpec, psi: &ProofTestFunction, samples: &PathSamples) -> Result<ItoResidual> {
    if samples.n_paths == 0 {
        return Err(Error::EmptySamples);
    }
    let (lo, hi) = psi.domain();
    let (umin, umax) = sol
        .u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if umin < lo || umax > hi {
        return Err(Error::Range(format!(
            "solution range [{umin}, {umax}] leaves the test function domain [{lo}, {hi}]"
        )));
    }
    let g = &sol.grid;
    let space = g.space_only();
    let n_space = g.n_space();
    let d = g.dim();
    let d0 = sol.d0;
    let vol = g.cell_volume();
    let dt = g.dt();
    let nl = g.n_levels();
    let coords: Vec<Vec<f64>> = (0..n_space).map(|s| g.coords(s)).collect();
    let interior: Vec<bool> = (0..n_space).map(|s| !g.is_boundary(s)).collect();
    let lift = g.noise.is_some();
    let per_path: Vec<f64> = (0..samples.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut integrand = vec![0.0; nl];
            let mut stoch = 0.0;
            for (k, slot) in integrand.iter_mut().enumerate() {
                let t = g.t(k);
                let w = lift.then(|| samples.w_at(path, k));
                let u = samples.u_space(sol, path, k);
                let q = samples.q_space(sol, path, k);
                let flux = divergence_apply(spec, &space, t, w, &u);
                let sdiv = sigma_div_apply(spec, &space, t, w, &q);
                let mut acc = 0.0;
                let mut sacc = 0.0;
                let mut p = vec![0.0; d];
                for s in 0..n_space {
                    if !interior[s] {
                        continue;
                    }
                    for (kk, pk) in p.iter_mut().enumerate() {
                        let sk = space.stride(kk);
                        *pk = (u[s + sk] - u[s - sk]) / (2.0 * space.space[kk].dx());
                    }
                    let qs = &q[s * d0..(s + 1) * d0];
                    let f0 = spec.f.eval(&Point::new(t, &coords[s], w), u[s], &p, qs);
                    let qq: f64 = qs.iter().map(|v| v * v).sum();
                    acc += psi.d1(u[s]) * (f0 + flux[s] + sdiv[s]) - 0.5 * psi.d2(u[s]) * qq;
                    if k + 1 < nl {
                        sacc += psi.d1(u[s]) * qs[0];
                    }
                }
                *slot = acc * vol;
                if k + 1 < nl && lift {
                    stoch += sacc * vol * samples.dw(path, k);
                }
            }
            let quad: f64 = (0..nl - 1).map(|k| 0.5 * dt * (integrand[k] + integrand[k + 1])).sum();
            let psi_int = |k: usize| samples.u_space(sol, path, k).iter().map(|&v| psi.value(v)).sum::<f64>() * vol;
            psi_int(0) - psi_int(nl - 1) - quad + stoch
        })
        .collect();
    let n = per_path.len() as f64;
    let mean = per_path.iter().sum::<f64>() / n;
    let var = if per_path.len() > 1 {
        per_path.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ItoResidual {
        residual: mean,
        std_err: (var / n).sqrt(),
        n_paths: samples.n_paths,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Power2mReport {
    pub m: u32,
    /// `int [(u1 - u2)^+]^{2m}` per time level (largest over noise nodes).
    pub profile_plus: Vec<f64>,
    pub profile_minus: Vec<f64>,
    pub sup_distance: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Gronwall check of `t -> int [(u1 - u2)^+]^{2m}` against
/// `e^{2m int_t^T b} * (terminal value)` in both directions, allowing the
/// contribution `tol^{2m} |D|` of a nodewise difference below `tol`.
pub fn power2m_contraction(sol1: &SolutionField, sol2: &SolutionField, m: u32, assumptions: &UniquenessAssumptions, tol: f64) -> Result<Power2mReport> {
    if m < 2 {
        return Err(Error::Argument("m must be at least 2".into()));
    }
    if !sol1.grid.same_shape(&sol2.grid) {
        return Err(Error::Grid("power estimate needs identical grids".into()));
    }
    let g = &sol1.grid;
    let nw = g.n_w();
    let vol = g.cell_volume();
    let volume: f64 = g.space.iter().map(|a| a.hi - a.lo).product();
    let p = 2 * m as i32;
    let profile = |sign: f64| -> Vec<f64> {
        (0..g.n_levels())
            .map(|k| {
                let (a, b) = (sol1.level(k), sol2.level(k));
                (0..nw)
                    .map(|iw| {
                        (0..g.n_space())
                            .map(|s| {
                                let i = s * nw + iw;
                                (sign * (a[i] - b[i])).max(0.0).powi(p)
                            })
                            .sum::<f64>()
                            * vol
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let plus = profile(1.0);
    let minus = profile(-1.0);
    let nt = g.n_t;
    // int_t^T b by the trapezoid rule on the time grid
    let mut int_b = vec![0.0; nt + 1];
    for k in (0..nt).rev() {
        int_b[k] = int_b[k + 1] + 0.5 * g.dt() * ((assumptions.b_fn)(g.t(k)) + (assumptions.b_fn)(g.t(k + 1)));
    }
    let allowance = tol.powi(p) * volume;
    let ok = |prof: &[f64]| {
        (0..=nt).all(|k| prof[k] <= (2.0 * m as f64 * int_b[k]).exp() * prof[nt] + allowance)
    };
    let pass = ok(&plus) && ok(&minus);
    Ok(Power2mReport {
        m,
        profile_plus: plus,
        profile_minus: minus,
        sup_distance: sol1.sup_distance(sol2)?,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    /// Violations of `|f| <= lambda0 + lambda1 |v| + gamma(|v|)(|p|^2 + |r|^2)`.
    pub growth_violations: usize,
    /// Violations of `|f| <= lambda0 + lambda1 |v| + lambda mu0 (|p|^2 + |r|^2)`.
    pub strengthened_violations: usize,
}

/// Sample the driver on `|v| <= v_scale`, `|p_i|, |r_j| <= z_scale`.
pub fn check_driver_envelope(spec: &ProblemSpec, env: &GrowthEnvelope, mu0: f64, n_samples: usize, v_scale: f64, z_scale: f64, seed: u64) -> EnvelopeReport {
    let d = spec.d;
    let d0 = spec.d0;
    let pts = spec.sample_points(n_samples, seed);
    let rows: Vec<(bool, bool)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, (t, x, w))| {
            let mut g = rng::stream(rng::subseed(seed, 2), i as u64);
            let v = (2.0 * g.random::<f64>() - 1.0) * v_scale;
            let z: Vec<f64> = (0..d + d0).map(|_| (2.0 * g.random::<f64>() - 1.0) * z_scale).collect();
            let pt = Point::new(*t, x, *w);
            let f = spec.f.eval(&pt, v, &z[..d], &z[d..]).abs();
            let zz: f64 = z.iter().map(|a| a * a).sum();
            let base = env.lambda0.eval(&pt) + env.lambda1 * v.abs();
            let tol = 1e-12 * (1.0 + f);
            (f > base + (env.gamma)(v.abs()) * zz + tol, f > base + env.lambda * mu0 * zz + tol)
        })
        .collect();
    EnvelopeReport {
        samples: n_samples,
        growth_violations: rows.iter().filter(|r| r.0).count(),
        strengthened_violations: rows.iter().filter(|r| r.1).count(),
    }
}
