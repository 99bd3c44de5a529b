//! The monotone existence scheme: cutoff in `v + 1`, decreasing Lipschitz
//! regularizations by sup-convolution, clamped generators, and the solve
//! sequence built from them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::linf_bound;
use crate::grid::{GridStack, SolutionField};
use crate::solver::{solve, SolverConfig};
use crate::spec::{scalar_fn, ArgMask, CoefficientMode, Driver, GrowthEnvelope, Point, ProblemSpec};
use crate::transforms::{exp_inverse_field, exponentiate_driver};

/// `s^3 (10 - 15 s + 6 s^2)`, clamped to `[0, 1]`.
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// `psi(z) = 1` on `[e^{-2 lambda M}, e^{2 lambda M}]`, `0` outside
/// `[e^{-2 lambda (M+1)}, e^{2 lambda (M+1)}]`, quintic smoothstep between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffPsi {
    pub lambda: f64,
    pub m: f64,
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl CutoffPsi {
    pub fn value(&self, z: f64) -> f64 {
        let (ilo, ihi) = self.inner;
        let (olo, ohi) = self.outer;
        if z >= ilo && z <= ihi {
            1.0
        } else if z <= olo || z >= ohi {
            0.0
        } else if z < ilo {
            smoothstep((z - olo) / (ilo - olo))
        } else {
            smoothstep((ohi - z) / (ohi - ihi))
        }
    }
}

pub fn build_cutoff(lambda: f64, m: f64) -> Result<CutoffPsi> {
    if !(lambda > 0.0) || !(m > 0.0) {
        return Err(Error::Argument(format!("cutoff needs lambda, M > 0; got {lambda}, {m}")));
    }
    let two_l = 2.0 * lambda;
    if two_l * (m + 1.0) > crate::transforms::EXP_GUARD {
        return Err(Error::Range(format!("e^(2 lambda (M+1)) overflows for lambda = {lambda}, M = {m}")));
    }
    Ok(CutoffPsi {
        lambda,
        m,
        inner: ((-two_l * m).exp(), (two_l * m).exp()),
        outer: ((-two_l * (m + 1.0)).exp(), (two_l * (m + 1.0)).exp()),
    })
}

struct CutOff {
    inner: Arc<dyn Driver>,
    psi: CutoffPsi,
}

impl Driver for CutOff {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        let c = self.psi.value(v + 1.0);
        if c == 0.0 {
            0.0
        } else {
            c * self.inner.eval(pt, v, p, r)
        }
    }
    fn args(&self) -> ArgMask {
        self.inner.args().union(ArgMask { v: true, p: false, r: false })
    }
}

/// `psi(v + 1) F(t, x, v, p, r)`; `F` is never evaluated where `psi` vanishes.
pub fn cutoff_driver(big_f: Arc<dyn Driver>, psi: CutoffPsi) -> Arc<dyn Driver> {
    Arc::new(CutOff { inner: big_f, psi })
}

/// Search grid for the sup-convolution: `points` nodes per searched
/// coordinate, over `[-v_radius, v_radius]` in `v` and `[-z_radius, z_radius]`
/// in each gradient and noise coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub points: usize,
    pub v_radius: f64,
    pub z_radius: f64,
}

impl SearchGrid {
    pub fn for_bound(m: f64) -> Self {
        SearchGrid {
            points: 41,
            v_radius: (2.0 * m).max(10.0),
            z_radius: 10.0,
        }
    }

    fn axis(&self, radius: f64) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64).collect()
    }
}

/// Values above this during the probe mean the regularized driver is not
/// bounded above on the search region.
pub const SENTINEL: f64 = 1e12;
const PROBE_POINTS: usize = 8;

/// `F^n(xi) = max(F(xi), max_zeta [F(zeta) - n |xi - zeta|]) + 2^{-n}` over the
/// search grid, with `|.|` the Euclidean norm of the searched coordinates.
pub struct LipschitzApprox {
    pub n: u32,
    pub offset: f64,
    base: Arc<dyn Driver>,
    /// Searched coordinates: `v`, then `p_1..p_d`, then `r_1..r_d0`.
    searched: Vec<usize>,
    nodes: Vec<Vec<f64>>,
    d: usize,
}

impl LipschitzApprox {
    pub fn lipschitz_constant(&self) -> f64 {
        self.n as f64
    }

    pub fn search_nodes(&self) -> usize {
        self.nodes.len()
    }
}

impl Driver for LipschitzApprox {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        let d = self.d;
        let mut xi = Vec::with_capacity(1 + p.len() + r.len());
        xi.push(v);
        xi.extend_from_slice(p);
        xi.extend_from_slice(r);
        let mut best = self.base.eval(pt, v, p, r);
        let mut z = xi.clone();
        let n = self.n as f64;
        for node in &self.nodes {
            let mut dist = 0.0;
            for (&c, &val) in self.searched.iter().zip(node) {
                z[c] = val;
                dist += (xi[c] - val) * (xi[c] - val);
            }
            let lower = -n * dist.sqrt();
            let val = self.base.eval(pt, z[0], &z[1..1 + d], &z[1 + d..]) + lower;
            if val > best {
                best = val;
            }
        }
        best + self.offset
    }

    fn args(&self) -> ArgMask {
        self.base.args()
    }
}

/// Build `F^n` from `F` (already cut off). Coordinates `F` ignores are not
/// searched; in deterministic mode the noise coordinates are not searched
/// either since `r = 0` there.
pub fn sup_convolution(base: Arc<dyn Driver>, n: u32, search: &SearchGrid, spec: &ProblemSpec) -> Result<LipschitzApprox> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if search.points < 2 {
        return Err(Error::Argument("search grid needs at least 2 points".into()));
    }
    let d = spec.d;
    let d0 = spec.d0;
    let mask = base.args();
    let mut searched = Vec::new();
    let mut axes = Vec::new();
    if mask.v {
        searched.push(0);
        axes.push(search.axis(search.v_radius));
    }
    if mask.p {
        for i in 0..d {
            searched.push(1 + i);
            axes.push(search.axis(search.z_radius));
        }
    }
    if mask.r && spec.mode == CoefficientMode::MarkovianLift {
        for j in 0..d0 {
            searched.push(1 + d + j);
            axes.push(search.axis(search.z_radius));
        }
    }
    let mut nodes: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        nodes = nodes
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    if searched.is_empty() {
        nodes.clear();
    }
    // probe for an upper bound on the search region
    let probe = spec.sample_points(PROBE_POINTS, 0x5eed);
    let mut z = vec![0.0; 1 + d + d0];
    for (t, x, w) in &probe {
        let pt = Point::new(*t, x, *w);
        for node in &nodes {
            for (&c, &val) in searched.iter().zip(node) {
                z[c] = val;
            }
            let val = base.eval(&pt, z[0], &z[1..1 + d], &z[1 + d..]);
            if val.is_nan() || val > SENTINEL {
                return Err(Error::Precondition(format!(
                    "driver is not bounded above on the search region (value {val:e} at t = {t})"
                )));
            }
        }
    }
    Ok(LipschitzApprox {
        n,
        offset: 0.5f64.powi(n as i32),
        base,
        searched,
        nodes,
        d,
    })
}

struct Truncated {
    f: Arc<dyn Driver>,
    lambda0: Arc<dyn crate::spec::ScalarField>,
    lambda1: f64,
    gamma_m: f64,
}

impl Driver for Truncated {
    fn eval(&self, pt: &Point<'_>, v: f64, p: &[f64], r: &[f64]) -> f64 {
        let zz: f64 = p.iter().chain(r).map(|x| x * x).sum();
        let bound = self.lambda0.eval(pt) + self.lambda1 * v.abs() + self.gamma_m * zz;
        self.f.eval(pt, v, p, r).clamp(-bound, bound)
    }
    fn args(&self) -> ArgMask {
        self.f.args().union(ArgMask {
            v: self.lambda1 != 0.0,
            p: self.gamma_m != 0.0,
            r: self.gamma_m != 0.0,
        })
    }
}

/// `f` clamped into `[-b, b]` with `b = lambda0(t, x) + lambda1 |v| + gamma(M)(|p|^2 + |r|^2)`.
pub fn truncate_generator(f: Arc<dyn Driver>, env: &GrowthEnvelope, m: f64) -> Arc<dyn Driver> {
    Arc::new(Truncated {
        f,
        lambda0: env.lambda0.clone(),
        lambda1: env.lambda1,
        gamma_m: (env.gamma)(m),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MonotoneConfig {
    pub n_max: u32,
    /// Transform parameter; the chain uses `v = e^{2 lambda u} - 1`.
    /// Defaults to the envelope's `lambda`.
    pub lambda: Option<f64>,
    /// A-priori bound `M`; defaults to the closed-form sup bound at `t = 0`.
    pub bound: Option<f64>,
    pub search: Option<SearchGrid>,
    /// Debug only: drop the cutoff from the chain.
    pub skip_cutoff: bool,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        MonotoneConfig {
            n_max: 6,
            lambda: None,
            bound: None,
            search: None,
            skip_cutoff: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceRow {
    pub n: u32,
    pub sup_distance: f64,
    /// `max(0, max(u^{n+1} - u^n))`; absent for the last iterate.
    pub monotonicity_defect: Option<f64>,
    /// `e^{-2 lambda (M+1)} - 1 <= v^n <= e^{2 lambda (M+1)}` within tolerance.
    pub sandwich_ok: bool,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub lambda: f64,
    pub m: f64,
    pub sandwich: (f64, f64),
    pub rows: Vec<SequenceRow>,
}

impl MonotoneReport {
    pub fn max_defect(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.monotonicity_defect).fold(0.0, f64::max)
    }

    pub fn distances_nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_distance <= w[0].sup_distance)
    }

    pub fn sandwich_ok(&self) -> bool {
        self.rows.iter().all(|r| r.sandwich_ok)
    }
}

fn phi_sup(spec: &ProblemSpec, grid: &GridStack) -> f64 {
    let mut sup = 0.0f64;
    for s in 0..grid.n_space() {
        let x = grid.coords(s);
        for iw in 0..grid.n_w() {
            sup = sup.max(spec.phi.eval(&Point::new(grid.horizon, &x, grid.w(iw))).abs());
        }
    }
    sup
}

/// Solve the chain for `n = 1..=N`: exponentiate at `2 lambda`, cut off,
/// regularize to `F^n`, solve for `v^n`, and map back to `u^n`.
pub fn monotone_solve_sequence(spec: &ProblemSpec, grid: &GridStack, cfg: &SolverConfig, mcfg: &MonotoneConfig) -> Result<(Vec<SolutionField>, MonotoneReport)> {
    if mcfg.n_max == 0 {
        return Err(Error::Argument("N must be at least 1".into()));
    }
    let env = spec.envelope.as_ref();
    let lambda = match (mcfg.lambda, env) {
        (Some(l), _) => l,
        (None, Some(e)) => e.lambda,
        (None, None) => return Err(Error::Precondition("monotone scheme needs a growth envelope or an explicit lambda".into())),
    };
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    let m = match (mcfg.bound, env) {
        (Some(m), _) => m,
        (None, Some(e)) => linf_bound(0.0, e.lambda0_sup, e.lambda1, phi_sup(spec, grid), spec.horizon)?,
        (None, None) => return Err(Error::Precondition("monotone scheme needs a growth envelope or an explicit bound".into())),
    };
    let m = m.max(f64::MIN_POSITIVE);
    let two_l = 2.0 * lambda;
    let psi = build_cutoff(lambda, m)?;
    let big_f = exponentiate_driver(spec.f.clone(), two_l, spec);
    let tilde = if mcfg.skip_cutoff { big_f } else { cutoff_driver(big_f, psi) };
    let search = mcfg.search.unwrap_or_else(|| SearchGrid::for_bound(m));
    let phi = spec.phi.clone();
    let v_terminal = scalar_fn(move |pt| (two_l * phi.eval(pt)).exp_m1());
    let approxs: Vec<Arc<dyn Driver>> = (1..=mcfg.n_max)
        .map(|n| sup_convolution(tilde.clone(), n, &search, spec).map(|a| Arc::new(a) as Arc<dyn Driver>))
        .collect::<Result<_>>()?;
    let solved: Vec<(SolutionField, SolutionField)> = approxs
        .into_par_iter()
        .enumerate()
        .map(|(i, fnn)| {
            let mut vspec = spec.clone().with_driver(fnn).with_terminal(v_terminal.clone());
            vspec.envelope = None;
            let v = solve(&vspec, grid, cfg).map_err(|e| Error::Sequence { index: i + 1, source: Box::new(e) })?;
            let u = exp_inverse_field(&v, two_l).map_err(|e| Error::Sequence { index: i + 1, source: Box::new(e) })?;
            Ok((v, u))
        })
        .collect::<Result<_>>()?;
    let lo = (-two_l * (m + 1.0)).exp() - 1.0;
    let hi = (two_l * (m + 1.0)).exp();
    let tol = 10.0 * cfg.picard_tol * (1.0 + hi);
    let last = &solved.last().unwrap().1;
    let mut rows = Vec::with_capacity(solved.len());
    for (i, (v, u)) in solved.iter().enumerate() {
        let (v_min, v_max) = v.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let defect = solved.get(i + 1).map(|(_, next)| {
            next.u.iter().zip(&u.u).map(|(a, b)| a - b).fold(0.0, f64::max)
        });
        rows.push(SequenceRow {
            n: i as u32 + 1,
            sup_distance: u.sup_distance(last)?,
            monotonicity_defect: defect,
            sandwich_ok: v_min >= lo - tol && v_max <= hi + tol,
            v_min,
            v_max,
        });
    }
    let fields = solved.into_iter().map(|(_, u)| u).collect();
    Ok((
        fields,
        MonotoneReport {
            lambda,
            m,
            sandwich: (lo, hi),
            rows,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{driver_fn, GrowthEnvelope};

    #[test]
    fn cutoff_plateaus_and_band() {
        let c = build_cutoff(0.5, 1.0).unwrap();
        assert_eq!(c.value(1.0), 1.0);
        assert_eq!(c.value(c.outer.1 + 1.0), 0.0);
        assert_eq!(c.value(c.outer.0 * 0.5), 0.0);
        assert_eq!(c.value(c.inner.1), 1.0);
        let mid = c.value(0.5 * (c.inner.1 + c.outer.1));
        assert!(mid > 0.0 && mid < 1.0);
        let band: Vec<f64> = (0..=100).map(|i| c.inner.1 + (c.outer.1 - c.inner.1) * i as f64 / 100.0).collect();
        assert!(band.windows(2).all(|w| c.value(w[1]) <= c.value(w[0])));
        assert!(build_cutoff(0.0, 1.0).is_err());
    }

    #[test]
    fn cutoff_second_difference_is_bounded() {
        let c = build_cutoff(0.5, 1.0).unwrap();
        let h = 1e-3;
        let mut worst = 0.0f64;
        let mut z = c.outer.0 - 0.01;
        while z < c.outer.1 + 0.01 {
            let d2 = (c.value(z + h) - 2.0 * c.value(z) + c.value(z - h)) / (h * h);
            worst = worst.max(d2.abs());
            z += 0.37 * h;
        }
        assert!(worst < 1e3, "{worst}");
    }

    #[test]
    fn sup_convolution_examples() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let search = SearchGrid::for_bound(1.0);
        let c = driver_fn(ArgMask { v: true, p: false, r: false }, |_, _, _, _| 2.5);
        let f3 = sup_convolution(c, 3, &search, &spec).unwrap();
        let pt = Point::new(0.0, &[0.5], None);
        assert_eq!(f3.eval(&pt, 0.3, &[0.0], &[0.0]), 2.5 + 0.125);
        let abs = driver_fn(ArgMask { v: true, p: false, r: false }, |_, v, _, _| -v.abs());
        let f1 = sup_convolution(abs, 1, &search, &spec).unwrap();
        assert_eq!(f1.eval(&pt, 0.0, &[0.0], &[0.0]), 0.5);
    }

    #[test]
    fn sup_convolution_is_decreasing_and_above() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let search = SearchGrid::for_bound(1.0);
        let base = driver_fn(ArgMask { v: true, p: true, r: false }, |_, v, p, _| (3.0 * v).sin() - 0.2 * p[0] * p[0]);
        let fs: Vec<_> = (1..=4).map(|n| sup_convolution(base.clone(), n, &search, &spec).unwrap()).collect();
        let pt = Point::new(0.2, &[0.3], None);
        for i in 0..50 {
            let v = -4.0 + 0.16 * i as f64;
            let p = [1.5 - 0.06 * i as f64];
            let b = base.eval(&pt, v, &p, &[0.0]);
            for w in fs.windows(2) {
                assert!(w[1].eval(&pt, v, &p, &[0.0]) <= w[0].eval(&pt, v, &p, &[0.0]));
            }
            assert!(fs[3].eval(&pt, v, &p, &[0.0]) >= b);
        }
    }

    #[test]
    fn unbounded_driver_is_rejected() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let base = driver_fn(ArgMask { v: true, p: false, r: false }, |_, v, _, _| (100.0 * v).exp());
        assert!(matches!(
            sup_convolution(base, 1, &SearchGrid::for_bound(1.0), &spec),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn truncation_clamps() {
        let spec = ProblemSpec::new(1, 1, 1.0);
        let env = GrowthEnvelope::constant(1.0, 0.5, 2.0, 1.0, &spec.domain, 1.0);
        let huge = truncate_generator(driver_fn(ArgMask::NONE, |_, _, _, _| 1e9), &env, 1.0);
        let pt = Point::new(0.0, &[0.5], None);
        assert_eq!(huge.eval(&pt, 2.0, &[1.0], &[0.0]), 1.0 + 1.0 + 2.0);
        let small = truncate_generator(driver_fn(ArgMask::NONE, |_, _, _, _| 0.3), &env, 1.0);
        assert_eq!(small.eval(&pt, 0.0, &[0.0], &[0.0]), 0.3);
    }

    struct HalfSquare;

    impl Driver for HalfSquare {
        fn eval(&self, _: &Point<'_>, _: f64, p: &[f64], _: &[f64]) -> f64 {
            0.5 * p[0] * p[0]
        }
        fn args(&self) -> ArgMask {
            ArgMask { v: false, p: true, r: false }
        }
        fn exponentiated(&self, lambda: f64) -> Option<Arc<dyn Driver>> {
            (lambda == 1.0).then(crate::spec::zero_driver)
        }
    }

    #[test]
    fn offsets_alone_shift_by_geometric_amounts() {
        let spec = ProblemSpec::new(1, 1, 0.2)
            .with_driver(Arc::new(HalfSquare))
            .with_terminal(scalar_fn(|p| 0.2 * (std::f64::consts::PI * p.x[0]).sin()));
        let grid = GridStack::for_spec(&spec, &[21], 1, 0.0, 20).unwrap();
        let mcfg = MonotoneConfig {
            n_max: 4,
            lambda: Some(0.5),
            bound: Some(0.5),
            ..Default::default()
        };
        let (fields, report) = monotone_solve_sequence(&spec, &grid, &SolverConfig::default(), &mcfg).unwrap();
        assert_eq!(fields.len(), 4);
        assert!(report.max_defect() <= 1e-12);
        assert!(report.distances_nonincreasing());
        assert!(report.sandwich_ok());
        for (i, r) in report.rows.iter().enumerate() {
            assert!(r.sup_distance <= 0.5f64.powi(i as i32 + 1) * 0.2 * 1.5);
        }
    }
}
