//! Grids and the conservative spatial operator.
//!
//! Nodes are ordered space-major with the noise coordinate fastest:
//! `node = s * n_w + iw`, where `s` is the row-major index over the space
//! axes (axis 0 slowest).

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::spec::{BoxDomain, CoefficientMode, Point, ProblemSpec};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl SpaceAxis {
    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.dx()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseAxis {
    pub w_max: f64,
    pub n: usize,
}

impl NoiseAxis {
    pub fn dw(&self) -> f64 {
        2.0 * self.w_max / (self.n - 1) as f64
    }
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.w_max
        } else {
            -self.w_max + i as f64 * self.dw()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridStack {
    pub space: Vec<SpaceAxis>,
    pub noise: Option<NoiseAxis>,
    pub horizon: f64,
    pub n_t: usize,
}

impl GridStack {
    pub fn new(domain: &BoxDomain, nx: &[usize], noise: Option<(usize, f64)>, horizon: f64, n_t: usize) -> Result<Self> {
        if nx.len() != domain.dim() {
            return Err(Error::Dimension {
                what: "grid axes",
                expected: domain.dim(),
                got: nx.len(),
            });
        }
        if nx.iter().any(|&n| n < 3) {
            return Err(Error::Grid(format!("every space axis needs at least 3 nodes, got {nx:?}")));
        }
        if domain.lo.iter().zip(&domain.hi).any(|(l, h)| !(h > l)) {
            return Err(Error::Grid("empty domain".into()));
        }
        if !(horizon > 0.0) || n_t == 0 {
            return Err(Error::Grid(format!("need horizon > 0 and n_t >= 1, got {horizon}, {n_t}")));
        }
        let noise = match noise {
            Some((n, w_max)) => {
                if n < 3 || !(w_max > 0.0) {
                    return Err(Error::Grid(format!("noise axis needs n_w >= 3 and w_max > 0, got {n}, {w_max}")));
                }
                Some(NoiseAxis { w_max, n })
            }
            None => None,
        };
        Ok(GridStack {
            space: domain
                .lo
                .iter()
                .zip(&domain.hi)
                .zip(nx)
                .map(|((&lo, &hi), &n)| SpaceAxis { lo, hi, n })
                .collect(),
            noise,
            horizon,
            n_t,
        })
    }

    /// Grid for a spec: adds the noise axis in lift mode.
    pub fn for_spec(spec: &ProblemSpec, nx: &[usize], n_w: usize, w_max: f64, n_t: usize) -> Result<Self> {
        let noise = (spec.mode == CoefficientMode::MarkovianLift).then_some((n_w, w_max));
        GridStack::new(&spec.domain, nx, noise, spec.horizon, n_t)
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }
    pub fn n_space(&self) -> usize {
        self.space.iter().map(|a| a.n).product()
    }
    pub fn n_w(&self) -> usize {
        self.noise.as_ref().map_or(1, |a| a.n)
    }
    pub fn n_nodes(&self) -> usize {
        self.n_space() * self.n_w()
    }
    pub fn n_levels(&self) -> usize {
        self.n_t + 1
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }
    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_t {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
    pub fn w(&self, iw: usize) -> Option<f64> {
        self.noise.as_ref().map(|a| a.coord(iw))
    }
    pub fn cell_volume(&self) -> f64 {
        self.space.iter().map(|a| a.dx()).product()
    }

    /// Stride of space axis `k` in the node ordering.
    pub fn stride(&self, k: usize) -> usize {
        self.space[k + 1..].iter().map(|a| a.n).product::<usize>() * self.n_w()
    }

    pub fn multi_index(&self, s: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rem = s;
        for k in (0..self.dim()).rev() {
            idx[k] = rem % self.space[k].n;
            rem /= self.space[k].n;
        }
        idx
    }

    pub fn coords(&self, s: usize) -> Vec<f64> {
        self.multi_index(s)
            .iter()
            .zip(&self.space)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    pub fn is_boundary(&self, s: usize) -> bool {
        self.multi_index(s)
            .iter()
            .zip(&self.space)
            .any(|(&i, a)| i == 0 || i + 1 == a.n)
    }

    pub fn boundary_set(&self) -> Vec<usize> {
        (0..self.n_space()).filter(|&s| self.is_boundary(s)).collect()
    }

    pub fn interior_set(&self) -> Vec<usize> {
        (0..self.n_space()).filter(|&s| !self.is_boundary(s)).collect()
    }

    /// Band half-width needed by the operators on this grid.
    pub fn bandwidth(&self) -> usize {
        let space: usize = (0..self.dim()).map(|k| self.stride(k)).sum();
        if self.noise.is_some() {
            space + 2
        } else {
            space
        }
    }

    pub fn same_shape(&self, other: &GridStack) -> bool {
        self == other
    }
}

/// Discrete pair `(u, q)` over `(time, space[, noise])`.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub grid: GridStack,
    pub mode: CoefficientMode,
    pub d0: usize,
    /// `n_levels * n_nodes` values, level-major.
    pub u: Vec<f64>,
    /// `n_levels * n_nodes * d0` values.
    pub q: Vec<f64>,
    /// Picard sweeps used at each time level (0 at the terminal level).
    pub picard_iters: Vec<usize>,
    /// Largest `|U_w|` on the noise boundary, lift mode only.
    pub w_boundary_slope: Option<f64>,
}

impl SolutionField {
    pub fn zeros(grid: GridStack, mode: CoefficientMode, d0: usize) -> Self {
        let n = grid.n_levels() * grid.n_nodes();
        SolutionField {
            u: vec![0.0; n],
            q: vec![0.0; n * d0],
            picard_iters: vec![0; grid.n_levels()],
            grid,
            mode,
            d0,
            w_boundary_slope: None,
        }
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.u[k * n..(k + 1) * n]
    }
    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_nodes();
        &mut self.u[k * n..(k + 1) * n]
    }
    pub fn q_level(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes() * self.d0;
        &self.q[k * n..(k + 1) * n]
    }
    pub fn q_level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_nodes() * self.d0;
        &mut self.q[k * n..(k + 1) * n]
    }

    pub fn u_at(&self, k: usize, s: usize, iw: usize) -> f64 {
        self.level(k)[s * self.grid.n_w() + iw]
    }

    /// Space slice of level `k` at noise index `iw`.
    pub fn space_slice(&self, k: usize, iw: usize) -> Vec<f64> {
        let nw = self.grid.n_w();
        self.level(k).iter().skip(iw).step_by(nw).copied().collect()
    }

    /// Largest absolute nodewise difference.
    pub fn sup_distance(&self, other: &SolutionField) -> Result<f64> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::Grid("solutions live on different grids".into()));
        }
        Ok(self
            .u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Interior rows of `u -> (a u_x)_x` (and, in lift mode, the noise part
/// `1/2 U_ww + (sigma U_w)_x`); rows of boundary nodes are left empty.
pub(crate) fn assemble_interior(spec: &ProblemSpec, grid: &GridStack, t: f64, include_noise: bool) -> BandMatrix {
    let d = grid.dim();
    let nw = grid.n_w();
    let bw = grid.bandwidth();
    let mut m = BandMatrix::zeros(grid.n_nodes(), bw, bw);
    let n_space = grid.n_space();
    let mut a_buf = vec![0.0; d * d];
    let mut s_buf = vec![0.0; d * spec.d0];
    // nodal coefficient tables
    let mut a_tab = vec![0.0; grid.n_nodes() * d * d];
    let mut s_tab = vec![0.0; grid.n_nodes() * d * spec.d0];
    let sigma_zero = spec.sigma.is_zero();
    for s in 0..n_space {
        let x = grid.coords(s);
        for iw in 0..nw {
            let node = s * nw + iw;
            let pt = Point::new(t, &x, grid.w(iw));
            spec.a.eval_into(&pt, &mut a_buf);
            a_tab[node * d * d..(node + 1) * d * d].copy_from_slice(&a_buf);
            if include_noise && !sigma_zero {
                spec.sigma.eval_into(&pt, &mut s_buf);
                s_tab[node * d * spec.d0..(node + 1) * d * spec.d0].copy_from_slice(&s_buf);
            }
        }
    }
    let a_of = |node: usize, i: usize, j: usize| a_tab[node * d * d + i * d + j];
    for s in 0..n_space {
        if grid.is_boundary(s) {
            continue;
        }
        for iw in 0..nw {
            let node = s * nw + iw;
            let noise_edge = include_noise && (iw == 0 || iw + 1 == nw);
            if noise_edge {
                continue;
            }
            for k in 0..d {
                let hk = grid.space[k].dx();
                let sk = grid.stride(k);
                let (up, dn) = (node + sk, node - sk);
                let a_up = 0.5 * (a_of(node, k, k) + a_of(up, k, k));
                let a_dn = 0.5 * (a_of(node, k, k) + a_of(dn, k, k));
                let c = 1.0 / (hk * hk);
                m.add(node, up, a_up * c);
                m.add(node, dn, a_dn * c);
                m.add(node, node, -(a_up + a_dn) * c);
                for l in 0..d {
                    if l == k {
                        continue;
                    }
                    let hl = grid.space[l].dx();
                    let sl = grid.stride(l);
                    let c = 1.0 / (4.0 * hk * hl);
                    let a_up = a_of(up, k, l);
                    let a_dn = a_of(dn, k, l);
                    m.add(node, up + sl, a_up * c);
                    m.add(node, up - sl, -a_up * c);
                    m.add(node, dn + sl, -a_dn * c);
                    m.add(node, dn - sl, a_dn * c);
                }
            }
            if include_noise {
                let dw = grid.noise.as_ref().unwrap().dw();
                let c = 0.5 / (dw * dw);
                m.add(node, node + 1, c);
                m.add(node, node - 1, c);
                m.add(node, node, -2.0 * c);
                if !sigma_zero {
                    for k in 0..d {
                        let hk = grid.space[k].dx();
                        let sk = grid.stride(k);
                        let c = 1.0 / (4.0 * hk * dw);
                        let s_up = s_tab[(node + sk) * d * spec.d0 + k * spec.d0];
                        let s_dn = s_tab[(node - sk) * d * spec.d0 + k * spec.d0];
                        m.add(node, node + sk + 1, s_up * c);
                        m.add(node, node + sk - 1, -s_up * c);
                        m.add(node, node - sk + 1, -s_dn * c);
                        m.add(node, node - sk - 1, s_dn * c);
                    }
                }
            }
        }
    }
    m
}

/// The discrete map `u -> (a u_x)_x` in flux form with arithmetic half-node
/// averages; boundary rows are the identity.
pub fn assemble_divergence_operator(spec: &ProblemSpec, grid: &GridStack, t: f64) -> Result<BandMatrix> {
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(Error::Argument(format!("t = {t} outside [0, {}]", spec.horizon)));
    }
    let mut m = assemble_interior(spec, grid, t, false);
    let nw = grid.n_w();
    for s in grid.boundary_set() {
        for iw in 0..nw {
            let node = s * nw + iw;
            m.clear_row(node);
            m.set(node, node, 1.0);
        }
    }
    Ok(m)
}

/// Central-difference divergence of `sigma q`, zero on boundary rows.
/// `q` holds `d0` components per node.
pub fn apply_sigma_div(spec: &ProblemSpec, grid: &GridStack, t: f64, q: &[f64]) -> Result<Vec<f64>> {
    let n = grid.n_nodes();
    let d = grid.dim();
    let d0 = spec.d0;
    if q.len() != n * d0 {
        return Err(Error::Dimension {
            what: "q field",
            expected: n * d0,
            got: q.len(),
        });
    }
    let mut out = vec![0.0; n];
    if spec.sigma.is_zero() {
        return Ok(out);
    }
    let nw = grid.n_w();
    // flux components g_k = sigma^{kj} q^j at every node
    let mut flux = vec![0.0; n * d];
    let mut s_buf = vec![0.0; d * d0];
    for s in 0..grid.n_space() {
        let x = grid.coords(s);
        for iw in 0..nw {
            let node = s * nw + iw;
            spec.sigma.eval_into(&Point::new(t, &x, grid.w(iw)), &mut s_buf);
            for k in 0..d {
                flux[node * d + k] = (0..d0).map(|j| s_buf[k * d0 + j] * q[node * d0 + j]).sum();
            }
        }
    }
    for s in grid.interior_set() {
        for iw in 0..nw {
            let node = s * nw + iw;
            out[node] = (0..d)
                .map(|k| {
                    let sk = grid.stride(k);
                    (flux[(node + sk) * d + k] - flux[(node - sk) * d + k]) / (2.0 * grid.space[k].dx())
                })
                .sum();
        }
    }
    Ok(out)
}

impl GridStack {
    /// Same space axes and time grid without the noise axis.
    pub fn space_only(&self) -> GridStack {
        GridStack {
            noise: None,
            ..self.clone()
        }
    }
}

/// `(a u_x)_x` on a space-only field with coefficients frozen at noise value
/// `w`; flux form, zero on boundary rows.
pub(crate) fn divergence_apply(spec: &ProblemSpec, grid: &GridStack, t: f64, w: Option<f64>, u: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.n_space();
    let mut a_tab = vec![0.0; n * d * d];
    for s in 0..n {
        let x = grid.coords(s);
        spec.a.eval_into(&Point::new(t, &x, w), &mut a_tab[s * d * d..(s + 1) * d * d]);
    }
    let a_of = |s: usize, i: usize, j: usize| a_tab[s * d * d + i * d + j];
    let stride = |k: usize| grid.space[k + 1..].iter().map(|a| a.n).product::<usize>();
    let mut out = vec![0.0; n];
    for s in grid.interior_set() {
        let mut acc = 0.0;
        for k in 0..d {
            let hk = grid.space[k].dx();
            let sk = stride(k);
            let (up, dn) = (s + sk, s - sk);
            let a_up = 0.5 * (a_of(s, k, k) + a_of(up, k, k));
            let a_dn = 0.5 * (a_of(s, k, k) + a_of(dn, k, k));
            acc += (a_up * (u[up] - u[s]) - a_dn * (u[s] - u[dn])) / (hk * hk);
            for l in 0..d {
                if l == k {
                    continue;
                }
                let hl = grid.space[l].dx();
                let sl = stride(l);
                acc += (a_of(up, k, l) * (u[up + sl] - u[up - sl]) - a_of(dn, k, l) * (u[dn + sl] - u[dn - sl]))
                    / (4.0 * hk * hl);
            }
        }
        out[s] = acc;
    }
    out
}

/// `(sigma q)_x` on a space-only field at noise value `w`, central
/// differences, zero on boundary rows.
pub(crate) fn sigma_div_apply(spec: &ProblemSpec, grid: &GridStack, t: f64, w: Option<f64>, q: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let d0 = spec.d0;
    let n = grid.n_space();
    let mut out = vec![0.0; n];
    if spec.sigma.is_zero() {
        return out;
    }
    let mut flux = vec![0.0; n * d];
    let mut sb = vec![0.0; d * d0];
    for s in 0..n {
        let x = grid.coords(s);
        spec.sigma.eval_into(&Point::new(t, &x, w), &mut sb);
        for k in 0..d {
            flux[s * d + k] = (0..d0).map(|j| sb[k * d0 + j] * q[s * d0 + j]).sum();
        }
    }
    let stride = |k: usize| grid.space[k + 1..].iter().map(|a| a.n).product::<usize>();
    for s in grid.interior_set() {
        out[s] = (0..d)
            .map(|k| (flux[(s + stride(k)) * d + k] - flux[(s - stride(k)) * d + k]) / (2.0 * grid.space[k].dx()))
            .sum();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridNorms {
    pub sup: f64,
    pub l2: f64,
    pub h1_seminorm: f64,
}

/// Discrete norms of a space field (`n_space` values).
pub fn grid_norms(field: &[f64], grid: &GridStack) -> Result<GridNorms> {
    let n = grid.n_space();
    if field.len() != n {
        return Err(Error::Dimension {
            what: "space field",
            expected: n,
            got: field.len(),
        });
    }
    let vol = grid.cell_volume();
    let sup = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = (field.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
    Ok(GridNorms {
        sup,
        l2,
        h1_seminorm: h1_sq(field, grid).sqrt(),
    })
}

/// `sum over edges ((u_+ - u)/dx)^2 * cell volume`, all axes.
pub(crate) fn h1_sq(field: &[f64], grid: &GridStack) -> f64 {
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    let nw = grid.n_w();
    for k in 0..grid.dim() {
        let h = grid.space[k].dx();
        let sk = grid.stride(k) / nw;
        for s in 0..field.len() {
            if grid.multi_index(s)[k] + 1 < grid.space[k].n {
                let g = (field[s + sk] - field[s]) / h;
                acc += g * g;
            }
        }
    }
    acc * vol
}
