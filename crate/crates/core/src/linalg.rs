//! Banded storage, banded LU with partial pivoting, and small dense helpers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Square band matrix with `kl` sub- and `ku` super-diagonals, row-major.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[s] = v;
    }

    pub fn clear_row(&mut self, i: usize) {
        let w = self.kl + self.ku + 1;
        self.data[i * w..(i + 1) * w].fill(0.0);
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).map(move |j| (j, self.get(i, j)))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row_entries(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    /// `self * alpha + I * beta` restricted to the given rows.
    pub fn scaled_shift(&self, alpha: f64, beta: f64) -> BandMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= alpha);
        for i in 0..self.n {
            out.add(i, i, beta);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }
}

/// LU factors of a band matrix; the upper factor has bandwidth `ku + kl`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn new(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku_f = a.ku + a.kl;
        let width = kl + ku_f + 1;
        let mut lu = BandLu {
            n,
            kl,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for i in 0..n {
            for (j, v) in a.row_entries(i) {
                let s = lu.idx(i, j);
                lu.data[s] = v;
            }
        }
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku_f).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.data[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Precondition(format!(
                    "singular system matrix at row {k}"
                )));
            }
            lu.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (s1, s2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.data.swap(s1, s2);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let s = lu.idx(i, k);
                let l = lu.data[s] / pivot;
                lu.data[s] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let (t, u) = (lu.idx(i, j), lu.idx(k, j));
                        lu.data[t] -= l * lu.data[u];
                    }
                }
            }
        }
        Ok(lu)
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let ku_f = self.width - 1 - self.kl;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku_f).min(n - 1) {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let e = m.clone().symmetric_eigen().eigenvalues;
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Least squares fit through the normal equations with a Cholesky solve.
/// Returns `None` when the Gram matrix is numerically singular.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let gram = design.transpose() * design;
    let scale = gram.diagonal().iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let chol = gram.clone().cholesky()?;
    let l = chol.l();
    let min_pivot = l.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 * scale {
        return None;
    }
    Some(chol.solve(&(design.transpose() * y)))
}
