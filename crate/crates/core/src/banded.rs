//! Square band matrices with row-major diagonal storage and a partial-pivoting
//! LU factorization.
//!
//! Entry `(i, j)` with `-kl <= j - i <= ku` lives at `data[i * w + (j - i + kl)]`
//! where `w = kl + ku + 1`.

use crate::error::{LaserError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.data.iter_mut().for_each(|x| *x = 1.0);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn lower(&self) -> usize {
        self.kl
    }

    #[inline]
    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    /// Entry `(i, j)`, zero outside the stored band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + (j + self.kl - i)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` is outside the stored band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] += v;
    }

    /// Column range `[lo, hi)` of the stored band in row `i`.
    #[inline]
    fn row_span(&self, i: usize) -> (usize, usize) {
        (i.saturating_sub(self.kl), (i + self.ku + 1).min(self.n))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = self.width();
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = self.row_span(i);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in lo..hi {
                acc += row[j + self.kl - i] * x[j];
            }
            *yi = acc;
        }
    }

    /// `x^T A`.
    pub fn vecmat(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        let w = self.width();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (lo, hi) = self.row_span(i);
            for j in lo..hi {
                y[j] += xi * self.data[i * w + (j + self.kl - i)];
            }
        }
        y
    }

    /// `A B`, band widths add.
    pub fn matmul(&self, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = BandMatrix::zeros(
            n,
            (self.kl + other.kl).min(n - 1),
            (self.ku + other.ku).min(n - 1),
        );
        for i in 0..n {
            let (lo, hi) = self.row_span(i);
            for k in lo..hi {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let (lo2, hi2) = other.row_span(k);
                for j in lo2..hi2 {
                    out.add(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// `self + s * other` with the union band shape.
    pub fn add_scaled(&self, s: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for i in 0..self.n {
            let (lo, hi) = self.row_span(i);
            for j in lo..hi {
                out.add(i, j, self.get(i, j));
            }
            let (lo, hi) = other.row_span(i);
            for j in lo..hi {
                out.add(i, j, s * other.get(i, j));
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let (lo, hi) = self.row_span(i);
                (lo..hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.n];
        for i in 0..self.n {
            let (lo, hi) = self.row_span(i);
            for j in lo..hi {
                cols[j] += self.get(i, j).abs();
            }
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }

    /// Solve `A x = b` with one round of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.lu()?.solve_refined(self, b)
    }
}

/// LU factors of a [`BandMatrix`], LINPACK layout: multipliers stay in the
/// column where they were produced and row swaps are replayed during the solve.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `r` holds columns `r - kl ..= r + kl + ku`.
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    const PIVOT_RATIO: f64 = 1e-15;

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.width() + (c + self.kl - r)
    }

    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        let mut lu = BandLu {
            n,
            kl,
            ku,
            data: vec![0.0; n * (2 * kl + ku + 1)],
            piv: vec![0; n],
        };
        for i in 0..n {
            let (lo, hi) = a.row_span(i);
            for j in lo..hi {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }
        let scale = a.max_abs();
        if scale == 0.0 || !scale.is_finite() {
            return Err(LaserError::SingularMatrix(
                "zero or non-finite matrix".into(),
            ));
        }
        let tol = Self::PIVOT_RATIO * scale;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for r in k + 1..=last_row {
                let v = lu.data[lu.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol || !best.is_finite() {
                return Err(LaserError::SingularMatrix(format!(
                    "pivot {best:e} at column {k} below {tol:e}"
                )));
            }
            lu.piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (lu.idx(k, c), lu.idx(p, c));
                    lu.data.swap(a, b);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for r in k + 1..=last_row {
                let ir = lu.idx(r, k);
                let m = lu.data[ir] / pivot;
                lu.data[ir] = m;
                if m == 0.0 {
                    continue;
                }
                for c in k + 1..=last_col {
                    let kc = lu.idx(k, c);
                    let rc = lu.idx(r, c);
                    lu.data[rc] -= m * lu.data[kc];
                }
            }
        }
        Ok(lu)
    }

    /// Smallest/largest `|u_kk|`, a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let piv: Vec<f64> = (0..self.n)
            .map(|k| self.data[self.idx(k, k)].abs())
            .collect();
        let max = piv.iter().cloned().fold(0.0, f64::max);
        let min = piv.iter().cloned().fold(f64::INFINITY, f64::min);
        min / max
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    x[r] -= self.data[self.idx(r, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for c in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                acc -= self.data[self.idx(k, c)] * x[c];
            }
            x[k] = acc / self.data[self.idx(k, k)];
        }
        x
    }

    pub fn solve_refined(&self, a: &BandMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve(b);
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(LaserError::SingularMatrix("non-finite solution".into()))
        }
    }
}
