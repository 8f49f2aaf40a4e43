//! Action of `exp(t A)` on vectors for a banded generator `A`.
//!
//! Time is split as `t = h0 (n + f)` with `0 <= f < 1` and `|A| h0 <= 1/2`.
//! The fractional part uses a truncated Taylor series on the band matrix; the
//! integer part applies cached dense powers `E_j = exp(2^j h0 A)`, one per set
//! bit of `n`. The cache grows on demand and is shared across threads.

use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};

use crate::banded::BandMatrix;
use crate::error::{LaserError, Result};

const MAX_DOUBLINGS: usize = 60;
const TAYLOR_TOL: f64 = 1e-18;

pub struct Propagator {
    a: BandMatrix,
    h0: f64,
    table: RwLock<Vec<DMatrix<f64>>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("dim", &self.a.dim())
            .field("h0", &self.h0)
            .finish()
    }
}

/// `exp(t A) v` by Taylor series; intended for `|t A| <= 1/2`.
pub fn taylor_action(a: &BandMatrix, t: f64, v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    if t == 0.0 {
        return out;
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut term = v.to_vec();
    let mut buf = vec![0.0; v.len()];
    for k in 1..=40 {
        a.matvec_into(&term, &mut buf);
        let f = t / k as f64;
        let mut mag = 0.0f64;
        for (ti, bi) in term.iter_mut().zip(&buf) {
            *ti = bi * f;
            mag = mag.max(ti.abs());
        }
        out.iter_mut().zip(&term).for_each(|(o, ti)| *o += ti);
        if mag <= TAYLOR_TOL * scale {
            break;
        }
    }
    out
}

impl Propagator {
    pub fn new(a: BandMatrix) -> Self {
        let norm = a.norm_inf().max(a.norm_one());
        let mut h0 = 1.0;
        while norm * h0 > 0.5 {
            h0 /= 2.0;
        }
        Self {
            a,
            h0,
            table: RwLock::new(Vec::new()),
        }
    }

    pub fn generator(&self) -> &BandMatrix {
        &self.a
    }

    pub fn base_step(&self) -> f64 {
        self.h0
    }

    fn base_matrix(&self) -> DMatrix<f64> {
        let n = self.a.dim();
        // exp(h0 A) column by column through the same Taylor action
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = taylor_action(&self.a, self.h0, &e);
            e[j] = 0.0;
            m.set_column(j, &DVector::from_vec(col));
        }
        m
    }

    fn ensure_levels(&self, levels: usize) {
        if self.table.read().expect("propagator cache poisoned").len() >= levels {
            return;
        }
        let mut table = self.table.write().expect("propagator cache poisoned");
        if table.is_empty() {
            table.push(self.base_matrix());
        }
        while table.len() < levels {
            let last = table.last().expect("non-empty");
            let next = last * last;
            table.push(next);
        }
    }

    /// `exp(t A) v` for `t >= 0`.
    pub fn apply(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(LaserError::ExpmTolFailure(format!(
                "time must be finite and >= 0, got {t}"
            )));
        }
        let steps = t / self.h0;
        let whole = steps.floor();
        if whole >= 2f64.powi(MAX_DOUBLINGS as i32) {
            return Err(LaserError::ExpmTolFailure(format!(
                "time {t} too long for the step table"
            )));
        }
        let frac = t - whole * self.h0;
        let mut x = taylor_action(&self.a, frac, v);
        let mut n = whole as u64;
        if n > 0 {
            let levels = 64 - n.leading_zeros() as usize;
            self.ensure_levels(levels);
            let table = self.table.read().expect("propagator cache poisoned");
            let mut j = 0;
            while n > 0 {
                if n & 1 == 1 {
                    let y = &table[j] * DVector::from_column_slice(&x);
                    x = y.as_slice().to_vec();
                }
                n >>= 1;
                j += 1;
            }
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(LaserError::ExpmTolFailure(format!(
                "non-finite result at t = {t}"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_exp(a: &BandMatrix, t: f64) -> DMatrix<f64> {
        let d = a.to_dense();
        let n = d.len();
        let m = DMatrix::from_fn(n, n, |i, j| d[i][j] * t);
        m.exp()
    }

    fn generator(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, -1.0 - 0.1 * i as f64);
            if i > 0 {
                a.set(i, i - 1, 0.4);
            }
            if i + 1 < n {
                a.set(i, i + 1, 0.3 + 0.01 * i as f64);
            }
        }
        a
    }

    #[test]
    fn matches_dense_exponential() {
        let a = generator(9);
        let p = Propagator::new(a.clone());
        let v: Vec<f64> = (0..9).map(|i| 1.0 / (1.0 + i as f64)).collect();
        for &t in &[0.0, 0.01, 0.37, 1.0, 3.3, 17.25] {
            let got = p.apply(t, &v).unwrap();
            let want = dense_exp(&a, t) * DVector::from_vec(v.clone());
            let err = got
                .iter()
                .zip(want.iter())
                .fold(0.0f64, |m, (g, w)| m.max((g - w).abs()));
            assert!(err < 1e-12, "t={t} err={err:e}");
        }
    }

    #[test]
    fn semigroup_property() {
        let a = generator(12);
        let p = Propagator::new(a);
        let v = vec![1.0; 12];
        let once = p.apply(5.75, &v).unwrap();
        let twice = p.apply(2.5, &p.apply(3.25, &v).unwrap()).unwrap();
        for (x, y) in once.iter().zip(&twice) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_negative_time() {
        let p = Propagator::new(generator(3));
        assert!(matches!(
            p.apply(-1.0, &[1.0; 3]),
            Err(LaserError::ExpmTolFailure(_))
        ));
    }
}
