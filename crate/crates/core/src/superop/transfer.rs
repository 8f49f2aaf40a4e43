//! Discrete-time A-matrices and the band-resolved transfer operator
//! `T X = sum_j A_j X A_j^dag`, used to cross-check continuous-time results.

use crate::banded::BandMatrix;
use crate::error::{LaserError, Result};
use crate::models::CavityOperators;

#[derive(Debug, Clone)]
pub struct TransferSet {
    pub gamma: f64,
    /// `A0 = sqrt(gamma) G`, `a0[n-1]` for `n = 1..D-1` (sub-diagonal).
    pub a0: Vec<f64>,
    /// `A1`, diagonal.
    pub a1: Vec<f64>,
    /// `A2`, identically zero (kept for shape).
    pub a2: Vec<f64>,
    /// `A3 = sqrt(gamma) L`, super-diagonal.
    pub a3: Vec<f64>,
    dim: usize,
}

pub fn build_transfer(ops: &CavityOperators, gamma: f64) -> Result<TransferSet> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(LaserError::InvalidParams(format!(
            "gamma must be >= 0, got {gamma}"
        )));
    }
    let d = ops.dim;
    let sg = gamma.sqrt();
    let mut a1 = Vec::with_capacity(d);
    for n in 0..d {
        let rest = 1.0 - gamma * (ops.gain_occupation(n) + ops.loss_occupation(n));
        if rest < 0.0 {
            return Err(LaserError::GammaTooLarge { gamma, level: n });
        }
        a1.push(rest.sqrt());
    }
    Ok(TransferSet {
        gamma,
        a0: ops.gain.iter().map(|g| sg * g).collect(),
        a1,
        a2: vec![0.0; d],
        a3: ops.loss.iter().map(|l| sg * l).collect(),
        dim: d,
    })
}

impl TransferSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn a0(&self, n: usize) -> f64 {
        if n >= 1 && n < self.dim {
            self.a0[n - 1]
        } else {
            0.0
        }
    }

    #[inline]
    fn a3(&self, n: usize) -> f64 {
        if n >= 1 && n < self.dim {
            self.a3[n - 1]
        } else {
            0.0
        }
    }

    /// Diagonal of `sum_j A_j^dag A_j`; equals one by construction.
    pub fn isometry_diagonal(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|n| {
                self.a0(n + 1).powi(2)
                    + self.a1[n].powi(2)
                    + self.a2[n].powi(2)
                    + self.a3(n).powi(2)
            })
            .collect()
    }

    /// `sqrt(gamma)`-rescaled gain and loss amplitudes.
    pub fn b_operators(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.gamma.sqrt();
        (
            self.a0.iter().map(|a| a / s).collect(),
            self.a3.iter().map(|a| a / s).collect(),
        )
    }

    /// Transfer operator restricted to band `k >= 0`.
    pub fn band_block(&self, k: usize) -> BandMatrix {
        let n = self.dim - k;
        let mut b = BandMatrix::zeros(n, 1.min(n - 1), 1.min(n - 1));
        for m in 0..n {
            b.set(m, m, self.a1[m] * self.a1[m + k]);
            if m >= 1 {
                b.set(m, m - 1, self.a0(m) * self.a0(m + k));
            }
            if m + 1 < n {
                b.set(m, m + 1, self.a3(m + 1) * self.a3(m + k + 1));
            }
        }
        b
    }
}
