//! Full `D^2 x D^2` Liouvillian for small `D`, used only to cross-validate the
//! band decomposition.
//!
//! Row-major flattening: `vec(X)[r * D + c] = X[r, c]`, so
//! `vec(A X B) = (A ⊗ B^T) vec(X)`.

use nalgebra::DMatrix;

use crate::error::{LaserError, Result};
use crate::models::{CavityOperators, Family, ModelParams};

pub const DENSE_DIM_LIMIT: usize = 64;

fn gain_matrix(ops: &CavityOperators) -> DMatrix<f64> {
    let d = ops.dim;
    DMatrix::from_fn(d, d, |r, c| if r == c + 1 { ops.g(r) } else { 0.0 })
}

fn loss_matrix(ops: &CavityOperators) -> DMatrix<f64> {
    let d = ops.dim;
    DMatrix::from_fn(d, d, |r, c| if c == r + 1 { ops.l(c) } else { 0.0 })
}

/// `D[c]` as a flattened-space matrix.
pub fn dense_dissipator(c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = c.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let cdc = c.transpose() * c;
    c.kronecker(c) - (cdc.kronecker(&id) + id.kronecker(&cdc.transpose())) * 0.5
}

pub fn dense_oracle(ops: &CavityOperators, params: &ModelParams) -> Result<DMatrix<f64>> {
    let d = params.dim;
    if d > DENSE_DIM_LIMIT {
        return Err(LaserError::DimensionTooLarge {
            dim: d,
            limit: DENSE_DIM_LIMIT,
        });
    }
    if ops.dim != d {
        return Err(LaserError::InconsistentInputs(format!(
            "operators have dimension {} but params ask for {d}",
            ops.dim
        )));
    }
    let dg = dense_dissipator(&gain_matrix(ops));
    let dl = dense_dissipator(&loss_matrix(ops));
    Ok(match params.family {
        Family::P | Family::PLambda => dg + dl,
        Family::PQ => &dg + &dg * &dg * (params.q / 2.0) + dl,
    })
}

/// Flattened index of the `i`-th element of band `k`.
pub fn band_index(dim: usize, k: i64, i: usize) -> usize {
    if k >= 0 {
        i * dim + i + k as usize
    } else {
        (i + k.unsigned_abs() as usize) * dim + i
    }
}

/// Restriction of a flattened-space matrix to band `k`.
pub fn extract_band(m: &DMatrix<f64>, dim: usize, k: i64) -> DMatrix<f64> {
    let n = dim - k.unsigned_abs() as usize;
    DMatrix::from_fn(n, n, |i, j| {
        m[(band_index(dim, k, i), band_index(dim, k, j))]
    })
}

/// Observables evaluated directly in the flattened space.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    pub dim: usize,
    pub liouvillian: DMatrix<f64>,
    pub rho: DMatrix<f64>,
    pub flux: f64,
    loss: DMatrix<f64>,
    /// `(L - vec(rho) vec(I)^T)^{-1}`.
    group_inverse: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(ops: &CavityOperators, params: &ModelParams) -> Result<Self> {
        let d = params.dim;
        let liouvillian = dense_oracle(ops, params)?;
        let n = d * d;
        let trace_row = DMatrix::from_fn(1, n, |_, j| if j / d == j % d { 1.0 } else { 0.0 });

        // steady state: replace one equation by the trace condition
        let mut sys = liouvillian.clone();
        sys.set_row(0, &trace_row.row(0));
        let mut rhs = nalgebra::DVector::zeros(n);
        rhs[0] = 1.0;
        let vec_rho = sys.lu().solve(&rhs).ok_or_else(|| {
            LaserError::DegenerateKernel("dense steady-state system is singular".into())
        })?;
        let rho = DMatrix::from_fn(d, d, |r, c| vec_rho[r * d + c]);

        let loss = loss_matrix(ops);
        let ldl = loss.transpose() * &loss;
        let flux = (&ldl * &rho).trace();

        let shifted = &liouvillian - &vec_rho * &trace_row;
        let group_inverse = shifted
            .try_inverse()
            .ok_or_else(|| LaserError::DegenerateKernel("dense group inverse failed".into()))?;
        Ok(Self {
            dim: d,
            liouvillian,
            rho,
            flux,
            loss,
            group_inverse,
        })
    }

    fn vec(&self, x: &DMatrix<f64>) -> nalgebra::DVector<f64> {
        let d = self.dim;
        nalgebra::DVector::from_fn(d * d, |i, _| x[(i / d, i % d)])
    }

    fn unvec(&self, v: &nalgebra::DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |r, c| v[r * d + c])
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|n| self.rho[(n, n)]).collect()
    }

    /// `-2 Tr[L^dag inv(QLQ) (L rho)]`.
    pub fn coherence(&self) -> f64 {
        let v = self.vec(&(&self.loss * &self.rho));
        let y = self.unvec(&(&self.group_inverse * v));
        -2.0 * (self.loss.transpose() * y).trace()
    }

    pub fn mandel_q(&self) -> f64 {
        let j = &self.loss * &self.rho * self.loss.transpose();
        let chi = self.vec(&(j - &self.rho * self.flux));
        let y = self.unvec(&(&self.group_inverse * chi));
        let jy = &self.loss * y * self.loss.transpose();
        -2.0 / self.flux * jy.trace()
    }

    fn propagate(&self, x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        if t == 0.0 {
            return x.clone();
        }
        let e = (&self.liouvillian * t).exp();
        self.unvec(&(e * self.vec(x)))
    }

    /// Normalised `g1(s, 0)`, `s >= 0`.
    pub fn g1(&self, s: f64) -> f64 {
        let x = self.propagate(&(&self.loss * &self.rho), s);
        (x * self.loss.transpose()).trace() / self.flux
    }

    /// Normalised `<b^dag(s) b^dag(s') b(t') b(t)>` for any time ordering.
    pub fn g2(&self, s: f64, s2: f64, t2: f64, t: f64) -> f64 {
        // (time, annihilation?)
        let mut events = [(s, false), (s2, false), (t2, true), (t, true)];
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut x = self.rho.clone();
        let mut now = events[0].0;
        for &(time, annihilate) in &events {
            x = self.propagate(&x, time - now);
            now = time;
            x = if annihilate {
                &self.loss * x
            } else {
                x * self.loss.transpose()
            };
        }
        x.trace() / (self.flux * self.flux)
    }
}
