//! Band-resolved Liouvillians.
//!
//! Every jump operator in the three families sits on a single off-diagonal of
//! the cavity number basis, so the Liouvillian never mixes matrix elements with
//! different `c - r`. A band-`k` vector stores the elements `(r, c)` with
//! `c - r = k`, indexed by `min(r, c)`, and has length `D - |k|`. Blocks for
//! `k` and `-k` coincide because all amplitudes are real.

pub mod dense;
pub mod transfer;

use std::sync::OnceLock;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{LaserError, Result};
use crate::expm::Propagator;
use crate::models::{build_operators, CavityOperators, Family, ModelParams};

pub use dense::{dense_oracle, DenseOracle, DENSE_DIM_LIMIT};
pub use transfer::{build_transfer, TransferSet};

pub const DEFAULT_MAX_BAND: usize = 2;

/// `D[G]` restricted to band `k >= 0`: lower bidiagonal.
pub fn gain_dissipator(ops: &CavityOperators, k: usize) -> BandMatrix {
    let n = ops.dim - k;
    let mut b = BandMatrix::zeros(n, 1.min(n - 1), 0);
    for m in 0..n {
        b.set(
            m,
            m,
            -0.5 * (ops.gain_occupation(m) + ops.gain_occupation(m + k)),
        );
        if m >= 1 {
            b.set(m, m - 1, ops.g(m) * ops.g(m + k));
        }
    }
    b
}

/// `D[L]` restricted to band `k >= 0`: upper bidiagonal.
pub fn loss_dissipator(ops: &CavityOperators, k: usize) -> BandMatrix {
    let n = ops.dim - k;
    let mut b = BandMatrix::zeros(n, 0, 1.min(n - 1));
    for m in 0..n {
        b.set(
            m,
            m,
            -0.5 * (ops.loss_occupation(m) + ops.loss_occupation(m + k)),
        );
        if m + 1 < n {
            b.set(m, m + 1, ops.l(m + 1) * ops.l(m + k + 1));
        }
    }
    b
}

/// `D[Pi_top]` restricted to band `k >= 0`: diagonal.
pub fn top_projector_dissipator(dim: usize, k: usize) -> BandMatrix {
    let n = dim - k;
    let top = dim - 1;
    let mut b = BandMatrix::zeros(n, 0, 0);
    for m in 0..n {
        let (r, c) = (m, m + k);
        let pr = (r == top) as u8 as f64;
        let pc = (c == top) as u8 as f64;
        b.set(m, m, pr * pc - 0.5 * (pr + pc));
    }
    b
}

/// The family Liouvillian on band `k >= 0`.
pub fn family_block(ops: &CavityOperators, params: &ModelParams, k: usize) -> BandMatrix {
    let g = gain_dissipator(ops, k);
    let l = loss_dissipator(ops, k);
    let base = g.add_scaled(1.0, &l);
    match params.family {
        Family::P | Family::PLambda => base,
        Family::PQ => base.add_scaled(params.q / 2.0, &g.matmul(&g)),
    }
}

/// Deflated band-0 system `L0 + c e_j e_j^T`, nonsingular iff the kernel of
/// `L0` is one-dimensional.
#[derive(Debug, Clone)]
pub struct DeflatedBand0 {
    matrix: BandMatrix,
    lu: BandLu,
    pivot: usize,
}

impl DeflatedBand0 {
    pub fn new(block0: &BandMatrix, pivot: usize) -> Result<Self> {
        let shift = block0.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if shift == 0.0 {
            return Err(LaserError::DegenerateKernel("band-0 block is zero".into()));
        }
        let mut matrix = block0.clone();
        matrix.add(pivot, pivot, shift);
        let lu = matrix
            .lu()
            .map_err(|e| LaserError::DegenerateKernel(format!("deflated band-0 solve: {e}")))?;
        if lu.pivot_ratio() < 1e-13 {
            return Err(LaserError::DegenerateKernel(format!(
                "pivot ratio {:e} indicates a second near-zero eigenvalue",
                lu.pivot_ratio()
            )));
        }
        Ok(Self { matrix, lu, pivot })
    }

    /// Unit-trace kernel vector. With `strict`, entries below `-1e-12` abort
    /// and smaller negatives are clipped; otherwise the signed vector is kept.
    pub fn kernel(&self, strict: bool) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.matrix.dim()];
        e[self.pivot] = 1.0;
        let z = self.lu.solve_refined(&self.matrix, &e)?;
        let total: f64 = z.iter().sum();
        let mut rho: Vec<f64> = z.iter().map(|v| v / total).collect();
        if !strict {
            return Ok(rho);
        }
        for (level, r) in rho.iter_mut().enumerate() {
            if *r < -1e-12 {
                return Err(LaserError::NegativePopulation { level, value: *r });
            }
            if *r < 0.0 {
                *r = 0.0;
            }
        }
        let total: f64 = rho.iter().sum();
        rho.iter_mut().for_each(|r| *r /= total);
        Ok(rho)
    }

    /// Traceless solution `y` of `L0 y = chi` for traceless `chi`.
    pub fn solve_traceless(&self, chi: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
        let z = self.lu.solve_refined(&self.matrix, chi)?;
        let tr: f64 = z.iter().sum();
        Ok(z.iter().zip(rho).map(|(zi, ri)| zi - tr * ri).collect())
    }
}

/// Band-decomposed Liouvillian plus its steady state and flux.
pub struct BandLiouvillian {
    pub params: ModelParams,
    pub ops: CavityOperators,
    /// `blocks[k]` for `k = 0..=max_band`; band `-k` reuses `blocks[k]`.
    pub blocks: Vec<BandMatrix>,
    pub rho_ss: Vec<f64>,
    pub flux: f64,
    /// Most negative steady-state entry (zero for the Markovian families,
    /// whose generator is a proper Lindbladian).
    pub min_population: f64,
    deflated: DeflatedBand0,
    propagators: Vec<OnceLock<Propagator>>,
}

impl Clone for BandLiouvillian {
    fn clone(&self) -> Self {
        Self {
            params: self.params,
            ops: self.ops.clone(),
            blocks: self.blocks.clone(),
            rho_ss: self.rho_ss.clone(),
            flux: self.flux,
            min_population: self.min_population,
            deflated: self.deflated.clone(),
            propagators: (0..self.blocks.len()).map(|_| OnceLock::new()).collect(),
        }
    }
}

impl std::fmt::Debug for BandLiouvillian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BandLiouvillian")
            .field("params", &self.params)
            .field("max_band", &self.max_band())
            .field("flux", &self.flux)
            .finish()
    }
}

impl BandLiouvillian {
    /// Convenience: operators plus Liouvillian with the default band count.
    pub fn new(params: &ModelParams) -> Result<Self> {
        let ops = build_operators(params)?;
        build_liouvillian(ops, params, DEFAULT_MAX_BAND)
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn max_band(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block(&self, k: i64) -> &BandMatrix {
        let a = k.unsigned_abs() as usize;
        assert!(
            a <= self.max_band(),
            "band {k} not built (max {})",
            self.max_band()
        );
        &self.blocks[a]
    }

    pub fn deflated(&self) -> &DeflatedBand0 {
        &self.deflated
    }

    /// Lazily built exponential-action engine for band `k`.
    pub fn propagator(&self, k: i64) -> &Propagator {
        let a = k.unsigned_abs() as usize;
        self.propagators[a].get_or_init(|| Propagator::new(self.blocks[a].clone()))
    }

    /// Recompute the steady state after the blocks were edited in place.
    pub fn refresh(&mut self) -> Result<()> {
        let peak = argmax(&self.ops.rho);
        self.deflated = DeflatedBand0::new(&self.blocks[0], peak)?;
        self.rho_ss = self.deflated.kernel(self.params.family.is_markovian())?;
        self.min_population = min_population(&self.rho_ss);
        self.flux = flux_of(&self.ops, &self.rho_ss);
        self.propagators = (0..self.blocks.len()).map(|_| OnceLock::new()).collect();
        Ok(())
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn min_population(rho: &[f64]) -> f64 {
    rho.iter().fold(0.0f64, |m, &r| m.min(r))
}

/// `sum_n L_n^2 rho_n`.
pub fn flux_of(ops: &CavityOperators, rho: &[f64]) -> f64 {
    (1..ops.dim).map(|n| ops.l(n).powi(2) * rho[n]).sum()
}

pub fn build_liouvillian(
    ops: CavityOperators,
    params: &ModelParams,
    max_band: usize,
) -> Result<BandLiouvillian> {
    params.validate()?;
    if ops.dim != params.dim || ops.rho.len() != params.dim || ops.gain.len() + 1 != params.dim {
        return Err(LaserError::InconsistentInputs(format!(
            "operators have dimension {} but params ask for {}",
            ops.dim, params.dim
        )));
    }
    let max_band = max_band.min(params.dim - 1);
    let blocks: Vec<BandMatrix> = (0..=max_band)
        .map(|k| family_block(&ops, params, k))
        .collect();
    let peak = argmax(&ops.rho);
    let deflated = DeflatedBand0::new(&blocks[0], peak)?;
    let rho_ss = deflated.kernel(params.family.is_markovian())?;
    let flux = flux_of(&ops, &rho_ss);
    Ok(BandLiouvillian {
        min_population: min_population(&rho_ss),
        params: *params,
        ops,
        propagators: (0..=max_band).map(|_| OnceLock::new()).collect(),
        blocks,
        rho_ss,
        flux,
        deflated,
    })
}

/// `L X` for `X` on band `k`; result on band `k + 1`.
pub fn loss_left(ops: &CavityOperators, x: &[f64], k: i64) -> Vec<f64> {
    let d = ops.dim as i64;
    let out_k = k + 1;
    let len = (d - out_k.abs()).max(0) as usize;
    debug_assert_eq!(x.len() as i64, d - k.abs());
    (0..len)
        .map(|i| {
            let r = if out_k >= 0 {
                i
            } else {
                i + out_k.unsigned_abs() as usize
            };
            let src = if k >= 0 { i + 1 } else { i };
            match x.get(src) {
                Some(&v) => ops.l(r + 1) * v,
                None => 0.0,
            }
        })
        .collect()
}

/// `X L^dag` for `X` on band `k`; result on band `k - 1`.
pub fn loss_dag_right(ops: &CavityOperators, x: &[f64], k: i64) -> Vec<f64> {
    let d = ops.dim as i64;
    let out_k = k - 1;
    let len = (d - out_k.abs()).max(0) as usize;
    debug_assert_eq!(x.len() as i64, d - k.abs());
    (0..len)
        .map(|i| {
            let c = if out_k >= 0 { i + out_k as usize } else { i };
            let src = if k >= 1 { i } else { i + 1 };
            match x.get(src) {
                Some(&v) => v * ops.l(c + 1),
                None => 0.0,
            }
        })
        .collect()
}

/// Band-0 vector of `L rho L^dag` for a diagonal `rho`.
pub fn jump(ops: &CavityOperators, rho: &[f64]) -> Vec<f64> {
    (0..ops.dim)
        .map(|m| ops.l(m + 1).powi(2) * rho.get(m + 1).copied().unwrap_or(0.0))
        .collect()
}

/// Band-`k` vector of the pure phase state `sqrt(rho_m rho_{m+k})`.
pub fn phase_state_band(rho: &[f64], k: usize) -> Vec<f64> {
    (0..rho.len() - k)
        .map(|m| (rho[m] * rho[m + k]).sqrt())
        .collect()
}

/// Frobenius norms of the regular-pumping approximations on the pure phase state.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PqNormRow {
    pub dim: usize,
    pub loss_norm: f64,
    pub gain_minus_one_norm: f64,
    pub top_projector_norm: f64,
    pub steady_state_residual: f64,
}

/// Frobenius norm `(Tr A^dag A)^(1/2)` summed over all bands of a
/// band-resolved matrix function.
fn frobenius_over_bands(dim: usize, mut band: impl FnMut(usize) -> Vec<f64>) -> f64 {
    let mut total = 0.0;
    for k in 0..dim {
        let v = band(k);
        let s: f64 = v.iter().map(|x| x * x).sum();
        total += if k == 0 { s } else { 2.0 * s };
    }
    total.sqrt()
}

pub fn pq_norm_diagnostics(params: &ModelParams, dims: &[usize]) -> Result<Vec<PqNormRow>> {
    if params.family != Family::PQ {
        return Err(LaserError::InvalidParams(format!(
            "norm diagnostics need the pq family, got {}",
            params.family
        )));
    }
    dims.iter()
        .map(|&dim| {
            let p = params.with_dim(dim);
            let ops = build_operators(&p)?;
            let rho = &ops.rho;
            let loss_norm = frobenius_over_bands(dim, |k| {
                loss_dissipator(&ops, k).matvec(&phase_state_band(rho, k))
            });
            let gain_minus_one_norm = frobenius_over_bands(dim, |k| {
                let v = phase_state_band(rho, k);
                gain_dissipator(&ops, k)
                    .add_scaled(1.0, &top_projector_dissipator(dim, k))
                    .matvec(&v)
            });
            let top_projector_norm = frobenius_over_bands(dim, |k| {
                top_projector_dissipator(dim, k).matvec(&phase_state_band(rho, k))
            });
            let r = family_block(&ops, &p, 0).matvec(rho);
            let steady_state_residual = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(PqNormRow {
                dim,
                loss_norm,
                gain_minus_one_norm,
                top_projector_norm,
                steady_state_residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn liou(params: ModelParams) -> BandLiouvillian {
        BandLiouvillian::new(&params).unwrap()
    }

    #[test]
    fn band0_columns_sum_to_zero() {
        for params in [
            ModelParams::p_family(4.0, 30),
            ModelParams::p_lambda(2.5, 0.2, 17),
            ModelParams::p_q(3.0, -1.0, 25),
        ] {
            let l = liou(params);
            let col = l.block(0).vecmat(&vec![1.0; params.dim]);
            assert!(col.iter().all(|c| c.abs() < 1e-12), "{params:?}");
        }
    }

    #[test]
    fn steady_state_matches_analytic_for_markovian() {
        for params in [
            ModelParams::p_family(4.0, 100),
            ModelParams::p_lambda(4.0, 0.7, 100),
        ] {
            let l = liou(params);
            let err = l
                .rho_ss
                .iter()
                .zip(&l.ops.rho)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-10, "{err:e}");
        }
    }

    #[test]
    fn pq_block_shape() {
        let l = liou(ModelParams::p_q(3.0, -0.5, 10));
        assert_eq!((l.block(0).lower(), l.block(0).upper()), (2, 1));
        let m = liou(ModelParams::p_family(3.0, 10));
        assert_eq!((m.block(1).lower(), m.block(1).upper()), (1, 1));
    }

    #[test]
    fn inconsistent_inputs() {
        let ops = build_operators(&ModelParams::p_family(4.0, 10)).unwrap();
        let err = build_liouvillian(ops, &ModelParams::p_family(4.0, 11), 2).unwrap_err();
        assert!(matches!(err, LaserError::InconsistentInputs(_)));
    }

    #[test]
    fn loss_maps_match_dense_products() {
        let ops = build_operators(&ModelParams::p_lambda(3.0, 0.3, 6)).unwrap();
        let d = 6usize;
        // dense X with distinct entries
        let x =
            |r: usize, c: usize| 1.0 + r as f64 * 0.37 + c as f64 * 1.11 + (r * c) as f64 * 0.05;
        let lmat = |r: usize, c: usize| if c == r + 1 { ops.l(c) } else { 0.0 };
        for k in -3i64..=3 {
            let len = d - k.unsigned_abs() as usize;
            let band: Vec<f64> = (0..len)
                .map(|i| {
                    if k >= 0 {
                        x(i, i + k as usize)
                    } else {
                        x(i + (-k) as usize, i)
                    }
                })
                .collect();
            let left = loss_left(&ops, &band, k);
            let right = loss_dag_right(&ops, &band, k);
            // dense reference restricted to the single band of X
            let xb = |r: usize, c: usize| {
                if c as i64 - r as i64 == k {
                    x(r, c)
                } else {
                    0.0
                }
            };
            let lx = |r: usize, c: usize| (0..d).map(|j| lmat(r, j) * xb(j, c)).sum::<f64>();
            let xl = |r: usize, c: usize| (0..d).map(|j| xb(r, j) * lmat(c, j)).sum::<f64>();
            for (i, v) in left.iter().enumerate() {
                let kk = k + 1;
                let (r, c) = if kk >= 0 {
                    (i, i + kk as usize)
                } else {
                    (i + (-kk) as usize, i)
                };
                assert!((v - lx(r, c)).abs() < 1e-14, "left k={k} i={i}");
            }
            for (i, v) in right.iter().enumerate() {
                let kk = k - 1;
                let (r, c) = if kk >= 0 {
                    (i, i + kk as usize)
                } else {
                    (i + (-kk) as usize, i)
                };
                assert!((v - xl(r, c)).abs() < 1e-14, "right k={k} i={i}");
            }
        }
    }

    #[test]
    fn top_projector_kills_band0() {
        let b = top_projector_dissipator(8, 0);
        assert!(b.diagonal().iter().all(|&v| v == 0.0));
        let b1 = top_projector_dissipator(8, 1);
        assert_eq!(b1.get(6, 6), -0.5);
        assert_eq!(b1.get(0, 0), 0.0);
    }

    #[test]
    fn norm_diagnostics_reject_markovian() {
        assert!(pq_norm_diagnostics(&ModelParams::p_family(3.0, 10), &[10]).is_err());
    }
}
