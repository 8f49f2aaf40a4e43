//! Beam observables from a [`BandLiouvillian`]: flux, coherence, linewidth,
//! Mandel-Q and Glauber correlation functions.
//!
//! Units follow the Liouvillian prefactor (set to one); the computed flux `F`
//! is always used for normalisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LaserError, Result};
use crate::models::ModelParams;
use crate::quad::integrate_panels;
use crate::superop::{
    build_transfer, jump, loss_dag_right, loss_left, BandLiouvillian, DeflatedBand0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamObservables {
    pub params: ModelParams,
    pub dim: usize,
    pub flux: f64,
    pub coherence: f64,
    pub linewidth: f64,
    pub mandel_q: f64,
    /// `max |L0 rho_ss|` of the computed steady state.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TraceKind {
    G1,
    G2ps,
    /// `g2(s, s', t', t)` with `s` swept and the other offsets fixed relative to it.
    G2General {
        s2: f64,
        t2: f64,
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: TraceKind,
}

pub fn steady_state(liou: &BandLiouvillian) -> Result<Vec<f64>> {
    Ok(liou.rho_ss.clone())
}

pub fn flux(liou: &BandLiouvillian, rho: &[f64]) -> f64 {
    crate::superop::flux_of(&liou.ops, rho)
}

/// `sup |L0 rho|` for the supplied band-0 vector.
pub fn steady_residual(liou: &BandLiouvillian, rho: &[f64]) -> f64 {
    liou.block(0)
        .matvec(rho)
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
}

/// Band-1 vectors `v = L rho_ss` and trace weights `w` of `Tr[L^dag .]`.
fn band_one_pair(liou: &BandLiouvillian) -> (Vec<f64>, Vec<f64>) {
    let v = loss_left(&liou.ops, &liou.rho_ss, 0);
    let w: Vec<f64> = (0..liou.dim() - 1).map(|m| liou.ops.l(m + 1)).collect();
    (v, w)
}

/// Signed `-2 <w| L1^{-1} |v>`; only a singular band-1 block is an error.
pub fn coherence_signed(liou: &BandLiouvillian) -> Result<f64> {
    let block = liou.block(1);
    let lu = block
        .lu()
        .map_err(|e| LaserError::SingularBandOne(e.to_string()))?;
    if lu.pivot_ratio() < 1e-15 {
        return Err(LaserError::SingularBandOne(format!(
            "pivot ratio {:e}",
            lu.pivot_ratio()
        )));
    }
    let (v, w) = band_one_pair(liou);
    let y = lu
        .solve_refined(block, &v)
        .map_err(|e| LaserError::SingularBandOne(e.to_string()))?;
    Ok(-2.0 * w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>())
}

/// Coherence `-2 <w| L1^{-1} |v>`. A non-positive value means the band-1
/// generator has a growing mode, which the regular-pumping family shows at
/// small `D` near `q = -1`.
pub fn coherence(liou: &BandLiouvillian) -> Result<f64> {
    let c = coherence_signed(liou)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(LaserError::SingularBandOne(format!(
            "non-positive coherence {c:e}: band-1 dynamics do not decay"
        )));
    }
    Ok(c)
}

/// Trace weights `u_n = L_n^2` of `Tr[J .]` on band 0.
fn jump_weights(liou: &BandLiouvillian) -> Vec<f64> {
    (0..liou.dim())
        .map(|n| liou.ops.loss_occupation(n))
        .collect()
}

/// Long-time Mandel-Q from the deflated band-0 resolvent.
pub fn mandel_q(liou: &BandLiouvillian) -> Result<f64> {
    let rho = &liou.rho_ss;
    let f = liou.flux;
    let chi: Vec<f64> = jump(&liou.ops, rho)
        .iter()
        .zip(rho)
        .map(|(j, r)| j - f * r)
        .collect();
    let y = liou.deflated().solve_traceless(&chi, rho)?;
    let u = jump_weights(liou);
    Ok(-2.0 / f * u.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>())
}

pub fn observe(liou: &BandLiouvillian) -> Result<BeamObservables> {
    let coherence = coherence(liou)?;
    let mandel_q = mandel_q(liou)?;
    Ok(BeamObservables {
        params: liou.params,
        dim: liou.dim(),
        flux: liou.flux,
        coherence,
        linewidth: 4.0 * liou.flux / coherence,
        mandel_q,
        residual: steady_residual(liou, &liou.rho_ss),
    })
}

/// Normalised `g1(s, 0)`; symmetric in `s`.
pub fn g1(liou: &BandLiouvillian, s: f64) -> Result<f64> {
    let (v, w) = band_one_pair(liou);
    let x = liou.propagator(1).apply(s.abs(), &v)?;
    Ok(w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / liou.flux)
}

pub fn g1_trace(liou: &BandLiouvillian, times: &[f64]) -> Result<CorrelationTrace> {
    let values = times
        .par_iter()
        .map(|&s| g1(liou, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationTrace {
        times: times.to_vec(),
        values,
        kind: TraceKind::G1,
    })
}

/// Normalised `<b^dag(s) b^dag(s') b(t') b(t)>` for any ordering of the times.
pub fn g2_general(liou: &BandLiouvillian, s: f64, s2: f64, t2: f64, t: f64) -> Result<f64> {
    if liou.max_band() < 2 {
        return Err(LaserError::InvalidParams(
            "g2 needs bands up to |k| = 2".into(),
        ));
    }
    let times = [s, s2, t2, t];
    if times.iter().any(|x| !x.is_finite()) {
        return Err(LaserError::ExpmTolFailure(
            "non-finite time argument".into(),
        ));
    }
    // (time, annihilation?) sorted by time; equal-time events commute
    let mut events = [(s, false), (s2, false), (t2, true), (t, true)];
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut x = liou.rho_ss.clone();
    let mut band = 0i64;
    let mut now = events[0].0;
    for &(time, annihilate) in &events {
        let dt = time - now;
        if dt > 0.0 {
            x = liou.propagator(band).apply(dt, &x)?;
        }
        now = time;
        if annihilate {
            x = loss_left(&liou.ops, &x, band);
            band += 1;
        } else {
            x = loss_dag_right(&liou.ops, &x, band);
            band -= 1;
        }
    }
    debug_assert_eq!(band, 0);
    Ok(x.iter().sum::<f64>() / (liou.flux * liou.flux))
}

/// `g2_ps(s) - 1 = (1| J exp(L0 s) chi) / F^2` evaluated without cancellation.
pub fn g2ps_minus_one(liou: &BandLiouvillian, s: f64) -> Result<f64> {
    let rho = &liou.rho_ss;
    let f = liou.flux;
    let chi: Vec<f64> = jump(&liou.ops, rho)
        .iter()
        .zip(rho)
        .map(|(j, r)| j - f * r)
        .collect();
    let x = liou.propagator(0).apply(s.abs(), &chi)?;
    let u = jump_weights(liou);
    Ok(u.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / (f * f))
}

pub fn g2ps_trace(liou: &BandLiouvillian, times: &[f64]) -> Result<CorrelationTrace> {
    let values = times
        .par_iter()
        .map(|&s| g2ps_minus_one(liou, s).map(|v| v + 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationTrace {
        times: times.to_vec(),
        values,
        kind: TraceKind::G2ps,
    })
}

/// Geometric panel edges `0, h, 2h, 4h, ..., horizon`.
pub fn geometric_edges(first: f64, horizon: f64) -> Vec<f64> {
    let mut edges = vec![0.0];
    let mut x = first.min(horizon);
    while x < horizon {
        edges.push(x);
        x *= 2.0;
    }
    edges.push(horizon);
    edges
}

/// Tail of `int_H^inf h` assuming exponential decay fitted at `0.8 H` and `H`.
fn exponential_tail<F: FnMut(f64) -> Result<f64>>(mut h: F, horizon: f64) -> Result<f64> {
    let a = h(0.8 * horizon)?;
    let b = h(horizon)?;
    if b == 0.0 {
        return Ok(0.0);
    }
    let ratio = b / a;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Ok(f64::INFINITY);
    }
    let rate = -ratio.ln() / (0.2 * horizon);
    Ok(b / rate)
}

/// Long-time Mandel-Q as `2 F int_0^H (g2_ps - 1)` plus an exponential tail.
pub fn mandel_q_from_g2(liou: &BandLiouvillian, horizon: f64) -> Result<f64> {
    const TOL: f64 = 1e-3;
    if !(horizon > 0.0) {
        return Err(LaserError::HorizonTooShort(format!(
            "horizon {horizon} is not positive"
        )));
    }
    let f = liou.flux;
    let edges = geometric_edges(0.25, horizon);
    let mut err = None;
    let r = integrate_panels(
        |s| match g2ps_minus_one(liou, s) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        &edges,
        1e-10,
        1e-9,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let tail = exponential_tail(|s| g2ps_minus_one(liou, s), horizon)?;
    let q = 2.0 * f * r.value;
    let q_tail = 2.0 * f * tail;
    if !(q_tail.abs() <= TOL * q.abs().max(1e-2)) {
        return Err(LaserError::HorizonTooShort(format!(
            "tail contribution {q_tail:e} exceeds budget at horizon {horizon}"
        )));
    }
    Ok(q + q_tail)
}

/// Coherence as `2 F int_0^inf g1`, integrated to `span` linewidth times.
pub fn coherence_from_g1_quadrature(
    liou: &BandLiouvillian,
    linewidth: f64,
    span: f64,
) -> Result<f64> {
    let f = liou.flux;
    let horizon = span * 2.0 / linewidth;
    let edges = geometric_edges(0.5, horizon);
    let mut err = None;
    let r = integrate_panels(
        |s| match g1(liou, s) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        &edges,
        1e-9 * horizon,
        1e-10,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let tail = exponential_tail(|s| g1(liou, s), horizon)?;
    Ok(2.0 * f * (r.value + tail))
}

/// Discrete-time Mandel-Q at step `gamma` from the transfer operator:
/// `(2 gamma / F) (1|J X) - gamma F` with `(I - T0) X = chi`, `(1|X) = 0`.
pub fn mandel_q_discrete(liou: &BandLiouvillian, gamma: f64) -> Result<f64> {
    if !liou.params.family.is_markovian() {
        return Err(LaserError::InvalidParams(
            "discrete transfer form is defined for the Markovian families only".into(),
        ));
    }
    let ts = build_transfer(&liou.ops, gamma)?;
    let t0 = ts.band_block(0);
    let generator = t0.add_scaled(-1.0, &crate::banded::BandMatrix::identity(liou.dim()));
    let peak = liou
        .rho_ss
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &r)| if r > b.1 { (i, r) } else { b })
        .0;
    let defl = DeflatedBand0::new(&generator, peak)?;
    let rho = defl.kernel(true)?;
    let f = crate::superop::flux_of(&liou.ops, &rho);
    let neg_chi: Vec<f64> = jump(&liou.ops, &rho)
        .iter()
        .zip(&rho)
        .map(|(j, r)| f * r - j)
        .collect();
    let x = defl.solve_traceless(&neg_chi, &rho)?;
    let u = jump_weights(liou);
    let jx: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(2.0 * gamma / f * jx - gamma * f)
}

/// Linear extrapolation of [`mandel_q_discrete`] to `gamma -> 0`.
pub fn mandel_q_extrapolated(liou: &BandLiouvillian, g1: f64, g2: f64) -> Result<f64> {
    let q1 = mandel_q_discrete(liou, g1)?;
    let q2 = mandel_q_discrete(liou, g2)?;
    Ok((g1 * q2 - g2 * q1) / (g1 - g2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superop::DenseOracle;

    fn liou(p: ModelParams) -> BandLiouvillian {
        BandLiouvillian::new(&p).unwrap()
    }

    #[test]
    fn linewidth_identity() {
        let l = liou(ModelParams::p_lambda(4.0, 0.3, 40));
        let o = observe(&l).unwrap();
        assert!((o.linewidth * o.coherence - 4.0 * o.flux).abs() < 1e-12 * o.flux);
    }

    #[test]
    fn p_family_flux_telescopes() {
        let l = liou(ModelParams::p_family(4.0, 50));
        let f = flux(&l, &l.ops.rho);
        assert!((f - (1.0 - l.ops.rho[49])).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_small() {
        for p in [
            ModelParams::p_family(4.0, 8),
            ModelParams::p_lambda(4.0, 0.3, 9),
            ModelParams::p_q(3.5, -1.0, 7),
        ] {
            let l = liou(p);
            let d = DenseOracle::new(&l.ops, &p).unwrap();
            let c = coherence(&l).unwrap();
            assert!((c - d.coherence()).abs() < 1e-10 * c, "{p:?}");
            assert!((mandel_q(&l).unwrap() - d.mandel_q()).abs() < 1e-10);
            for &s in &[0.0, 0.7, 5.0] {
                assert!((g1(&l, s).unwrap() - d.g1(s)).abs() < 1e-10);
            }
            let (a, b) = (
                g2_general(&l, 0.0, 1.2, 0.4, 2.0).unwrap(),
                d.g2(0.0, 1.2, 0.4, 2.0),
            );
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn g1_starts_at_one() {
        let l = liou(ModelParams::p_family(4.15, 60));
        assert!((g1(&l, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g2_factorizes_at_long_delay() {
        let l = liou(ModelParams::p_lambda(4.15, 0.5, 20));
        let v = g2_general(&l, 0.0, 1e4, 1e4, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn horizon_zero() {
        let l = liou(ModelParams::p_family(4.0, 20));
        assert!(matches!(
            mandel_q_from_g2(&l, 0.0),
            Err(LaserError::HorizonTooShort(_))
        ));
    }

    #[test]
    fn discrete_q_offsets_by_gamma_flux() {
        let l = liou(ModelParams::p_lambda(4.0, 0.5, 30));
        let q = mandel_q(&l).unwrap();
        let qd = mandel_q_discrete(&l, 1e-3).unwrap();
        assert!((qd - (q - 1e-3 * l.flux)).abs() < 1e-9);
        assert!(mandel_q_discrete(&liou(ModelParams::p_q(4.0, -1.0, 10)), 1e-3).is_err());
    }
}
