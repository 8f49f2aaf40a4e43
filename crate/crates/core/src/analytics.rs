//! Closed-form and semi-analytic predictions: ideal phase-diffusing beam,
//! the `f_n` linewidth sums, the coherence formula and its optimum.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{LaserError, Result};
use crate::models::{build_operators, Family, ModelParams};
use crate::optimize::golden_max;
use crate::quad::integrate;
use crate::superop::{family_block, loss_left, phase_state_band};

/// First zero of the Airy function Ai.
pub const AIRY_ZERO: f64 = -2.338_107_410_459_767;

/// Coherent state with pure phase diffusion: `phi(t) = sqrt(linewidth) W(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealBeam {
    pub flux: f64,
    pub linewidth: f64,
}

impl IdealBeam {
    pub fn new(flux: f64, linewidth: f64) -> Result<Self> {
        if !(flux > 0.0 && linewidth > 0.0 && flux.is_finite() && linewidth.is_finite()) {
            return Err(LaserError::InvalidParams(format!(
                "ideal beam needs positive flux and linewidth, got {flux}, {linewidth}"
            )));
        }
        Ok(Self { flux, linewidth })
    }

    pub fn coherence(&self) -> f64 {
        4.0 * self.flux / self.linewidth
    }
}

pub fn ideal_g1(beam: &IdealBeam, s: f64) -> f64 {
    (-beam.linewidth * s.abs() / 2.0).exp()
}

/// Variance of `W(t) + W(t') - W(s) - W(s')` for a two-sided Wiener process.
/// The coefficients sum to zero, so only the pairwise distances enter.
pub fn phase_combination_variance(s: f64, s2: f64, t2: f64, t: f64) -> f64 {
    let pts = [(t, 1.0), (t2, 1.0), (s, -1.0), (s2, -1.0)];
    let mut var = 0.0;
    for &(a, ca) in &pts {
        for &(b, cb) in &pts {
            var -= 0.5 * ca * cb * (a - b).abs();
        }
    }
    var
}

/// Normalised `<b^dag(s) b^dag(s') b(t') b(t)>` of the ideal beam.
pub fn ideal_g2(beam: &IdealBeam, s: f64, s2: f64, t2: f64, t: f64) -> f64 {
    (-0.5 * beam.linewidth * phase_combination_variance(s, s2, t2, t)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    EdgeDominated,
    Crossover,
    CenterDominated,
}

impl Regime {
    /// The pole of the coherence formula sits at `p = 3`; the band `[2.8, 3.2]`
    /// is reported as a crossover.
    pub fn classify(p: f64) -> Self {
        if p < 2.8 {
            Regime::EdgeDominated
        } else if p > 3.2 {
            Regime::CenterDominated
        } else {
            Regime::Crossover
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnSum {
    pub family: Family,
    pub elements: Vec<f64>,
    pub total: f64,
    /// Leading-order Taylor form of each element.
    pub approx_elements: Vec<f64>,
    pub approx_total: f64,
    pub regime: Regime,
}

impl FnSum {
    /// Index of the element of largest magnitude.
    pub fn argmax_abs(&self) -> usize {
        (0..self.elements.len())
            .max_by(|&a, &b| self.elements[a].abs().total_cmp(&self.elements[b].abs()))
            .unwrap_or(0)
    }
}

fn gamma_ratio(p: f64) -> f64 {
    (ln_gamma((2.0 + p) / 2.0) - ln_gamma((1.0 + p) / 2.0)).exp()
}

/// Leading-order Taylor form of the flat-gain element at index `n`.
pub fn taylor_element(p: f64, dim: usize, n: usize) -> f64 {
    let d1 = dim as f64 + 1.0;
    let x = PI * (n as f64 + 1.0) / d1;
    let cot = x.cos() / x.sin();
    -PI.powf(4.5) * p * p / (8.0 * d1.powi(5))
        * gamma_ratio(p)
        * (1.0 + cot * cot).powi(2)
        * x.sin().powf(p)
}

/// Scale applied to the flat-gain elements by the other two families.
pub fn family_scale(params: &ModelParams) -> f64 {
    match params.family {
        Family::P => 1.0,
        Family::PLambda => 2.0 * params.lambda * params.lambda - 2.0 * params.lambda + 1.0,
        Family::PQ => (1.0 + params.q / 2.0).powi(2),
    }
}

/// Elements of the linewidth sums.
///
/// Flat gain: `f_n = L_n (L_1 (L rho))_{n-1}`, whose sum is `Tr[L^dag L(L rho)]`.
/// The other families use the pure phase state: `f_n = (L_1 varrho)_{n,n+1}`.
pub fn fn_elements(params: &ModelParams) -> Result<FnSum> {
    params.validate()?;
    let ops = build_operators(params)?;
    let block = family_block(&ops, params, 1);
    let d = params.dim;
    let elements: Vec<f64> = match params.family {
        Family::P => {
            let y = block.matvec(&loss_left(&ops, &ops.rho, 0));
            std::iter::once(0.0)
                .chain((1..d).map(|n| ops.l(n) * y[n - 1]))
                .collect()
        }
        Family::PLambda | Family::PQ => block.matvec(&phase_state_band(&ops.rho, 1)),
    };
    let scale = family_scale(params);
    let approx_elements: Vec<f64> = (0..elements.len())
        .map(|n| scale * taylor_element(params.p, d, n))
        .collect();
    Ok(FnSum {
        family: params.family,
        total: elements.iter().sum(),
        approx_total: approx_elements.iter().sum(),
        elements,
        approx_elements,
        regime: Regime::classify(params.p),
    })
}

/// Linewidth estimate `-2 sum_n (L varrho)_{n,n+1}` from the pure phase state.
pub fn linewidth_ansatz(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let ops = build_operators(params)?;
    let y = family_block(&ops, params, 1).matvec(&phase_state_band(&ops.rho, 1));
    Ok(-2.0 * y.iter().sum::<f64>())
}

/// Prefactor `c(p)` in `C = c(p) mu^4` for flat gain; requires `p > 3`.
pub fn coherence_prefactor(p: f64) -> Result<f64> {
    if !(p > 3.0) || !p.is_finite() {
        return Err(LaserError::OutOfDomain(format!(
            "closed-form coherence needs p > 3, got {p}; Heisenberg-limited scaling is lost"
        )));
    }
    let ln = ln_gamma((p + 1.0) / 2.0) + ln_gamma((p - 2.0) / 2.0)
        - ln_gamma((p + 2.0) / 2.0)
        - ln_gamma((p - 3.0) / 2.0);
    Ok(256.0 / (PI.powi(4) * p * p) * ln.exp())
}

/// Divisor applied to the flat-gain coherence by each family.
pub fn coherence_divisor(params: &ModelParams) -> f64 {
    match params.family {
        Family::P => 1.0,
        Family::PLambda => 2.0 * (params.lambda - 0.5).powi(2) + 0.5,
        Family::PQ => (1.0 + params.q / 2.0).powi(2),
    }
}

/// Large-`D` closed-form coherence.
pub fn coherence_formula(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(coherence_prefactor(params.p)? * params.mu().powi(4) / coherence_divisor(params))
}

/// The `p` maximising [`coherence_prefactor`].
pub fn optimal_p() -> f64 {
    golden_max(
        |p| coherence_prefactor(p).unwrap_or(f64::NEG_INFINITY),
        3.5,
        5.5,
        1e-9,
    )
    .0
}

/// Lower bound `4 |z_A / 3|^3 / mu^2` on the phase mean-square error.
pub fn heisenberg_bound(mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(LaserError::InvalidParams(format!(
            "mu must be positive, got {mu}"
        )));
    }
    Ok(4.0 * (AIRY_ZERO / 3.0).abs().powi(3) / (mu * mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub tau: f64,
    pub value: f64,
    /// Leading-order asymptote `2 sqrt(2 l / 3 N)`.
    pub asymptote: f64,
    /// Set when `l tau` or `1 / (N tau)` is not small.
    pub warning: Option<String>,
}

/// Window minimising the leading-order MSE: `sqrt(3 / (2 N l))`.
pub fn optimal_window(beam: &IdealBeam) -> f64 {
    (1.5 / (beam.flux * beam.linewidth)).sqrt()
}

fn mse_estimate(beam: &IdealBeam, tau: f64, i1: f64, i2: f64) -> MseEstimate {
    let n = beam.flux;
    let value = 1.0 / (2.0 * n * n * tau * tau)
        + i1 / (n * tau.powi(3))
        + (i1 * i1 - i2 * i2) / (2.0 * tau.powi(4));
    let lt = beam.linewidth * tau;
    let nt = n * tau;
    let warning = (lt > 0.1 || nt < 10.0)
        .then(|| format!("outside asymptotic window: l*tau = {lt:.3e}, N*tau = {nt:.3e}"));
    MseEstimate {
        tau,
        value,
        asymptote: 2.0 * (2.0 * beam.linewidth / (3.0 * n)).sqrt(),
        warning,
    }
}

/// Retrofiltering mean-square error of the ideal beam for window `tau`.
///
/// By time-translation invariance the g1 double integral is
/// `I1 = 2 int_0^tau (tau - u) g1(u) du`; the two g2 quadruple integrals
/// factor across the sign of the time arguments into `I1^2` and `I2^2` with
/// `I2 = 2 int_0^tau da int_0^a db exp(-l (a + 3b) / 2)`.
pub fn retrofiltering_mse_ideal(beam: &IdealBeam, tau: f64) -> Result<MseEstimate> {
    if !(tau > 0.0) {
        return Err(LaserError::InvalidParams(format!(
            "window must be positive, got {tau}"
        )));
    }
    let k = beam.linewidth / 2.0;
    let i1 = 2.0 * integrate(|u| (tau - u) * (-k * u).exp(), 0.0, tau, 0.0, 1e-13, 200).value;
    // Inner integral in closed form: int_0^a exp(-3 k b) db.
    let inner = |a: f64| {
        let x = 3.0 * k * a;
        if x < 1e-8 {
            a * (1.0 - x / 2.0)
        } else {
            -(-x).exp_m1() / (3.0 * k)
        }
    };
    let i2 = 2.0 * integrate(|a| (-k * a).exp() * inner(a), 0.0, tau, 0.0, 1e-13, 200).value;
    Ok(mse_estimate(beam, tau, i1, i2))
}

/// The same MSE from midpoint sums of the unreduced double and quadruple
/// integrals over an `n`-point grid per axis. `O(n^4)` cost.
pub fn retrofiltering_mse_brute(beam: &IdealBeam, tau: f64, n: usize) -> Result<MseEstimate> {
    if !(tau > 0.0) || n == 0 {
        return Err(LaserError::InvalidParams(
            "window and grid size must be positive".into(),
        ));
    }
    let h = tau / n as f64;
    let pos: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let neg: Vec<f64> = pos.iter().map(|x| -x).collect();
    let mut g1_sum = 0.0;
    for &s in &pos {
        for &t in &pos {
            g1_sum += ideal_g1(beam, s - t);
        }
    }
    let (mut cross, mut same) = (0.0, 0.0);
    for &s in &pos {
        for &s2 in &neg {
            for &t2 in &pos {
                for &t in &neg {
                    cross += ideal_g2(beam, s, s2, t2, t);
                }
            }
        }
        for &s2 in &pos {
            for &t2 in &neg {
                for &t in &neg {
                    same += ideal_g2(beam, s, s2, t2, t);
                }
            }
        }
    }
    let nn = beam.flux;
    let value = 1.0 / (2.0 * nn * nn * tau * tau)
        + g1_sum * h * h / (nn * tau.powi(3))
        + (cross - same) * h.powi(4) / (2.0 * tau.powi(4));
    let mut est = mse_estimate(beam, tau, 0.0, 0.0);
    est.value = value;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ideal_g1_values() {
        let beam = IdealBeam::new(1.0, 0.3).unwrap();
        assert_eq!(ideal_g1(&beam, 0.0), 1.0);
        assert_relative_eq!(
            ideal_g1(&beam, 2.0 / 0.3),
            (-1f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn ideal_g2_values() {
        let beam = IdealBeam::new(2.0, 0.8).unwrap();
        for sigma in [0.0, 0.3, 5.0, 100.0] {
            assert_relative_eq!(
                ideal_g2(&beam, 0.0, sigma, sigma, 0.0),
                1.0,
                epsilon = 1e-15
            );
            assert_relative_eq!(
                ideal_g2(&beam, 1.0, sigma, sigma, 1.0),
                1.0,
                epsilon = 1e-15
            );
        }
        assert_eq!(ideal_g2(&beam, 0.4, 0.4, 0.4, 0.4), 1.0);
        let a = ideal_g2(&beam, -0.3, 0.9, 0.1, 1.4);
        assert_relative_eq!(a, ideal_g2(&beam, 4.7, 5.9, 5.1, 6.4), max_relative = 1e-13);
    }

    #[test]
    fn coherence_prefactor_at_four() {
        // 16/pi^4 * Gamma(5/2) Gamma(1) / (Gamma(3) Gamma(1/2)) = 16/pi^4 * 3/8
        assert_relative_eq!(
            coherence_prefactor(4.0).unwrap(),
            6.0 / PI.powi(4),
            max_relative = 1e-13
        );
        assert!((coherence_prefactor(4.0).unwrap() - 0.0616).abs() < 1e-4);
        assert!(matches!(
            coherence_prefactor(3.0),
            Err(LaserError::OutOfDomain(_))
        ));
        assert!(coherence_prefactor(3.0 + 1e-9).unwrap() < 1e-8);
    }

    #[test]
    fn divisors() {
        let base = coherence_formula(&ModelParams::p_family(4.1479, 300)).unwrap();
        let lam = coherence_formula(&ModelParams::p_lambda(4.1479, 0.5, 300)).unwrap();
        let q = coherence_formula(&ModelParams::p_q(4.1479, -1.0, 300)).unwrap();
        assert_relative_eq!(lam / base, 2.0, max_relative = 1e-14);
        assert_relative_eq!(q / base, 4.0, max_relative = 1e-14);
        for lambda in [0.0, 0.2, 0.7, 1.3] {
            let params = ModelParams::p_lambda(4.5, lambda, 101);
            let scaled = coherence_formula(&params).unwrap() * coherence_divisor(&params);
            assert_relative_eq!(
                scaled,
                coherence_formula(&ModelParams::p_family(4.5, 101)).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn optimal_p_matches_scan() {
        let p = optimal_p();
        assert!((p - 4.1479).abs() < 5e-4, "{p}");
        let c = |p| coherence_prefactor(p).unwrap();
        assert!(c(p) > c(4.0) && c(p) > c(4.3));
        let h = 1e-4;
        let slope = |p: f64| c(p + h) - c(p - h);
        assert!(slope(4.0) > 0.0 && slope(4.3) < 0.0);
        let grid_best = (0..=3000)
            .map(|i| 4.0 + i as f64 * 1e-4)
            .max_by(|a, b| c(*a).total_cmp(&c(*b)))
            .unwrap();
        assert!((grid_best - p).abs() < 2e-4);
    }

    #[test]
    fn heisenberg_bound_values() {
        assert!((heisenberg_bound(1.0).unwrap() - 1.894).abs() < 1e-3);
        assert_relative_eq!(
            heisenberg_bound(2.0).unwrap(),
            heisenberg_bound(1.0).unwrap() / 4.0,
            max_relative = 1e-15
        );
        assert!((heisenberg_bound(1e3).unwrap() - 1.894e-6).abs() < 1e-9);
        assert!(heisenberg_bound(0.0).is_err());
    }

    #[test]
    fn flat_gain_elements_match_closed_cases() {
        let params = ModelParams::p_family(4.0, 40);
        let fs = fn_elements(&params).unwrap();
        let rho = crate::models::analytic_steady_state(&params).unwrap();
        let d = 40;
        assert_eq!(fs.elements[0], 0.0);
        assert_relative_eq!(
            fs.elements[1],
            -rho[0] * rho[0] / (2.0 * rho[1]),
            max_relative = 1e-12
        );
        for n in 2..d - 1 {
            let v = -rho[n - 1] / 2.0
                * ((rho[n - 2] / rho[n - 1]).sqrt() - (rho[n - 1] / rho[n]).sqrt()).powi(2);
            assert_relative_eq!(fs.elements[n], v, max_relative = 1e-10, epsilon = 1e-18);
        }
        // Top element expanded by hand from the trace identity.
        let n = d - 1;
        let v = -rho[n - 1] / 2.0
            * ((rho[n - 2] / rho[n - 1]).sqrt() - (rho[n - 1] / rho[n]).sqrt()).powi(2)
            - rho[n - 1] / 2.0;
        assert_relative_eq!(fs.elements[n], v, max_relative = 1e-10);
    }

    #[test]
    fn plambda_elements_match_closed_form() {
        let params = ModelParams::p_lambda(4.0, 0.3, 30);
        let fs = fn_elements(&params).unwrap();
        let rho = crate::models::analytic_steady_state(&params).unwrap();
        for n in 1..27 {
            let a = (rho[n - 1] / rho[n]).powf(0.35) - (rho[n] / rho[n + 1]).powf(0.35);
            let b = (rho[n + 1] / rho[n]).powf(0.15) - (rho[n + 2] / rho[n + 1]).powf(0.15);
            let v = -(rho[n] * rho[n + 1]).sqrt() / 2.0 * (a * a + b * b);
            assert_relative_eq!(fs.elements[n], v, max_relative = 1e-9);
        }
    }

    #[test]
    fn taylor_elements_near_center() {
        let fs = fn_elements(&ModelParams::p_family(4.0, 300)).unwrap();
        for n in 120..180 {
            let rel = (fs.elements[n] - fs.approx_elements[n]).abs() / fs.elements[n].abs();
            assert!(rel < 0.02, "n={n} rel={rel}");
        }
        let lam = fn_elements(&ModelParams::p_lambda(4.0, 0.5, 300)).unwrap();
        let n = 149;
        assert!((lam.elements[n] / fs.elements[n] - 0.5).abs() < 0.01);
    }

    #[test]
    fn edge_dominated_at_low_p() {
        let fs = fn_elements(&ModelParams::p_family(2.0, 10_000)).unwrap();
        let i = fs.argmax_abs();
        assert!(i == 1 || i == 9_999, "{i}");
        assert_eq!(fs.regime, Regime::EdgeDominated);
        assert_eq!(Regime::classify(3.0), Regime::Crossover);
    }

    #[test]
    fn ansatz_lambda_zero_equals_phase_state_sum() {
        let params = ModelParams::p_lambda(4.2, 0.0, 80);
        let fs = fn_elements(&params).unwrap();
        assert_relative_eq!(
            linewidth_ansatz(&params).unwrap(),
            -2.0 * fs.total,
            max_relative = 1e-14
        );
    }

    #[test]
    fn mse_reduction_closed_form() {
        let beam = IdealBeam::new(1.0, 1e-3).unwrap();
        let tau = 30.0;
        let k = beam.linewidth / 2.0;
        let i1 = 2.0 * (tau / k - (1.0 - (-k * tau).exp()) / (k * k));
        let i2 = 2.0 / (3.0 * k)
            * ((1.0 - (-k * tau).exp()) / k - (1.0 - (-4.0 * k * tau).exp()) / (4.0 * k));
        let exact = mse_estimate(&beam, tau, i1, i2).value;
        assert_relative_eq!(
            retrofiltering_mse_ideal(&beam, tau).unwrap().value,
            exact,
            max_relative = 1e-9
        );
    }

    #[test]
    fn mse_brute_force_agrees() {
        let beam = IdealBeam::new(1.0, 1e-4).unwrap();
        let tau = (1.5 * beam.coherence()).sqrt() / beam.flux;
        let reduced = retrofiltering_mse_ideal(&beam, tau).unwrap().value;
        let brute = retrofiltering_mse_brute(&beam, tau, 24).unwrap().value;
        assert!(
            ((brute - reduced) / reduced).abs() < 5e-3,
            "{brute} {reduced}"
        );
    }

    #[test]
    fn mse_asymptote() {
        let beam = IdealBeam::new(1.0, 1e-6).unwrap();
        let est = retrofiltering_mse_ideal(&beam, optimal_window(&beam)).unwrap();
        assert!(est.warning.is_none());
        assert!((est.value / est.asymptote - 1.0).abs() < 0.02, "{est:?}");
        let far = retrofiltering_mse_ideal(&beam, 1e9).unwrap();
        assert!(far.warning.is_some());
    }
}
