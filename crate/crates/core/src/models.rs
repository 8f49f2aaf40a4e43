//! The three laser families: gain/loss amplitudes in the cavity number basis
//! and the closed-form steady-state photon distribution they share.
//!
//! Levels are `n = 0..D-1`. Gain moves `|n-1> -> |n>` with amplitude `G_n`,
//! loss moves `|n> -> |n-1>` with amplitude `L_n`, both for `n = 1..D-1`.
//! With `s_k = sin(pi k / (D+1))` and a shape exponent `x`,
//!
//! ```text
//! G_n = (s_{n+1} / s_n)^(p x / 2)        L_n = (s_n / s_{n+1})^(p (1 - x) / 2)
//! ```
//!
//! so that `G_n^2 rho_{n-1} = L_n^2 rho_n` for `rho_n ∝ s_{n+1}^p`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{LaserError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Flat (quasi-isometric) Markovian gain.
    #[serde(rename = "p")]
    P,
    /// Non-isometric Markovian gain, gain/loss shape split by `lambda`.
    #[serde(rename = "plambda")]
    PLambda,
    /// Flat gain with sub-Poissonian (regular) pumping of Mandel-Q `q`.
    #[serde(rename = "pq")]
    PQ,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::P, Family::PLambda, Family::PQ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::P => "p",
            Family::PLambda => "plambda",
            Family::PQ => "pq",
        }
    }

    /// Gain and loss act through plain dissipators (no squared gain term).
    pub fn is_markovian(&self) -> bool {
        !matches!(self, Family::PQ)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = LaserError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(Family::P),
            "plambda" | "p-lambda" | "lambda" => Ok(Family::PLambda),
            "pq" | "p-q" | "q" => Ok(Family::PQ),
            other => Err(LaserError::InvalidParams(format!(
                "unknown family '{other}'"
            ))),
        }
    }
}

/// One laser model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: Family,
    /// Sharpness of the cavity distribution `sin^p`.
    pub p: f64,
    /// Gain/loss split; only read by [`Family::PLambda`].
    pub lambda: f64,
    /// Pump Mandel-Q; only read by [`Family::PQ`].
    pub q: f64,
    /// Number of cavity levels `D`.
    pub dim: usize,
}

impl ModelParams {
    pub fn p_family(p: f64, dim: usize) -> Self {
        Self {
            family: Family::P,
            p,
            lambda: 0.0,
            q: 0.0,
            dim,
        }
    }

    pub fn p_lambda(p: f64, lambda: f64, dim: usize) -> Self {
        Self {
            family: Family::PLambda,
            p,
            lambda,
            q: 0.0,
            dim,
        }
    }

    pub fn p_q(p: f64, q: f64, dim: usize) -> Self {
        Self {
            family: Family::PQ,
            p,
            lambda: 0.0,
            q,
            dim,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(LaserError::InvalidParams(format!(
                "p must be > 0, got {}",
                self.p
            )));
        }
        if self.dim < 3 {
            return Err(LaserError::InvalidParams(format!(
                "dim must be >= 3, got {}",
                self.dim
            )));
        }
        match self.family {
            Family::PLambda if !self.lambda.is_finite() => Err(LaserError::InvalidParams(format!(
                "lambda must be finite, got {}",
                self.lambda
            ))),
            Family::PQ if !(-1.0..=0.0).contains(&self.q) => Err(LaserError::InvalidParams(
                format!("q must lie in [-1, 0], got {}", self.q),
            )),
            _ => Ok(()),
        }
    }

    /// Mean cavity excitation of the `sin^p` distribution, `(D-1)/2`.
    pub fn mu(&self) -> f64 {
        (self.dim as f64 - 1.0) / 2.0
    }

    /// Shape exponent of the gain amplitudes.
    pub fn gain_shape(&self) -> f64 {
        match self.family {
            Family::P | Family::PQ => 0.0,
            Family::PLambda => self.lambda,
        }
    }

    /// Shape exponent of the loss amplitudes. For the regularly pumped
    /// family this is `-q/2`, which reaches the boundary value 1/2 at `q = -1`.
    pub fn loss_shape(&self) -> f64 {
        match self.family {
            Family::P => 0.0,
            Family::PLambda => self.lambda,
            Family::PQ => -self.q / 2.0,
        }
    }

    /// Parameters inside the window where the coherence scales as `mu^4`.
    pub fn heisenberg_regime(&self) -> bool {
        let split_ok = match self.family {
            Family::PLambda => (0.0..=1.0).contains(&self.lambda),
            _ => true,
        };
        self.p > 3.0 && split_ok
    }

    /// Human-readable notes for parameters outside the Heisenberg-limited window.
    pub fn regime_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.p <= 3.0 {
            notes.push(format!(
                "p = {} <= 3: outside the Heisenberg-limited regime",
                self.p
            ));
        }
        if self.family == Family::PLambda && !(0.0..=1.0).contains(&self.lambda) {
            notes.push(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if self.family == Family::PQ && self.q == -1.0 {
            notes.push("q = -1: loss shape x = 1/2 sits on the domain boundary".into());
        }
        notes
    }
}

/// Gain/loss band amplitudes plus the closed-form steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityOperators {
    pub dim: usize,
    /// `gain[n-1] = G_n`, `n = 1..D-1`.
    pub gain: Vec<f64>,
    /// `loss[n-1] = L_n`, `n = 1..D-1`.
    pub loss: Vec<f64>,
    /// `rho[n]`, `n = 0..D-1`, unit sum.
    pub rho: Vec<f64>,
    pub alpha: f64,
}

impl CavityOperators {
    /// `G_n`, zero outside `1..D-1`.
    #[inline]
    pub fn g(&self, n: usize) -> f64 {
        if n >= 1 && n < self.dim {
            self.gain[n - 1]
        } else {
            0.0
        }
    }

    /// `L_n`, zero outside `1..D-1`.
    #[inline]
    pub fn l(&self, n: usize) -> f64 {
        if n >= 1 && n < self.dim {
            self.loss[n - 1]
        } else {
            0.0
        }
    }

    /// Diagonal of `G^dag G` at level `m`.
    #[inline]
    pub fn gain_occupation(&self, m: usize) -> f64 {
        let g = self.g(m + 1);
        g * g
    }

    /// Diagonal of `L^dag L` at level `m`.
    #[inline]
    pub fn loss_occupation(&self, m: usize) -> f64 {
        let l = self.l(m);
        l * l
    }
}

/// `sin(pi k / (D+1))` for every `k = 0..=D+1`, evaluated directly from the
/// reflected argument `min(k, D+1-k)` so both edges keep full relative accuracy.
fn sines(dim: usize) -> Vec<f64> {
    let m = dim + 1;
    (0..=m)
        .map(|k| (PI * k.min(m - k) as f64 / m as f64).sin())
        .collect()
}

pub fn build_operators(params: &ModelParams) -> Result<CavityOperators> {
    params.validate()?;
    let d = params.dim;
    let s = sines(d);
    let p = params.p;
    let xg = params.gain_shape();
    let xl = params.loss_shape();
    let gain_exp = p * xg / 2.0;
    let loss_exp = p * (1.0 - xl) / 2.0;

    let mut gain = Vec::with_capacity(d - 1);
    let mut loss = Vec::with_capacity(d - 1);
    for n in 1..d {
        let ratio = s[n + 1] / s[n];
        gain.push(if gain_exp == 0.0 {
            1.0
        } else {
            ratio.powf(gain_exp)
        });
        loss.push(ratio.powf(-loss_exp));
    }
    let (rho, alpha) = steady_weights(p, d);
    Ok(CavityOperators {
        dim: d,
        gain,
        loss,
        rho,
        alpha,
    })
}

fn steady_weights(p: f64, dim: usize) -> (Vec<f64>, f64) {
    let s = sines(dim);
    let raw: Vec<f64> = (0..dim).map(|n| s[n + 1].powf(p)).collect();
    let total: f64 = raw.iter().sum();
    let alpha = 1.0 / total;
    (raw.into_iter().map(|r| r * alpha).collect(), alpha)
}

/// `rho_n = alpha sin^p(pi (n+1)/(D+1))`, normalised to unit sum.
pub fn analytic_steady_state(params: &ModelParams) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(steady_weights(params.p, params.dim).0)
}

/// Large-`D` limit of `D * alpha`: `sqrt(pi) Gamma((2+p)/2) / Gamma((1+p)/2)`.
pub fn normalization_limit(p: f64) -> f64 {
    PI.sqrt() * (ln_gamma((2.0 + p) / 2.0) - ln_gamma((1.0 + p) / 2.0)).exp()
}

pub fn mean_excitation(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(params.mu())
}
