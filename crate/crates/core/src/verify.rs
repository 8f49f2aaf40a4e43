//! Verification experiments: power-law fits, Condition-4 deviation searches,
//! regime classification and the band-versus-dense oracle harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytics::{ideal_g1, ideal_g2, IdealBeam};
use crate::error::{LaserError, Result};
use crate::models::{Family, ModelParams};
use crate::observables::{coherence, coherence_signed, g1, g2_general, mandel_q};
use crate::optimize::{golden_max, nelder_mead};
use crate::superop::{BandLiouvillian, DenseOracle};

/// Geometric D-grid giving equal log-space leverage.
pub const DEFAULT_DIMS: [usize; 6] = [50, 71, 100, 141, 200, 283];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub prefactor: f64,
    pub exponent: f64,
    pub stderr_exponent: f64,
    pub window: (f64, f64),
    pub samples: Vec<(f64, f64)>,
    /// Two-sided p-value of a runs test on the residual signs.
    pub runs_p_value: f64,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Least-squares fit of `y = c x^w` in log-log space over samples with `x`
/// inside `window` (all samples when `None`).
pub fn fit_power_law(samples: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<PowerLawFit> {
    let window = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let used: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(x, _)| x >= window.0 && x <= window.1)
        .collect();
    if used.len() < 4 {
        return Err(LaserError::InsufficientSamples {
            needed: 4,
            got: used.len(),
        });
    }
    if let Some(&(x, y)) = used.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(LaserError::InvalidParams(format!(
            "power-law fit needs positive data, got ({x}, {y})"
        )));
    }
    let n = used.len() as f64;
    let lx: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LaserError::InvalidParams(
            "power-law fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let w = sxy / sxx;
    let b = my - w * mx;
    let resid: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (b + w * x)).collect();
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let lo = used.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = used.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit {
        prefactor: b.exp(),
        exponent: w,
        stderr_exponent: stderr,
        window: (lo, hi),
        runs_p_value: runs_test(&resid),
        samples: used,
    })
}

/// Wald-Wolfowitz runs test on residual signs (normal approximation).
fn runs_test(resid: &[f64]) -> f64 {
    let signs: Vec<bool> = resid
        .iter()
        .filter(|r| **r != 0.0)
        .map(|r| *r > 0.0)
        .collect();
    let pos = signs.iter().filter(|s| **s).count() as f64;
    let neg = signs.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return 1.0;
    }
    let runs = 1.0 + signs.windows(2).filter(|w| w[0] != w[1]).count() as f64;
    let n = pos + neg;
    let mean = 2.0 * pos * neg / n + 1.0;
    let var = 2.0 * pos * neg * (2.0 * pos * neg - n) / (n * n * (n - 1.0));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = (runs - mean).abs() / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - normal.cdf(z))
}

/// Model plus its ideal comparator.
struct Prepared {
    liou: BandLiouvillian,
    beam: IdealBeam,
    coherence: f64,
}

fn prepare(params: &ModelParams) -> Result<Prepared> {
    let liou = BandLiouvillian::new(params)?;
    let c = coherence(&liou)?;
    let beam = IdealBeam::new(liou.flux, 4.0 * liou.flux / c)?;
    Ok(Prepared {
        liou,
        beam,
        coherence: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G1Deviation {
    pub dim: usize,
    pub coherence: f64,
    pub linewidth: f64,
    pub max: f64,
    pub arg: f64,
}

/// Search settings for the single-delay deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G1Search {
    /// Window end in units of `1 / linewidth`.
    pub span: f64,
    pub grid_points: usize,
    /// Smallest non-zero grid time relative to the window end.
    pub first_fraction: f64,
}

impl Default for G1Search {
    fn default() -> Self {
        Self {
            span: 10.0,
            grid_points: 200,
            first_fraction: 1e-6,
        }
    }
}

/// `0` followed by `points - 1` geometric points ending at `end`.
fn geometric_grid(end: f64, points: usize, first_fraction: f64) -> Vec<f64> {
    let m = points.max(2) - 1;
    let mut grid = vec![0.0];
    for i in 0..m {
        let frac = if m == 1 {
            0.0
        } else {
            i as f64 / (m - 1) as f64
        };
        grid.push(end * first_fraction.powf(1.0 - frac));
    }
    grid
}

fn g1_max(prep: &Prepared, search: &G1Search) -> Result<G1Deviation> {
    let end = search.span / prep.beam.linewidth;
    let dev = |s: f64| -> Result<f64> { Ok((g1(&prep.liou, s)? - ideal_g1(&prep.beam, s)).abs()) };
    let grid = geometric_grid(end, search.grid_points, search.first_fraction);
    let values = grid.iter().map(|&s| dev(s)).collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let (mut best_s, mut best) = (grid[order[0]], values[order[0]]);
    let mut err = None;
    for &i in order.iter().take(3) {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        if hi <= lo {
            continue;
        }
        let (s, v) = golden_max(
            |s| match dev(s) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            1e-9 * (hi - lo).max(1e-300),
        );
        if v > best {
            best = v;
            best_s = s;
        }
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(G1Deviation {
        dim: prep.liou.dim(),
        coherence: prep.coherence,
        linewidth: prep.beam.linewidth,
        max: best,
        arg: best_s,
    })
}

/// Maximum of `|g1_laser(s) - exp(-l s / 2)|` over `s in [0, span / l]`.
pub fn condition4_g1(params_list: &[ModelParams], search: &G1Search) -> Result<Vec<G1Deviation>> {
    params_list
        .par_iter()
        .map(|p| g1_max(&prepare(p)?, search))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Deviation {
    pub dim: usize,
    pub coherence: f64,
    pub tau: f64,
    pub max: f64,
    /// `(s, s', t', t)` with `s` pinned at zero.
    pub args: [f64; 4],
    /// Largest deviation seen at the random probe points.
    pub probe_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub d_list: Vec<usize>,
    pub delta_g1_max: Vec<G1Deviation>,
    pub delta_g2_max: Vec<G2Deviation>,
    pub tau_used: Vec<f64>,
    /// `max |dg2|` against coherence; `None` with fewer than four models.
    pub fit_g2: Option<PowerLawFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Search {
    pub n_starts: usize,
    pub seed: u64,
    /// Half-width of the time box in units of `sqrt(3 C / 2) / F`.
    pub window_scale: f64,
    pub grid_per_axis: usize,
    pub probes: usize,
    pub max_iter: usize,
}

impl Default for G2Search {
    fn default() -> Self {
        Self {
            n_starts: 8,
            seed: 0,
            window_scale: 1.0,
            grid_per_axis: 9,
            probes: 30,
            max_iter: 200,
        }
    }
}

fn g2_dev(prep: &Prepared, x: &[f64]) -> Result<f64> {
    let laser = g2_general(&prep.liou, 0.0, x[0], x[1], x[2])?;
    Ok((laser - ideal_g2(&prep.beam, 0.0, x[0], x[1], x[2])).abs())
}

/// Separate coincident reported times by `eps` so the tuple stays well ordered.
fn spread_coincident(x: &[f64], eps: f64) -> [f64; 4] {
    let mut out = [0.0, x[0], x[1], x[2]];
    for i in 1..4 {
        let mut bump = 0.0;
        while out[..i].iter().any(|&y| (out[i] + bump - y).abs() < eps) {
            bump += eps;
        }
        out[i] += bump;
    }
    out
}

fn g2_max(prep: &Prepared, search: &G2Search, seed: u64) -> Result<G2Deviation> {
    let tau = search.window_scale * (1.5 * prep.coherence).sqrt() / prep.liou.flux;
    let lo = [-tau; 3];
    let hi = [tau; 3];
    let mut err = None;
    let mut objective = |x: &[f64]| match g2_dev(prep, x) {
        Ok(v) => -v,
        Err(e) => {
            err.get_or_insert(e);
            f64::INFINITY
        }
    };

    let g = search.grid_per_axis.max(2);
    let axis: Vec<f64> = (0..g)
        .map(|i| -tau + 2.0 * tau * i as f64 / (g - 1) as f64)
        .collect();
    let mut grid: Vec<(f64, [f64; 3])> = Vec::with_capacity(g * g * g);
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                let x = [a, b, c];
                grid.push((objective(&x), x));
            }
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let from_grid = search.n_starts.div_ceil(2);
    let mut starts: Vec<[f64; 3]> = grid.iter().take(from_grid).map(|p| p.1).collect();
    while starts.len() < search.n_starts {
        starts.push([
            rng.random_range(-tau..tau),
            rng.random_range(-tau..tau),
            rng.random_range(-tau..tau),
        ]);
    }
    let step = [0.05 * tau; 3];
    let mut best = (grid[0].0, grid[0].1.to_vec(), usize::MAX);
    for (i, x0) in starts.iter().enumerate() {
        let r = nelder_mead(&mut objective, x0, &step, &lo, &hi, search.max_iter, 1e-12);
        if r.value < best.0 {
            best = (r.value, r.x, i);
        }
    }
    if best.2 != usize::MAX {
        let again = nelder_mead(
            &mut objective,
            &starts[best.2],
            &step,
            &lo,
            &hi,
            search.max_iter,
            1e-12,
        );
        if (again.value - best.0).abs() > 1e-6 * best.0.abs().max(1e-300) {
            return Err(LaserError::OptimizerStall(format!(
                "re-run gave {} instead of {}",
                -again.value, -best.0
            )));
        }
    }
    let mut probe_max = 0.0f64;
    for _ in 0..search.probes {
        let x = [
            rng.random_range(-tau..tau),
            rng.random_range(-tau..tau),
            rng.random_range(-tau..tau),
        ];
        probe_max = probe_max.max(-objective(&x));
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(G2Deviation {
        dim: prep.liou.dim(),
        coherence: prep.coherence,
        tau,
        max: -best.0,
        args: spread_coincident(&best.1, 1e-9 * tau),
        probe_max,
    })
}

/// Condition-4 deviations for each model: the `g1` maximum and the `g2`
/// maximum over `s', t', t in [-tau, tau]` (with `s = 0`), fitted against
/// coherence.
pub fn condition4_g2(
    params_list: &[ModelParams],
    g1_search: &G1Search,
    search: &G2Search,
) -> Result<DeviationReport> {
    let mut sorted = params_list.to_vec();
    sorted.sort_by_key(|p| p.dim);
    let rows = sorted
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let prep = prepare(p)?;
            let seed = search
                .seed
                .wrapping_add(i as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15);
            Ok((g1_max(&prep, g1_search)?, g2_max(&prep, search, seed)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (delta_g1_max, delta_g2_max): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let samples: Vec<(f64, f64)> = delta_g2_max.iter().map(|r| (r.coherence, r.max)).collect();
    let fit_g2 = if samples.len() >= 4 {
        Some(fit_power_law(&samples, None)?)
    } else {
        None
    };
    Ok(DeviationReport {
        d_list: sorted.iter().map(|p| p.dim).collect(),
        tau_used: delta_g2_max.iter().map(|r| r.tau).collect(),
        delta_g1_max,
        delta_g2_max,
        fit_g2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingClass {
    Heisenberg,
    SubHeisenberg,
    Crossover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub p: f64,
    pub fit: PowerLawFit,
    pub class: ScalingClass,
    /// `min(p + 1, 4)`.
    pub guide: f64,
}

/// Power-law fit of coherence against `D` for each `p`, classified by
/// the fitted exponent.
pub fn regime_scan(
    template: &ModelParams,
    p_grid: &[f64],
    d_grid: &[usize],
) -> Result<Vec<RegimeRow>> {
    if p_grid.is_empty() || d_grid.is_empty() {
        return Err(LaserError::InvalidParams(
            "regime scan needs non-empty grids".into(),
        ));
    }
    p_grid
        .par_iter()
        .map(|&p| {
            let samples = d_grid
                .iter()
                .map(|&d| {
                    let liou = BandLiouvillian::new(&template.with_p(p).with_dim(d))?;
                    Ok((d as f64, coherence(&liou)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let fit = fit_power_law(&samples, None)?;
            let w = fit.exponent;
            let class = if (w - 4.0).abs() <= 0.3 {
                ScalingClass::Heisenberg
            } else if (w - (p + 1.0)).abs() <= 0.3 {
                ScalingClass::SubHeisenberg
            } else {
                ScalingClass::Crossover
            };
            Ok(RegimeRow {
                p,
                fit,
                class,
                guide: (p + 1.0).min(4.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub draw: usize,
    pub quantity: String,
    pub band: f64,
    pub dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub tolerance: f64,
    pub draws: Vec<ModelParams>,
    /// Largest relative discrepancy seen over all draws and quantities.
    pub worst: f64,
    pub first_failure: Option<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Additive perturbation of one band-block entry, for self-testing the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub draw: usize,
    pub band: usize,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

pub const ORACLE_DRAWS: usize = 20;
pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// Random model draws with `D <= 12`; draw 0 is always regular pumping at `q = -1`.
pub fn oracle_draws(seed: u64) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ORACLE_DRAWS)
        .map(|i| {
            let dim = rng.random_range(3..=12);
            let p = rng.random_range(1.0..6.0);
            match if i == 0 { 2 } else { rng.random_range(0..3) } {
                0 => ModelParams::p_family(p, dim),
                1 => ModelParams::p_lambda(p, rng.random_range(0.0..1.0), dim),
                _ => ModelParams::p_q(
                    p,
                    if i == 0 {
                        -1.0
                    } else {
                        rng.random_range(-1.0..=0.0)
                    },
                    dim,
                ),
            }
        })
        .collect()
}

fn compare_draw(
    liou: &BandLiouvillian,
    dense: &DenseOracle,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(String, f64, f64)>> {
    let mut out = Vec::new();
    for (n, (&b, d)) in liou.rho_ss.iter().zip(dense.populations()).enumerate() {
        out.push((format!("rho[{n}]"), b, d));
    }
    out.push((
        "coherence".into(),
        coherence_signed(liou)?,
        dense.coherence(),
    ));
    out.push(("mandel_q".into(), mandel_q(liou)?, dense.mandel_q()));
    for s in [0.3, 1.7, 5.0] {
        out.push((format!("g1({s})"), g1(liou, s)?, dense.g1(s)));
    }
    for _ in 0..2 {
        let t: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        out.push((
            format!("g2({:.3},{:.3},{:.3},{:.3})", t[0], t[1], t[2], t[3]),
            g2_general(liou, t[0], t[1], t[2], t[3])?,
            dense.g2(t[0], t[1], t[2], t[3]),
        ));
    }
    Ok(out)
}

/// Band route against the dense flattened-space route for [`ORACLE_DRAWS`]
/// seeded models, optionally with a fault injected into one band block.
pub fn oracle_equivalence_with(seed: u64, fault: Option<Fault>) -> Result<OracleReport> {
    let draws = oracle_draws(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut worst = 0.0f64;
    let mut first_failure = None;
    for (i, params) in draws.iter().enumerate() {
        let mut liou = BandLiouvillian::new(params)?;
        if let Some(f) = fault.filter(|f| f.draw == i) {
            liou.blocks[f.band].add(f.row, f.col, f.delta);
            liou.refresh()?;
        }
        let dense = DenseOracle::new(&liou.ops, params)?;
        for (quantity, b, d) in compare_draw(&liou, &dense, &mut rng)? {
            let rel = (b - d).abs() / d.abs().max(1.0);
            worst = worst.max(rel);
            if !(rel <= ORACLE_TOLERANCE) && first_failure.is_none() {
                first_failure = Some(Mismatch {
                    draw: i,
                    quantity,
                    band: b,
                    dense: d,
                });
            }
        }
    }
    Ok(OracleReport {
        seed,
        tolerance: ORACLE_TOLERANCE,
        draws,
        worst,
        first_failure,
    })
}

pub fn oracle_equivalence(seed: u64) -> Result<OracleReport> {
    oracle_equivalence_with(seed, None)
}

/// Sub-Poissonian optimum models used by the Condition-4 checks.
pub fn optimum_models(family: Family, p: f64, dims: &[usize]) -> Vec<ModelParams> {
    dims.iter()
        .map(|&d| match family {
            Family::P => ModelParams::p_family(p, d),
            Family::PLambda => ModelParams::p_lambda(p, 0.5, d),
            Family::PQ => ModelParams::p_q(p, -1.0, d),
        })
        .collect()
}
