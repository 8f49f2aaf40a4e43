use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use laser_core::analytics::{
    coherence_divisor, coherence_formula, coherence_prefactor, heisenberg_bound, optimal_p,
};
use laser_core::observables::{g1_trace, g2ps_trace, observe};
use laser_core::superop::pq_norm_diagnostics;
use laser_core::verify::{
    condition4_g1, condition4_g2, fit_power_law, optimum_models, oracle_equivalence, regime_scan,
    G1Search, G2Search,
};
use laser_core::{BandLiouvillian, Family, LaserError, ModelParams};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{document, emit_json, emit_table, status, write_gnuplot, Cell, Table};
use crate::settings::{Settings, DEFAULT_P};

/// Below this dimension the large-`D` formulas are not meaningful.
const ASYMPTOTIC_MIN_DIM: usize = 16;

pub fn cmd_observe(s: &Settings) -> Result<i32, CliError> {
    let params = s.single_model()?;
    let obs = s
        .thread_pool()?
        .install(|| BandLiouvillian::new(&params).and_then(|l| observe(&l)))?;
    let mut notes = params.regime_notes();
    let prediction = if params.p > 3.0 && params.dim >= ASYMPTOTIC_MIN_DIM {
        let c = coherence_formula(&params)?;
        json!({
            "coherence": c,
            "relative_difference": (obs.coherence - c) / c,
        })
    } else {
        notes.push(format!(
            "asymptotic-formula not applicable (needs p > 3 and D >= {ASYMPTOTIC_MIN_DIM})"
        ));
        Value::Null
    };
    let doc = document(
        "observe",
        json!({
            "params": params,
            "mu": params.mu(),
            "observables": {
                "flux": obs.flux,
                "coherence": obs.coherence,
                "linewidth": obs.linewidth,
                "mandel_q": obs.mandel_q,
                "solver_residual": obs.residual,
            },
            "prediction": prediction,
            "notes": notes,
        }),
    );
    emit_json(s, &doc)?;
    Ok(0)
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    /// Window end in units of the inverse linewidth.
    #[arg(long, default_value_t = 10.0)]
    pub span: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    G1,
    G2,
}

pub fn cmd_trace(s: &Settings, args: &TraceArgs, kind: TraceKind) -> Result<i32, CliError> {
    if !(args.span > 0.0) || args.points < 2 {
        return Err(CliError::Usage(
            "trace needs --span > 0 and --points >= 2".into(),
        ));
    }
    let params = s.single_model()?;
    let (liou, obs) = s.thread_pool()?.install(|| -> Result<_, LaserError> {
        let liou = BandLiouvillian::new(&params)?;
        let obs = observe(&liou)?;
        Ok((liou, obs))
    })?;
    let end = args.span / obs.linewidth;
    let times: Vec<f64> = (0..args.points)
        .map(|i| end * i as f64 / (args.points - 1) as f64)
        .collect();
    let pool = s.thread_pool()?;
    let (command, header, trace) = match kind {
        TraceKind::G1 => (
            "trace-g1",
            ["s", "g1", "ideal"],
            pool.install(|| g1_trace(&liou, &times))?,
        ),
        TraceKind::G2 => (
            "trace-g2",
            ["s", "g2ps", "ideal"],
            pool.install(|| g2ps_trace(&liou, &times))?,
        ),
    };
    let mut t = Table::new(&header);
    for (&time, &v) in trace.times.iter().zip(&trace.values) {
        let ideal = match kind {
            TraceKind::G1 => (-obs.linewidth * time / 2.0).exp(),
            TraceKind::G2 => 1.0,
        };
        t.rows.push(vec![Cell::F(time), Cell::F(v), Cell::F(ideal)]);
    }
    emit_table(
        s,
        command,
        &t,
        json!({ "params": params, "linewidth": obs.linewidth, "flux": obs.flux }),
    )?;
    write_gnuplot(s, command, (1, "s"), &[(2, header[1]), (3, "ideal")], false)?;
    Ok(0)
}

#[derive(Debug, Clone, Subcommand)]
pub enum VerifyCmd {
    /// Deviation of g1 and g2 from an ideal beam of the same coherence.
    Cond4 {
        /// Half-width of the g2 search box in units of sqrt(3 C / 2) / F.
        #[arg(long, default_value_t = 0.5)]
        window_scale: f64,
        #[arg(long, default_value_t = 8)]
        starts: usize,
    },
    /// Norm decay of the regular-pumping approximations.
    SsPq,
    /// Band solver against the dense superoperator on random small models.
    Oracle,
    /// Coherence exponent against p.
    Regime {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        p_grid: Option<Vec<f64>>,
    },
}

struct Check {
    name: String,
    passed: bool,
    detail: Value,
}

fn finish(s: &Settings, which: &str, checks: Vec<Check>, extra: Value) -> Result<i32, CliError> {
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        status(c.passed, &format!("{which}: {}", c.name));
    }
    let mut doc = document(&format!("verify {which}"), extra);
    doc["passed"] = passed.into();
    doc["checks"] = checks
        .into_iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
        .collect();
    emit_json(s, &doc)?;
    Ok(if passed { 0 } else { 1 })
}

/// Least-squares slope in log-log space; `None` when every value is at
/// round-off level.
fn log_slope(dims: &[usize], vals: &[f64]) -> Option<f64> {
    if vals.iter().all(|v| v.abs() < 1e-14) {
        return None;
    }
    let n = vals.len() as f64;
    let lx: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    let ly: Vec<f64> = vals.iter().map(|v| v.abs().ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn cmd_verify(s: &Settings, which: &VerifyCmd) -> Result<i32, CliError> {
    let pool = s.thread_pool()?;
    match which {
        VerifyCmd::Oracle => {
            let report = pool.install(|| oracle_equivalence(s.seed))?;
            let check = Check {
                name: format!("worst relative discrepancy {:.3e}", report.worst),
                passed: report.passed(),
                detail: json!({ "worst": report.worst, "tolerance": report.tolerance, "first_failure": report.first_failure }),
            };
            finish(
                s,
                "oracle",
                vec![check],
                json!({ "seed": s.seed, "draws": report.draws.len() }),
            )
        }
        VerifyCmd::SsPq => {
            let dims = s.dims_or(&[100, 200, 400]);
            if dims.len() < 2 {
                return Err(CliError::Usage(
                    "ss-pq needs at least two dimensions".into(),
                ));
            }
            let p = s.p.unwrap_or(3.0);
            let q = s.q.unwrap_or(-1.0);
            let rows = pool.install(|| pq_norm_diagnostics(&ModelParams::p_q(p, q, 3), &dims))?;
            let col = |f: fn(&laser_core::superop::PqNormRow) -> f64| {
                rows.iter().map(f).collect::<Vec<_>>()
            };
            let resid = log_slope(&dims, &col(|r| r.steady_state_residual));
            let top = log_slope(&dims, &col(|r| r.top_projector_norm));
            let gain = log_slope(&dims, &col(|r| r.gain_minus_one_norm));
            let loss = log_slope(&dims, &col(|r| r.loss_norm));
            let checks = vec![
                Check {
                    name: format!(
                        "steady-state residual exponent {} <= -1.5",
                        resid.map_or("(identically zero)".into(), |w| format!("{w:.3}"))
                    ),
                    passed: resid.is_none_or(|w| w <= -1.5),
                    detail: json!({ "exponent": resid, "bound": -1.5 }),
                },
                Check {
                    name: "top-projector term decays faster than gain - 1".into(),
                    passed: match (top, gain) {
                        (Some(t), Some(g)) => t < g,
                        _ => true,
                    },
                    detail: json!({ "top_exponent": top, "gain_minus_one_exponent": gain }),
                },
            ];
            finish(
                s,
                "ss-pq",
                checks,
                json!({ "p": p, "q": q, "dims": dims, "loss_exponent": loss, "rows": rows }),
            )
        }
        VerifyCmd::Cond4 {
            window_scale,
            starts,
        } => {
            let dmax = s.dmax.unwrap_or(250);
            let dims: Vec<usize> = s
                .dims_or(&[50, 100, 150, 200, 250])
                .into_iter()
                .filter(|&d| d <= dmax)
                .collect();
            if dims.len() < 4 {
                return Err(CliError::Usage(format!(
                    "cond4 needs at least four dimensions <= {dmax}"
                )));
            }
            let families = match s.family {
                Some(f) => vec![f],
                None => vec![Family::PLambda, Family::PQ],
            };
            let p = s.p.unwrap_or(DEFAULT_P);
            let search = G2Search {
                window_scale: *window_scale,
                seed: s.seed,
                n_starts: *starts,
                ..Default::default()
            };
            let mut checks = Vec::new();
            let mut reports = Vec::new();
            for family in families {
                let models = optimum_models(family, p, &dims);
                let g1 = pool.install(|| condition4_g1(&models, &G1Search::default()))?;
                let rep = pool.install(|| condition4_g2(&models, &G1Search::default(), &search))?;
                let fit = rep.fit_g2.clone().ok_or(LaserError::InsufficientSamples {
                    needed: 4,
                    got: dims.len(),
                })?;
                let g1_max: Vec<f64> = g1.iter().map(|d| d.max).collect();
                checks.push(Check {
                    name: format!("{family}: max |dg1| decreasing with D"),
                    passed: g1_max.windows(2).all(|w| w[1] < w[0]),
                    detail: json!({ "max": g1_max }),
                });
                checks.push(Check {
                    name: format!(
                        "{family}: max |dg2| exponent {:.3} in -0.5 +/- 0.1",
                        fit.exponent
                    ),
                    passed: (fit.exponent + 0.5).abs() <= 0.1,
                    detail: json!({ "exponent": fit.exponent, "target": -0.5, "tolerance": 0.1 }),
                });
                if *window_scale == 0.5 {
                    checks.push(Check {
                        name: format!(
                            "{family}: max |dg2| prefactor {:.3} in [0.9, 1.7]",
                            fit.prefactor
                        ),
                        passed: (0.9..=1.7).contains(&fit.prefactor),
                        detail: json!({ "prefactor": fit.prefactor, "band": [0.9, 1.7] }),
                    });
                }
                reports.push(json!({ "family": family, "g1": g1, "g2": rep }));
            }
            finish(
                s,
                "cond4",
                checks,
                json!({ "p": p, "dims": dims, "window_scale": window_scale, "seed": s.seed, "reports": reports }),
            )
        }
        VerifyCmd::Regime { p_grid } => {
            let grid = p_grid
                .clone()
                .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0, 5.0]);
            let dims = s.dims_or(&laser_core::verify::DEFAULT_DIMS);
            let template = s.model(s.family(), 1.0, 3);
            let rows = pool.install(|| regime_scan(&template, &grid, &dims))?;
            let checks = rows
                .iter()
                .map(|r| Check {
                    name: format!("p={}: w={:.3} vs min(p+1, 4)={}", r.p, r.fit.exponent, r.guide),
                    passed: (r.fit.exponent - r.guide).abs() <= 0.3,
                    detail: json!({ "exponent": r.fit.exponent, "guide": r.guide, "tolerance": 0.3, "class": r.class }),
                })
                .collect();
            finish(
                s,
                "regime",
                checks,
                json!({ "family": template.family, "dims": dims, "rows": rows }),
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictWhat {
    /// Closed-form coherence for the given model (default).
    Coherence,
    /// The sharpness maximising the closed-form prefactor.
    OptimalP,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(value_enum, default_value_t = PredictWhat::Coherence)]
    pub what: PredictWhat,
    /// Mean photon number for the Heisenberg bound; defaults to the model's.
    #[arg(long)]
    pub mu: Option<f64>,
}

pub fn cmd_predict(s: &Settings, args: &PredictArgs) -> Result<i32, CliError> {
    let doc = match args.what {
        PredictWhat::OptimalP => {
            let p = optimal_p();
            document(
                "predict",
                json!({ "optimal_p": p, "prefactor": coherence_prefactor(p)? }),
            )
        }
        PredictWhat::Coherence => {
            let params = s.single_model()?;
            let mu = args.mu.unwrap_or_else(|| params.mu());
            document(
                "predict",
                json!({
                    "params": params,
                    "mu": params.mu(),
                    "prefactor": coherence_prefactor(params.p)?,
                    "divisor": coherence_divisor(&params),
                    "coherence": coherence_formula(&params)?,
                    "optimal_p": optimal_p(),
                    "heisenberg_bound": { "mu": mu, "value": heisenberg_bound(mu)? },
                }),
            )
        }
    };
    emit_json(s, &doc)?;
    Ok(0)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV file with a header row, e.g. sweep output.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "D")]
    pub x: String,
    #[arg(long, default_value = "coherence")]
    pub y: String,
    /// Fit only samples with lo <= x <= hi.
    #[arg(long, value_delimiter = ',')]
    pub window: Option<Vec<f64>>,
}

pub fn cmd_fit(s: &Settings, args: &FitArgs) -> Result<i32, CliError> {
    let mut rdr = csv::Reader::from_path(&args.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.input.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("column '{name}' not in {}", args.input.display()))
        })
    };
    let (xi, yi) = (col(&args.x)?, col(&args.y)?);
    let fi = headers.iter().position(|h| h == "family");
    let ei = headers.iter().position(|h| h == "error");
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if ei.and_then(|i| rec.get(i)).is_some_and(|e| !e.is_empty()) {
            continue;
        }
        if let (Some(f), Some(i)) = (s.family, fi) {
            if rec.get(i) != Some(f.as_str()) {
                continue;
            }
        }
        let parse = |i: usize| rec.get(i).and_then(|v| v.trim().parse::<f64>().ok());
        if let (Some(x), Some(y)) = (parse(xi), parse(yi)) {
            samples.push((x, y));
        }
    }
    let window = match args.window.as_deref() {
        None => None,
        Some(&[lo, hi]) if lo < hi => Some((lo, hi)),
        Some(_) => return Err(CliError::Usage("--window takes lo,hi with lo < hi".into())),
    };
    let fit = fit_power_law(&samples, window)?;
    emit_json(
        s,
        &document(
            "fit",
            json!({ "input": args.input, "x": args.x, "y": args.y, "fit": fit }),
        ),
    )?;
    Ok(0)
}
