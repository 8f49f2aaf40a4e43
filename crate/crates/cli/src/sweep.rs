//! Parameter sweeps with a per-row completion journal.
//!
//! The journal `<out>.journal` starts with one line describing the grid and
//! then holds one JSON line per finished grid point. A rerun with the same
//! grid skips journaled points; the file is removed once every row
//! succeeded.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;
use laser_core::observables::observe;
use laser_core::verify::fit_power_law;
use laser_core::{BandLiouvillian, Family, ModelParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{companion_path, emit_table, write_gnuplot, Cell, Table};
use crate::settings::{Settings, DEFAULT_LAMBDA, DEFAULT_P, DEFAULT_Q};

pub const OUTPUTS: [&str; 5] = ["flux", "coherence", "linewidth", "mandel_q", "w_fit"];

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Comma-separated families; defaults to --family.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<Family>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub p_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub q_grid: Option<Vec<f64>>,
    /// Comma-separated subset of flux, coherence, linewidth, mandel_q, w_fit.
    #[arg(long, value_delimiter = ',')]
    pub outputs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub families: Vec<Family>,
    pub p_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub d_grid: Vec<usize>,
    pub outputs: Vec<String>,
}

impl SweepSpec {
    pub fn from_settings(args: &SweepArgs, s: &Settings) -> Result<Self, CliError> {
        let cfg = &s.sweep;
        let families = args
            .families
            .clone()
            .or(cfg.families.clone())
            .unwrap_or_else(|| vec![s.family()]);
        let p_grid = args
            .p_grid
            .clone()
            .or(cfg.p_grid.clone())
            .unwrap_or_else(|| vec![s.p.unwrap_or(DEFAULT_P)]);
        let lambda_grid = args
            .lambda_grid
            .clone()
            .or(cfg.lambda_grid.clone())
            .unwrap_or_else(|| vec![s.lambda.unwrap_or(DEFAULT_LAMBDA)]);
        let q_grid = args
            .q_grid
            .clone()
            .or(cfg.q_grid.clone())
            .unwrap_or_else(|| vec![s.q.unwrap_or(DEFAULT_Q)]);
        let d_grid = s
            .dims
            .clone()
            .or(s.dim.map(|d| vec![d]))
            .ok_or_else(|| CliError::Usage("sweep needs --dims or --dim".into()))?;
        let outputs = args
            .outputs
            .clone()
            .or(cfg.outputs.clone())
            .unwrap_or_else(|| OUTPUTS.iter().map(|s| s.to_string()).collect())
            .into_iter()
            .filter(|o| !o.trim().is_empty())
            .collect();
        let spec = Self {
            families,
            p_grid,
            lambda_grid,
            q_grid,
            d_grid,
            outputs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let empty = [
            ("families", self.families.is_empty()),
            ("p grid", self.p_grid.is_empty()),
            ("lambda grid", self.lambda_grid.is_empty()),
            ("q grid", self.q_grid.is_empty()),
            ("dimension grid", self.d_grid.is_empty()),
            ("outputs", self.outputs.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(CliError::Usage(format!("sweep {name} is empty")));
        }
        if let Some(bad) = self.outputs.iter().find(|o| !OUTPUTS.contains(&o.as_str())) {
            return Err(CliError::Usage(format!(
                "unknown output '{bad}' (expected one of {})",
                OUTPUTS.join(", ")
            )));
        }
        for params in self.points() {
            params.validate()?;
        }
        Ok(())
    }

    /// Grid points in output order: family, p, lambda or q, D.
    pub fn points(&self) -> Vec<ModelParams> {
        let mut pts = Vec::new();
        for &family in &self.families {
            for &p in &self.p_grid {
                let shapes: Vec<ModelParams> = match family {
                    Family::P => vec![ModelParams::p_family(p, 0)],
                    Family::PLambda => self
                        .lambda_grid
                        .iter()
                        .map(|&l| ModelParams::p_lambda(p, l, 0))
                        .collect(),
                    Family::PQ => self
                        .q_grid
                        .iter()
                        .map(|&q| ModelParams::p_q(p, q, 0))
                        .collect(),
                };
                for shape in shapes {
                    pts.extend(self.d_grid.iter().map(|&d| shape.with_dim(d)));
                }
            }
        }
        pts
    }

    fn wants(&self, name: &str) -> bool {
        self.outputs.iter().any(|o| o == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: Family,
    pub p: f64,
    pub lambda: f64,
    pub q: f64,
    pub dim: usize,
    pub mu: f64,
    pub flux: Option<f64>,
    pub coherence: Option<f64>,
    pub linewidth: Option<f64>,
    pub mandel_q: Option<f64>,
    pub wall_time_s: f64,
    pub solver_residual: Option<f64>,
    pub error: Option<String>,
}

pub fn compute_row(params: &ModelParams) -> ResultRow {
    let start = Instant::now();
    let result = BandLiouvillian::new(params).and_then(|liou| observe(&liou));
    let mut row = ResultRow {
        family: params.family,
        p: params.p,
        lambda: params.lambda,
        q: params.q,
        dim: params.dim,
        mu: params.mu(),
        flux: None,
        coherence: None,
        linewidth: None,
        mandel_q: None,
        wall_time_s: 0.0,
        solver_residual: None,
        error: None,
    };
    match result {
        Ok(o) => {
            row.flux = Some(o.flux);
            row.coherence = Some(o.coherence);
            row.linewidth = Some(o.linewidth);
            row.mandel_q = Some(o.mandel_q);
            row.solver_residual = Some(o.residual);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    index: usize,
    row: ResultRow,
}

/// Journaled rows from a previous run of the same spec.
fn read_journal(path: &Path, spec: &SweepSpec) -> Result<BTreeMap<usize, ResultRow>, CliError> {
    let mut done = BTreeMap::new();
    let Ok(file) = File::open(path) else {
        return Ok(done);
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => return Ok(done),
    };
    let stored: SweepSpec = serde_json::from_str(&header)
        .map_err(|_| CliError::Usage(format!("unreadable journal header in {}", path.display())))?;
    if &stored != spec {
        return Err(CliError::Usage(format!(
            "journal {} belongs to a different sweep; remove it to start over",
            path.display()
        )));
    }
    // A torn final line from an interrupted run is skipped.
    for line in lines.map_while(|l| l.ok()) {
        if let Ok(entry) = serde_json::from_str::<JournalEntry>(&line) {
            if entry.row.error.is_none() {
                done.insert(entry.index, entry.row);
            }
        }
    }
    Ok(done)
}

fn open_journal(path: &Path, spec: &SweepSpec, fresh: bool) -> Result<File, CliError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io(format!("cannot open journal {}: {e}", path.display())))?;
    if fresh {
        file.set_len(0)?;
        writeln!(
            file,
            "{}",
            serde_json::to_string(spec).expect("spec serializes")
        )?;
        file.sync_data()?;
    }
    Ok(file)
}

/// Power-law exponent of coherence against D for each (family, p, lambda, q) group.
fn w_fits(rows: &[ResultRow]) -> Vec<Option<f64>> {
    let key = |r: &ResultRow| (r.family, r.p.to_bits(), r.lambda.to_bits(), r.q.to_bits());
    let mut groups: BTreeMap<(u8, u64, u64, u64), Vec<(f64, f64)>> = BTreeMap::new();
    let tag = |f: Family| Family::ALL.iter().position(|&g| g == f).unwrap() as u8;
    for r in rows {
        if let Some(c) = r.coherence {
            let k = key(r);
            groups
                .entry((tag(k.0), k.1, k.2, k.3))
                .or_default()
                .push((r.dim as f64, c));
        }
    }
    let fits: BTreeMap<_, Option<f64>> = groups
        .into_iter()
        .map(|(k, s)| (k, fit_power_law(&s, None).ok().map(|f| f.exponent)))
        .collect();
    rows.iter()
        .map(|r| {
            let k = key(r);
            fits.get(&(tag(k.0), k.1, k.2, k.3)).copied().flatten()
        })
        .collect()
}

fn table(spec: &SweepSpec, rows: &[ResultRow], timing: bool) -> Table {
    let mut header = vec!["family", "p", "lambda", "q", "D", "mu"];
    let picked: Vec<&str> = OUTPUTS.iter().copied().filter(|o| spec.wants(o)).collect();
    header.extend(&picked);
    header.push("solver_residual");
    if timing {
        header.push("wall_time_s");
    }
    header.push("error");
    let fits = if spec.wants("w_fit") {
        w_fits(rows)
    } else {
        vec![None; rows.len()]
    };
    let opt = |x: Option<f64>| x.map_or(Cell::S(String::new()), Cell::F);
    let mut t = Table::new(&header);
    for (r, w) in rows.iter().zip(fits) {
        let mut cells = vec![
            Cell::S(r.family.to_string()),
            Cell::F(r.p),
            Cell::F(r.lambda),
            Cell::F(r.q),
            Cell::I(r.dim as u64),
            Cell::F(r.mu),
        ];
        for name in &picked {
            cells.push(opt(match *name {
                "flux" => r.flux,
                "coherence" => r.coherence,
                "linewidth" => r.linewidth,
                "mandel_q" => r.mandel_q,
                _ => w,
            }));
        }
        cells.push(opt(r.solver_residual));
        if timing {
            cells.push(Cell::F(r.wall_time_s));
        }
        cells.push(Cell::S(r.error.clone().unwrap_or_default()));
        t.rows.push(cells);
    }
    t
}

/// Runs the sweep; returns the exit code (3 when any row failed).
pub fn run(args: &SweepArgs, settings: &Settings) -> Result<i32, CliError> {
    let spec = SweepSpec::from_settings(args, settings)?;
    let points = spec.points();
    let journal_path = settings
        .out
        .as_deref()
        .map(|o| companion_path(o, ".journal"));
    let mut done = match &journal_path {
        Some(p) => read_journal(p, &spec)?,
        None => BTreeMap::new(),
    };
    eprintln!(
        "sweep: {} grid points, {} already journaled, {} workers",
        points.len(),
        done.len(),
        settings.workers
    );
    let pending: Vec<usize> = (0..points.len())
        .filter(|i| !done.contains_key(i))
        .collect();
    let journal = match &journal_path {
        Some(p) => Some(Mutex::new(open_journal(p, &spec, done.is_empty())?)),
        None => None,
    };
    let pool = settings.thread_pool()?;
    let fresh: Vec<(usize, ResultRow)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let row = compute_row(&points[i]);
                if let Some(j) = &journal {
                    let line = serde_json::to_string(&JournalEntry {
                        index: i,
                        row: row.clone(),
                    })
                    .expect("row serializes");
                    let mut f = j.lock().expect("journal lock");
                    writeln!(f, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
                    f.flush()?;
                }
                Ok((i, row))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    done.extend(fresh);
    let rows: Vec<ResultRow> = done.into_values().collect();
    let failed: BTreeSet<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.error.is_some())
        .map(|(i, _)| i)
        .collect();
    let t = table(&spec, &rows, settings.timing);
    emit_table(
        settings,
        "sweep",
        &t,
        json!({ "spec": spec, "failed_rows": failed.len() }),
    )?;
    let ys: Vec<(usize, &str)> = t
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.as_str() == "coherence")
        .map(|(i, h)| (i + 1, h.as_str()))
        .collect();
    if !ys.is_empty() {
        write_gnuplot(settings, "coherence against D", (5, "D"), &ys, true)?;
    }
    if let Some(p) = journal_path {
        if failed.is_empty() {
            drop(journal);
            std::fs::remove_file(p)?;
        }
    }
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("sweep: {} rows failed, see the error column", failed.len());
        Ok(3)
    }
}
