//! CSV and JSON emitters.

use std::fs::File;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;
use crate::settings::{Format, Settings};

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Column-oriented table with a uniform CSV/JSON rendering.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(n) => n.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) if x.is_finite() => Value::from(*x),
            Cell::F(_) => Value::Null,
            Cell::I(n) => Value::from(*n),
            Cell::S(s) if s.is_empty() => Value::Null,
            Cell::S(s) => Value::from(s.clone()),
        }
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::csv))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    Value::Object(
                        self.header
                            .iter()
                            .cloned()
                            .zip(row.iter().map(Cell::json))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Wraps `body` with the schema version and command name.
pub fn document(command: &str, body: Value) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), SCHEMA_VERSION.into());
    doc.insert("command".into(), command.into());
    if let Value::Object(map) = body {
        doc.extend(map);
    }
    Value::Object(doc)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => {
            Box::new(io::BufWriter::new(File::create(path).map_err(|e| {
                CliError::Io(format!("cannot create {}: {e}", path.display()))
            })?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

pub fn emit_json(settings: &Settings, doc: &Value) -> Result<(), CliError> {
    let mut w = sink(settings.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, doc).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Tables go out as CSV or as a JSON document with a `rows` array.
pub fn emit_table(
    settings: &Settings,
    command: &str,
    table: &Table,
    extra: Value,
) -> Result<(), CliError> {
    match settings.format {
        Format::Csv => {
            let mut w = sink(settings.out.as_deref())?;
            table.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let mut doc = document(command, extra);
            doc["rows"] = table.to_json();
            emit_json(settings, &doc)
        }
    }
}

pub fn companion_path(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<out>.gp` plotting columns `x:y` of the CSV output.
pub fn write_gnuplot(
    settings: &Settings,
    title: &str,
    x: (usize, &str),
    ys: &[(usize, &str)],
    logscale: bool,
) -> Result<(), CliError> {
    if !settings.gnuplot {
        return Ok(());
    }
    let out = settings
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--gnuplot needs --out".into()))?;
    if settings.format != Format::Csv {
        return Err(CliError::Usage("--gnuplot needs --format csv".into()));
    }
    let data = out.display().to_string().replace('\'', "''");
    let mut script = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nset xlabel '{}'\n",
        x.1
    );
    if logscale {
        script.push_str("set logscale xy\n");
    }
    let plots: Vec<String> = ys
        .iter()
        .map(|(col, name)| {
            format!(
                "'{data}' using {}:{} with linespoints title '{name}'",
                x.0, col
            )
        })
        .collect();
    script.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    std::fs::write(companion_path(out, ".gp"), script)?;
    Ok(())
}

/// Status line on stderr, coloured on a terminal unless `NO_COLOR` is set.
pub fn status(passed: bool, text: &str) {
    let colour =
        io::stderr().is_terminal() && std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty());
    let tag = match (passed, colour) {
        (true, true) => "\x1b[32mPASS\x1b[0m",
        (false, true) => "\x1b[31mFAIL\x1b[0m",
        (true, false) => "PASS",
        (false, false) => "FAIL",
    };
    eprintln!("{tag} {text}");
}
