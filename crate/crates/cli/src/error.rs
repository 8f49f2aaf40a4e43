use laser_core::LaserError;
use serde_json::json;

use crate::output::SCHEMA_VERSION;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(LaserError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(e) => match e {
                LaserError::InvalidParams(_)
                | LaserError::InconsistentInputs(_)
                | LaserError::OutOfDomain(_)
                | LaserError::InsufficientSamples { .. }
                | LaserError::DimensionTooLarge { .. } => 2,
                _ => 3,
            },
            CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Usage(_) => "Usage".into(),
            CliError::Io(_) => "Io".into(),
            CliError::Solver(e) => {
                let dbg = format!("{e:?}");
                dbg.split(|c: char| !c.is_alphanumeric())
                    .next()
                    .unwrap_or("Solver")
                    .to_string()
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let message = match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Solver(e) => e.to_string(),
        };
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "kind": self.kind(), "message": message },
            "exit_code": self.exit_code(),
        })
    }
}

impl From<LaserError> for CliError {
    fn from(e: LaserError) -> Self {
        CliError::Solver(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
