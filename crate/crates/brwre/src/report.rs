//! Run artifacts: a JSON report with a deterministic payload and a separate
//! provenance block, plus CSV export for estimate grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "brwre-report/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema: String,
    /// everything here is a pure function of (command, config, seed)
    pub payload: Payload,
    /// run metadata; never part of determinism comparisons
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Payload {
    pub command: String,
    pub seed: u64,
    pub results: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub created_unix_ms: u64,
    pub wall_time_ms: u64,
    pub workers: usize,
    pub tool_version: String,
}

impl SimulationReport {
    pub fn new(
        command: &str,
        seed: u64,
        results: serde_json::Value,
        workers: usize,
        wall_time_ms: u64,
    ) -> Self {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        SimulationReport {
            schema: SCHEMA.into(),
            payload: Payload { command: command.into(), seed, results },
            provenance: Provenance {
                created_unix_ms: created,
                wall_time_ms,
                workers,
                tool_version: env!("CARGO_PKG_VERSION").into(),
            },
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Report(format!("serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<SimulationReport> {
        let text = std::fs::read_to_string(path)?;
        let rep: SimulationReport =
            serde_json::from_str(&text).map_err(|e| Error::Report(format!("parse: {e}")))?;
        if rep.schema != SCHEMA {
            return Err(Error::Report(format!(
                "schema '{}' not supported (want {SCHEMA})",
                rep.schema
            )));
        }
        Ok(rep)
    }

    /// Canonical serialization of the payload alone, for byte-level
    /// determinism comparisons across worker counts.
    pub fn payload_fingerprint(&self) -> String {
        serde_json::to_string(&self.payload).expect("payload serializes")
    }
}

/// One row of an estimate grid: ordered key columns plus the standard
/// estimate columns.
#[derive(Clone, Debug)]
pub struct EstimateRow {
    pub keys: Vec<(String, String)>,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub seed: u64,
}

pub fn csv_string(rows: &[EstimateRow]) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::Report("empty estimate grid".into()))?;
    let header: Vec<&str> = first.keys.iter().map(|(k, _)| k.as_str()).collect();
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str(",estimate,stderr,replicates,seed\n");
    for row in rows {
        let names: Vec<&str> = row.keys.iter().map(|(k, _)| k.as_str()).collect();
        if names != header {
            return Err(Error::Report("inconsistent grid key columns".into()));
        }
        for (_, v) in &row.keys {
            out.push_str(v);
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.estimate, row.stderr, row.replicates, row.seed
        ));
    }
    Ok(out)
}

pub fn write_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    std::fs::write(path, csv_string(rows)?)?;
    Ok(())
}

/// lambda = 2 gamma + 1/2, with the stderr propagated linearly.
pub fn lambda_from_gamma(gamma: f64, stderr: f64) -> (f64, f64) {
    (2.0 * gamma + 0.5, 2.0 * stderr)
}

/// Aggregates per-beta gamma rows into a table that also carries the derived
/// lambda column.
pub fn gamma_table(rows: &[(f64, f64, f64)]) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = rows
        .iter()
        .map(|&(beta, g, se)| {
            let (l, lse) = lambda_from_gamma(g, se);
            serde_json::json!({
                "beta": beta,
                "gamma": g,
                "gamma_stderr": se,
                "lambda": l,
                "lambda_stderr": lse,
            })
        })
        .collect();
    serde_json::Value::Array(entries)
}
