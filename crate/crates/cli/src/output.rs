use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use ncoadj::{Error, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
    pub tool_version: String,
    pub duration_secs: f64,
    /// Additional command-specific metadata.
    pub notes: serde_json::Map<String, serde_json::Value>,
}

pub struct Run {
    pub manifest: RunManifest,
    started: Instant,
}

impl Run {
    pub fn new(subcommand: &str, parameters: &impl Serialize) -> Self {
        Self {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
                seeds: Vec::new(),
                warnings: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                duration_secs: 0.0,
                notes: serde_json::Map::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.manifest.warnings.push(msg.into());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.manifest.notes.insert(key.to_string(), v);
        }
    }

    /// Writes the manifest into `dir`, or to stderr when no directory is given.
    pub fn finish(mut self, dir: Option<&Path>) -> Result<()> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        match dir {
            Some(d) => fs::write(d.join("manifest.json"), text + "\n")?,
            None => {
                for w in &self.manifest.warnings {
                    eprintln!("warning: {w}");
                }
                eprintln!("{text}");
            }
        }
        Ok(())
    }
}

/// Serializes `rows` as CSV or JSON, to `dir/<stem>.{csv,json}` or stdout.
pub fn emit_table<T: Serialize>(rows: &[T], json: bool, dir: Option<&Path>, stem: &str) -> Result<()> {
    let bytes = render(rows, json)?;
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            let ext = if json { "json" } else { "csv" };
            fs::write(d.join(format!("{stem}.{ext}")), bytes)?;
        }
        None => io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

pub fn render<T: Serialize>(rows: &[T], json: bool) -> Result<Vec<u8>> {
    if json {
        let mut v = serde_json::to_vec_pretty(rows)?;
        v.push(b'\n');
        return Ok(v);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
