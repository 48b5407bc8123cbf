//! Output files. Every file starts with a provenance header: `#` comment
//! lines for CSV and text, a leading JSON object for JSON lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, SeedSource};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub seed_source: SeedSource,
}

impl Provenance {
    pub fn new(exp: &Experiment, command: &str) -> Self {
        Self {
            tool: "fluxlab",
            version: VERSION,
            command: command.to_string(),
            config_sha256: exp.config_hash(),
            seed: exp.seed,
            seed_source: exp.seed_source,
        }
    }

    pub fn comment_lines(&self) -> String {
        format!(
            "# {} {}\n# command: {}\n# config_sha256: {}\n# seed: {} ({})\n",
            self.tool,
            self.version,
            self.command,
            self.config_sha256,
            self.seed,
            serde_json::to_value(self.seed_source).expect("plain enum").as_str().unwrap_or_default(),
        )
    }
}

pub fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

/// Writes a CSV table below the provenance header.
pub fn write_csv(
    dir: &Path,
    name: &str,
    prov: &Provenance,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    let io = |e: std::io::Error| CliError::io(dir.join(name), e);
    w.write_all(prov.comment_lines().as_bytes()).map_err(io)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        let err = |e: csv::Error| CliError::io(dir.join(name), std::io::Error::other(e));
        csv.write_record(columns).map_err(err)?;
        for r in rows {
            csv.write_record(r).map_err(err)?;
        }
        csv.flush().map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Writes a text file below the provenance header.
pub fn write_text(dir: &Path, name: &str, prov: &Provenance, body: &str) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    let io = |e: std::io::Error| CliError::io(dir.join(name), e);
    w.write_all(prov.comment_lines().as_bytes()).map_err(io)?;
    w.write_all(body.as_bytes()).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}

/// Shortest round-trip decimal form of a number.
pub fn num(x: f64) -> String {
    format!("{x}")
}
