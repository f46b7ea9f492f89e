//! Output directory bookkeeping and the JSON run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub data: u64,
    pub metastability: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
    pub summary: serde_json::Value,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn hash_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// One command's output directory. Files written through it end up in the
/// manifest.
pub struct RunDir {
    dir: PathBuf,
    command: String,
    config: ExperimentConfig,
    hash: String,
    files: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            command: command.into(),
            config: config.clone(),
            hash: config.hash(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    /// First line of every CSV.
    pub fn comment(&self) -> String {
        format!("cdrlab {VERSION} config {}", self.hash)
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<fs::File>, &str) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let comment = self.comment();
        f(&mut w, &comment)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
        self.files.push(name.into());
        Ok(())
    }

    /// Writes `config.toml` and `manifest.json`.
    pub fn finish(mut self, summary: serde_json::Value) -> Result<RunManifest, CliError> {
        let cfg_text = self.config.to_toml();
        self.write_with("config.toml", |w, _| w.write_all(cfg_text.as_bytes()))?;
        let outputs = self
            .files
            .iter()
            .map(|name| {
                let (sha256, bytes) = hash_file(&self.dir.join(name))?;
                Ok(OutputFile {
                    path: name.clone(),
                    sha256,
                    bytes,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = RunManifest {
            tool: "cdrlab",
            version: VERSION,
            command: self.command.clone(),
            config_hash: self.hash.clone(),
            seeds: Seeds {
                data: self.config.data.seed,
                metastability: self.config.loop_config()?.metastability_seed,
            },
            outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            summary,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(manifest)
    }
}
