use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one command invocation: what went in, what came out, how long
/// it took. Artifacts themselves carry no timestamps; only this file does.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, keyed by path.
    pub outputs: BTreeMap<String, String>,
    pub failures: BTreeMap<String, String>,
    pub timing_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            failures: BTreeMap::new(),
            timing_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Digest every regular file directly inside `dir`.
    pub fn inputs_in(&mut self, dir: &Path) -> std::io::Result<()> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            self.input(&f)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn fail(&mut self, what: impl Into<String>, why: impl Into<String>) {
        self.failures.insert(what.into(), why.into());
    }

    /// Stamp the elapsed time and write `manifest-<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> std::io::Result<PathBuf> {
        if let Some(t) = self.started {
            self.timing_seconds = t.elapsed().as_secs_f64();
        }
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest-{}.json", self.command));
        fs::write(&path, serde_json::to_vec_pretty(&self)?)?;
        Ok(path)
    }
}
