use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use semunc::formats::{self, InputDigest, RunManifest};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Collects what is needed to write `<output>.manifest.json` sidecars.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<InputDigest>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder { command: command.to_string(), config, inputs: Vec::new() }
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    pub fn build(&self, outputs: &[PathBuf], partial: bool) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            partial,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Writes one manifest beside each output file.
    pub fn write(&self, outputs: &[PathBuf], partial: bool) -> Result<(), CliError> {
        let manifest = self.build(outputs, partial);
        for out in outputs {
            formats::write_json(formats::manifest_path(out), &manifest)?;
        }
        Ok(())
    }
}
