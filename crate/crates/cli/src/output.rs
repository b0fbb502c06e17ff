//! Run manifests and atomic artifact directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use slowfast::model::ConditionReport;

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub passed: bool,
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: BTreeMap<String, String>,
    pub conditions: Vec<ConditionSummary>,
    pub warnings: Vec<String>,
}

/// Artifacts of one run, held in memory until committed.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub conditions: Vec<ConditionSummary>,
}

impl Artifacts {
    pub fn csv(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    pub fn attach_conditions(&mut self, reports: &[ConditionReport]) {
        self.conditions = reports
            .iter()
            .map(|r| ConditionSummary {
                condition: r.condition_id.as_str().into(),
                passed: r.passed,
                worst_ratio: r.worst_ratio,
            })
            .collect();
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file plus `manifest.json` into a sibling temp directory
    /// and renames it onto `dir`.
    pub fn commit(self, dir: &Path, subcommand: &str, config: &ExperimentConfig) -> Result<RunManifest, CliError> {
        let config_hash = sha256_hex(config.to_toml().as_bytes());
        let header = format!("# manifest sha256:{config_hash}\n");
        let staging = staging_dir(dir);
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        let mut outputs = BTreeMap::new();
        for (name, body) in &self.files {
            let text = if name.ends_with(".csv") { format!("{header}{body}") } else { body.clone() };
            outputs.insert(name.clone(), sha256_hex(text.as_bytes()));
            fs::write(staging.join(name), text)?;
        }
        fs::write(staging.join("config.toml"), config.to_toml())?;
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            config_hash,
            seed: config.integrator.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs,
            conditions: self.conditions,
            warnings: self.warnings,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(staging.join("manifest.json"), json + "\n")?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        if let Some(parent) = dir.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::rename(&staging, dir)?;
        Ok(manifest)
    }
}

fn staging_dir(dir: &Path) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    dir.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

/// Writes a diagnostics file for a numerical failure.
pub fn write_diagnostics(dir: &Path, subcommand: &str, error: &CliError) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("diagnostics.txt");
    fs::write(&path, format!("subcommand: {subcommand}\nerror: {error}\ndetail: {error:?}\n"))?;
    Ok(path)
}
