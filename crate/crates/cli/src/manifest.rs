//! Run manifest: resolved config, seed and SHA-256 of every input and output.
//! No timestamps or host details, so reruns produce identical manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lenspol_core::experiments::config_hash;
use lenspol_core::solver::SolverConfig;

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Rerun with `lenspol <command> --config <this file>`.
    pub resolved_config: String,
    /// The solver parameters actually used, after preset and overrides.
    pub solver: SolverConfig,
    pub solver_hash: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub config: RunConfig,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects artifacts while a command runs, then writes the manifest.
pub struct Recorder {
    pub out_dir: PathBuf,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn new(out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::new("io", format!("{}: {e}", out_dir.display())))?;
        Ok(Recorder {
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.to_string(), path.to_path_buf()));
    }

    /// Path for a new output file, recorded by name relative to the output dir.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.output(name);
        std::fs::write(&path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
    }

    pub fn finish(self, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
        let resolved = crate::config::to_toml(cfg)?;
        let resolved_path = self.out_dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&resolved_path, &resolved)
            .map_err(|e| CliError::new("io", format!("{}: {e}", resolved_path.display())))?;

        let inputs = self
            .inputs
            .iter()
            .map(|(role, p)| {
                Ok(FileEntry {
                    role: role.clone(),
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut outputs = self
            .outputs
            .iter()
            .map(|name| {
                Ok(FileEntry {
                    role: "output".into(),
                    path: name.clone(),
                    sha256: sha256_file(&self.out_dir.join(name))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        outputs.push(FileEntry {
            role: "resolved-config".into(),
            path: RESOLVED_CONFIG_FILE.into(),
            sha256: hex(&Sha256::digest(resolved.as_bytes())),
        });

        let solver = cfg.solver.resolve();
        let manifest = Manifest {
            tool: "lenspol".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            resolved_config: RESOLVED_CONFIG_FILE.into(),
            solver_hash: config_hash(&solver),
            solver,
            inputs,
            outputs,
            config: cfg.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::new("config", e.to_string()))?;
        let path = self.out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
    }
}
