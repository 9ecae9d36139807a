use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: String,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Record of one command invocation, written before any work starts and
/// rewritten when the command finishes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; replaying them reproduces the run.
    pub argv: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub dataset: Option<Fingerprint>,
    pub seeds: Vec<u64>,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub status: RunStatus,
    pub failures: Vec<String>,
    #[serde(skip)]
    path: PathBuf,
}

impl RunManifest {
    /// Writes a `running` manifest to `path`.
    pub fn begin(
        path: &Path,
        command: &str,
        config: serde_json::Value,
        dataset: Option<Fingerprint>,
        seeds: Vec<u64>,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let m = Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            config,
            dataset,
            seeds,
            outputs,
            status: RunStatus::Running,
            failures: Vec::new(),
            path: path.to_path_buf(),
        };
        m.write()?;
        Ok(m)
    }

    #[cfg(test)]
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        m.path = path.to_path_buf();
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&self.path, json + "\n").with_context(|| format!("writing {}", self.path.display()))
    }

    fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// Marks the run finished. Any listed output that does not exist turns
    /// the status into `failed`, as does a non-empty `failures`.
    pub fn finish(&mut self, failures: Vec<String>) -> Result<RunStatus> {
        self.failures = failures;
        let dir = self.base_dir();
        for out in &self.outputs {
            if !dir.join(out).exists() {
                self.failures.push(format!("missing output {out}"));
            }
        }
        self.status = if self.failures.is_empty() { RunStatus::Ok } else { RunStatus::Failed };
        self.write()?;
        Ok(self.status)
    }

    /// Records an error that aborted the command.
    pub fn abort(&mut self, err: &anyhow::Error) -> Result<()> {
        self.failures.push(format!("{err:#}"));
        self.status = RunStatus::Failed;
        self.write()
    }
}
