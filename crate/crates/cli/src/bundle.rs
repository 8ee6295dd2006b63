//! Output directory bookkeeping: every emitted file is digested and listed
//! in `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "rib-manifest/1";

/// Versioned layouts of emitted files.
pub const SCHEMAS: &[(&str, &str)] = &[
    ("metrics", "metrics/1: epoch,lr,train_err,test_err,emp_risk,critic_loss,mean_bregman"),
    ("run", "run/1: RunRecord JSON"),
    ("roc", "roc/1: fpr,tpr"),
    ("region", "region/1: x,y"),
    ("dynamics", "dynamics/1: epoch,train_err,test_err,gap,recognizability"),
    ("sweep", "sweep/1: run,seed,objective,beta,train_err,test_err,gap"),
    ("gap", "gap/1: run,n,train_err,test_err,gap,recognizability,fcmi_bound"),
    ("fcmi", "fcmi/1: supersample,mi"),
    ("spec", "spec/1: ExperimentSpec JSON"),
    ("sweep_summary", "sweep-summary/1: JSON"),
    ("fcmi_json", "fcmi-estimate/1: JSON"),
    ("gap_json", "gap-study/1: JSON"),
    ("theory", "theory/1: JSON"),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub schema: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Hard checks decide the exit code; soft ones are reported only.
    pub hard: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    ChecksFailed,
    /// A run failed; the files listed are what was written before it.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub spec_digest: String,
    pub seed: u64,
    pub started_unix_secs: u64,
    pub finished_unix_secs: u64,
    pub status: Status,
    pub error: Option<String>,
    pub schemas: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io { path, source: e })?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Files that are missing or whose digest no longer matches.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| match fs::read(dir.join(&f.path)) {
                Ok(bytes) => sha256_hex(&bytes) != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn all_hard_checks_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.pass)
    }
}

/// Collects files and checks of one study.
#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
    checks: Vec<Check>,
    started: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Bundle {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            checks: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    /// Writes `name` inside the bundle directory and records its digest.
    pub fn write(&mut self, name: &str, schema: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let bytes = contents.as_ref();
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.into(),
            schema: schema.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, schema: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, schema, text)
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, hard: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            hard,
            detail: detail.into(),
        });
    }

    /// Writes `manifest.json`; `error` marks the bundle partial.
    pub fn finish(self, command: &str, spec_digest: &str, seed: u64, error: Option<String>) -> CliResult<Manifest> {
        let status = match (&error, self.checks.iter().filter(|c| c.hard).all(|c| c.pass)) {
            (Some(_), _) => Status::Partial,
            (None, false) => Status::ChecksFailed,
            (None, true) => Status::Complete,
        };
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            spec_digest: spec_digest.into(),
            seed,
            started_unix_secs: self.started,
            finished_unix_secs: unix_now(),
            status,
            error,
            schemas: SCHEMAS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            checks: self.checks,
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })?;
        Ok(manifest)
    }
}
