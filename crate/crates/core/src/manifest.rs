//! Run manifests: one JSON file per CLI invocation recording what went in,
//! what came out and how to run it again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus;
use crate::error::{Error, Result};
use crate::pipeline::hex;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// A file and its SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Artifact {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
        })
    }

    /// The file itself, or every regular file directly inside a directory
    /// (sorted by name).
    pub fn collect(path: impl AsRef<Path>) -> Result<Vec<Self>> {
        let path = path.as_ref();
        if !path.is_dir() {
            return Ok(vec![Artifact::of(path)?]);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        files.retain(|f| f.is_file());
        files.sort();
        files.iter().map(Artifact::of).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub config: Option<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub workers: Option<usize>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config: None,
            seeds: BTreeMap::new(),
            workers: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.extend(Artifact::collect(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn path_in(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}{MANIFEST_SUFFIX}"))
    }

    /// Writes `<out_dir>/<command>.manifest.json` and returns its path.
    pub fn save(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(out_dir, &self.command);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invariant(format!("manifest serialization: {e}")))?;
        corpus::write_file(&path, &(text + "\n"))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = corpus::read_file(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), "manifest", e.to_string()))
    }

    /// The recorded arguments with `--out` pointed at `out` and, when given,
    /// `--workers` replaced (or appended if the run recorded a worker count).
    pub fn replay_argv(&self, out: &Path, workers: Option<usize>) -> Vec<String> {
        let mut argv = Vec::with_capacity(self.argv.len() + 2);
        let mut saw_workers = false;
        let mut it = self.argv.iter();
        while let Some(a) = it.next() {
            match a.as_str() {
                "--out" => {
                    it.next();
                    argv.push(a.clone());
                    argv.push(out.display().to_string());
                }
                "--workers" if workers.is_some() => {
                    it.next();
                    saw_workers = true;
                    argv.push(a.clone());
                    argv.push(workers.unwrap_or_default().to_string());
                }
                _ if a.starts_with("--out=") => argv.push(format!("--out={}", out.display())),
                _ if a.starts_with("--workers=") && workers.is_some() => {
                    saw_workers = true;
                    argv.push(format!("--workers={}", workers.unwrap_or_default()));
                }
                _ => argv.push(a.clone()),
            }
        }
        if let (Some(w), false, Some(_)) = (workers, saw_workers, self.workers) {
            argv.push("--workers".into());
            argv.push(w.to_string());
        }
        argv
    }

    /// Output digests keyed by file name.
    pub fn output_digests(&self) -> BTreeMap<String, String> {
        self.outputs
            .iter()
            .map(|a| {
                let name = a.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                (name, a.sha256.clone())
            })
            .collect()
    }
}
