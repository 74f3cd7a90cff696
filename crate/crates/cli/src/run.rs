//! Run directories: exclusive lock, config echo and a manifest written on every exit path.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::Failure;

pub const LOCK_FILE: &str = "run.lock";
pub const CONFIG_ECHO: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Input path to its SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
    _lock: LockGuard,
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunDir {
    /// Creates (or reopens) the directory and takes its lock. Fails if another run holds it.
    pub fn open(config: &RunConfig) -> Result<Self, Failure> {
        let root = config.out.clone();
        std::fs::create_dir_all(&root)
            .map_err(|e| Failure::Infrastructure(format!("{}: {e}", root.display())))?;
        let lock_path = root.join(LOCK_FILE);
        let mut lock = OpenOptions::new().write(true).create_new(true).open(&lock_path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Failure::Infrastructure(format!("run directory {} is locked by another run", root.display()))
            } else {
                Failure::Infrastructure(format!("{}: {e}", lock_path.display()))
            }
        })?;
        let _ = writeln!(lock, "{}", std::process::id());
        let guard = LockGuard { path: lock_path };
        std::fs::write(root.join(CONFIG_ECHO), config.to_toml())
            .map_err(|e| Failure::Infrastructure(format!("config echo: {e}")))?;
        Ok(RunDir {
            root,
            manifest: RunManifest {
                command: config.command.clone(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                inputs: BTreeMap::new(),
                started_at: now(),
                finished_at: None,
                status: "running".into(),
                exit_code: 0,
                error: None,
                artifacts: Vec::new(),
            },
            _lock: guard,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Hashes an input file (every file, for a directory) before it is read.
    pub fn record_input(&mut self, path: &Path) -> Result<(), Failure> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.record_input(&p)?;
            }
            return Ok(());
        }
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn add_artifact(&mut self, name: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == name) {
            self.manifest.artifacts.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.path(name);
        let mut f = File::create(&path).map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))?;
        self.add_artifact(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Infrastructure(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    /// Writes the manifest with the final status. Called on success and on failure.
    pub fn finish(mut self, outcome: &Result<(), Failure>) -> Result<(), Failure> {
        self.manifest.finished_at = Some(now());
        match outcome {
            Ok(()) => self.manifest.status = "success".into(),
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.exit_code = e.exit_code();
                self.manifest.error = Some(e.to_string());
            }
        }
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Failure::Infrastructure(e.to_string()))?;
        std::fs::write(self.root.join(MANIFEST), text + "\n")
            .map_err(|e| Failure::Infrastructure(format!("manifest: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(out: &Path) -> RunConfig {
        RunConfig {
            command: "stats".into(),
            seed: 1,
            out: out.to_path_buf(),
            backend: Default::default(),
            params: serde_json::json!({}),
        }
    }

    #[test]
    fn second_open_fails_while_locked() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir.path().join("run"));
        let first = RunDir::open(&cfg).unwrap();
        let err = RunDir::open(&cfg).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        first.finish(&Ok(())).unwrap();
        assert!(RunDir::open(&cfg).is_ok());
    }

    #[test]
    fn failed_runs_still_write_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir.path().join("run"));
        let run = RunDir::open(&cfg).unwrap();
        run.finish(&Err(Failure::Usage("bad".into()))).unwrap();
        let m: RunManifest = serde_json::from_slice(&std::fs::read(dir.path().join("run").join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m.status, "failed");
        assert_eq!(m.exit_code, 1);
        assert!(!dir.path().join("run").join(LOCK_FILE).exists());
    }
}
