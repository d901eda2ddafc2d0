//! Run manifests and the artifact writer that feeds them.
//!
//! Every byte that reaches the output directory flows through
//! [`ArtifactWriter`], which hashes it on the way out. That is what makes
//! the no-orphan rule (every file appears in the manifest) and the cleanup
//! rule (failed runs leave nothing behind) enforceable in one place.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What a finished run leaves next to its artifacts. The config echo is the
/// effective config (after any seed override), so a manifest plus the core
/// library is enough to reproduce the run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn from_json_str(s: &str) -> Result<RunManifest, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes artifacts into one run directory, recording name, size, and hash.
/// On failure the caller invokes [`ArtifactWriter::cleanup`] to remove every
/// file this writer created (and the directory, if the writer created it).
pub struct ArtifactWriter {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<ArtifactWriter, CliError> {
        let created_dir = !dir.exists();
        if created_dir {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Write { path: dir.display().to_string(), source: e })?;
        }
        Ok(ArtifactWriter { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, content: &[u8]) -> Result<(), CliError> {
        assert!(
            !name.contains('/') && !name.contains('\\'),
            "artifact names are flat: {name}"
        );
        let path = self.dir.join(name);
        fs::write(&path, content)
            .map_err(|e| CliError::Write { path: path.display().to_string(), source: e })?;
        self.written.push(ArtifactEntry {
            name: name.to_string(),
            sha256: sha256_hex(content),
            bytes: content.len() as u64,
        });
        Ok(())
    }

    pub fn write_str(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        self.write(name, content.as_bytes())
    }

    /// Writes the manifest and consumes the writer. The manifest lists the
    /// artifacts sorted by name, independent of write order.
    pub fn finish(
        mut self,
        kind: &str,
        seed: u64,
        config_echo: serde_json::Value,
    ) -> Result<RunManifest, CliError> {
        self.written.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = RunManifest {
            kind: kind.to_string(),
            seed,
            config: config_echo,
            artifacts: self.written.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        let path = self.dir.join(MANIFEST_NAME);
        fs::write(&path, json.as_bytes())
            .map_err(|e| CliError::Write { path: path.display().to_string(), source: e })?;
        Ok(manifest)
    }

    /// Removes everything this writer wrote. Files that existed before the
    /// run are left alone; the directory goes only if the writer made it and
    /// it is empty afterwards.
    pub fn cleanup(self) {
        for entry in &self.written {
            let _ = fs::remove_file(self.dir.join(&entry.name));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
