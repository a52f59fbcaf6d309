//! Run manifests: enough provenance to re-run a command and byte-compare
//! its outputs.
//!
//! A manifest records the toolkit version, the argv that produced the run,
//! the master seed, a SHA-256 digest per input file, and the names of the
//! files written. It deliberately carries no timestamps or hostnames, so a
//! faithful re-run produces an identical manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{classify_json, read_to_string, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as the command referenced it.
    pub path: String,
    /// Lowercase hex SHA-256 of the file's bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    /// Argv of the command that produced the run, program name included.
    pub command: Vec<String>,
    /// Master seed, absent for commands that consume no randomness.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub master_seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(command: Vec<String>, master_seed: Option<u64>) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            master_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Digest an input file and add it under the path the command used.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("manifests always serialize");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| classify_json("manifest", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_match_known_values() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("design.json");
        std::fs::write(&input, b"{}").unwrap();

        let build = || {
            let mut m = RunManifest::new(
                vec!["srt".into(), "simulate".into(), "--seed".into(), "7".into()],
                Some(7),
            );
            m.record_input(&input).unwrap();
            m.record_output("cohort.csv");
            m
        };
        let a = build();
        let b = build();
        assert_eq!(a.to_json(), b.to_json(), "manifests carry nothing run-specific");

        let path = dir.path().join("manifest.json");
        a.save(&path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.toolkit_version, env!("CARGO_PKG_VERSION"));
        assert_eq!(back.inputs[0].sha256, sha256_hex(b"{}"));
    }

    #[test]
    fn seedless_manifest_omits_the_key() {
        let m = RunManifest::new(vec!["srt".into(), "analyze".into()], None);
        assert!(!m.to_json().contains("master_seed"));
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back.master_seed, None);
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let mut m = RunManifest::new(vec!["srt".into()], None);
        let err = m.record_input(Path::new("/nonexistent/in.json")).unwrap_err();
        assert_eq!(err.code(), "E401");
    }
}
