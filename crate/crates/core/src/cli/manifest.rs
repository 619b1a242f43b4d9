//! Run manifests and the output directory bookkeeping.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILURE_MARKER: &str = "FAILED";
pub const MANIFEST_SCHEMA: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A JSON input carried inside the manifest so a re-run needs nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub sha256: String,
    pub content: serde_json::Value,
}

impl InputRecord {
    pub fn new(content: serde_json::Value) -> Self {
        let text = serde_json::to_string(&content).expect("JSON value serializes");
        InputRecord {
            sha256: sha256_hex(text.as_bytes()),
            content,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(Self::new(v))
    }

    pub fn verify(&self) -> Result<()> {
        if Self::new(self.content.clone()).sha256 != self.sha256 {
            return Err(Error::InvalidInput(
                "manifest input does not match its recorded hash".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, InputRecord>,
    pub status: String,
    pub exit_code: i32,
    pub outputs: Vec<OutputRecord>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "navier-cpi".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        (
            "target".to_string(),
            format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        ),
    ])
}

/// Hash of everything that determines the outputs. The output directory is
/// excluded.
pub fn config_hash(
    command: &str,
    cfg: &ExperimentConfig,
    inputs: &BTreeMap<String, InputRecord>,
) -> String {
    let cfg = ExperimentConfig {
        output_dir: None,
        ..cfg.clone()
    };
    let doc = serde_json::json!({
        "command": command,
        "config": cfg,
        "inputs": inputs.iter().map(|(k, v)| (k.clone(), v.sha256.clone())).collect::<BTreeMap<_, _>>(),
    });
    sha256_hex(
        serde_json::to_string(&doc)
            .expect("serializable")
            .as_bytes(),
    )
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Output directory with a record of every file written so far.
pub struct RunDir {
    pub dir: PathBuf,
    pub outputs: Vec<OutputRecord>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let marker = dir.join(FAILURE_MARKER);
        if marker.exists() {
            std::fs::remove_file(&marker)?;
        }
        Ok(RunDir {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        let rec = OutputRecord {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        match self.outputs.iter_mut().find(|o| o.name == name) {
            Some(o) => *o = rec,
            None => self.outputs.push(rec),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn mark_failed(&self, code: i32, message: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(
            &serde_json::json!({ "exit_code": code, "error": message }),
        )
        .expect("serializable");
        std::fs::write(self.dir.join(FAILURE_MARKER), text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: Some("elsewhere".into()),
            ..a.clone()
        };
        let inputs = BTreeMap::new();
        assert_eq!(
            config_hash("flow", &a, &inputs),
            config_hash("flow", &b, &inputs)
        );
        assert_ne!(
            config_hash("flow", &a, &inputs),
            config_hash("green", &a, &inputs)
        );
        let c = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_ne!(
            config_hash("flow", &a, &inputs),
            config_hash("flow", &c, &inputs)
        );
    }

    #[test]
    fn input_hash_tracks_content() {
        let r = InputRecord::new(serde_json::json!({"bubbles": []}));
        r.verify().unwrap();
        let bad = InputRecord {
            content: serde_json::json!({"bubbles": [1]}),
            ..r
        };
        assert!(bad.verify().is_err());
    }

    #[test]
    fn run_dir_records_and_marks() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = RunDir::create(tmp.path()).unwrap();
        d.write("a.txt", b"x").unwrap();
        d.write("a.txt", b"yy").unwrap();
        assert_eq!(d.outputs.len(), 1);
        assert_eq!(d.outputs[0].bytes, 2);
        d.mark_failed(3, "boom").unwrap();
        assert!(tmp.path().join(FAILURE_MARKER).exists());
        RunDir::create(tmp.path()).unwrap();
        assert!(!tmp.path().join(FAILURE_MARKER).exists());
    }
}
