//! Run manifest: config hash, every artifact in the output directory with
//! its checksum, software version and wall time per phase. Commands merge
//! into an existing manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    /// Hash of the configuration per command that used one.
    pub config_hashes: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub artifacts: BTreeMap<String, Artifact>,
    pub wall_times_sec: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for e in entries {
        let e = e.map_err(|e| CliError::io(dir, e))?;
        let p = e.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Option<Self>> {
        let p = dir.join(MANIFEST_FILE);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| CliError::io(&p, e))
    }

    /// Records `phase` and rescans `dir` so that every file in it (other
    /// than the manifest itself) is listed with its current checksum.
    pub fn update(dir: &Path, phase: &str, config_hash: Option<String>, wall_time: f64) -> CliResult<RunManifest> {
        let mut m = Self::load(dir)?.unwrap_or_default();
        m.software_version = env!("CARGO_PKG_VERSION").to_string();
        if let Some(h) = config_hash {
            m.config_hashes.insert(phase.to_string(), h);
        }
        m.wall_times_sec.insert(phase.to_string(), wall_time);
        let mut files = Vec::new();
        files_under(dir, &mut files)?;
        m.artifacts.clear();
        for f in files {
            let rel = f.strip_prefix(dir).expect("scanned under dir");
            if rel == Path::new(MANIFEST_FILE) {
                continue;
            }
            let (sha256, bytes) = sha256_file(&f)?;
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            m.artifacts.insert(key, Artifact { sha256, bytes });
        }
        crate::write_json(&dir.join(MANIFEST_FILE), &m)?;
        Ok(m)
    }
}
