use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Effective configuration after file and flag values were applied.
    pub config: BTreeMap<String, toml::Value>,
    pub config_file: Option<String>,
    pub file_values: BTreeMap<String, toml::Value>,
    pub flag_values: BTreeMap<String, toml::Value>,
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn describe(run_dir: &Path, rel: &str) -> Result<Artifact> {
    let bytes = fs::read(run_dir.join(rel)).with_context(|| format!("reading artifact {rel}"))?;
    Ok(Artifact {
        path: rel.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

/// Writes `contents` to a temporary sibling, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

impl RunManifest {
    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(&run_dir.join(MANIFEST_FILE), &json)
    }

    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("missing manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("corrupt manifest {}", path.display()))?;
        if m.manifest_version != MANIFEST_VERSION {
            bail!(
                "manifest {} has version {}, expected {MANIFEST_VERSION}",
                path.display(),
                m.manifest_version
            );
        }
        Ok(m)
    }

    /// Checks every listed artifact against its recorded checksum.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let now = describe(run_dir, &a.path)?;
            if now.sha256 != a.sha256 {
                bail!("artifact {} in {} does not match its checksum", a.path, run_dir.display());
            }
        }
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == name)
    }
}
