//! Pipeline manifest: which artifacts live in an output directory, their
//! hashes and the configuration that produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cncbf_core::dynamics::Profile;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FILE_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// Hash of the compact JSON form of a configuration value.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// File name relative to the manifest directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub tool: String,
    pub tool_version: String,
    pub profile: Profile,
    /// Artifacts by role (`value_field`, `weights`, `report`, ...).
    pub artifacts: BTreeMap<String, ArtifactRef>,
    /// Configuration hash per command that wrote into the directory.
    pub config_sha256: BTreeMap<String, String>,
}

impl PipelineManifest {
    pub fn new(profile: Profile) -> Self {
        Self {
            tool: "cncbf".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            profile,
            artifacts: BTreeMap::new(),
            config_sha256: BTreeMap::new(),
        }
    }

    /// Loads `dir/manifest.json` if present.
    pub fn load(dir: &Path) -> CliResult<Option<Self>> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| CliError::format(&path, e.to_string()))
    }

    /// Loads the directory manifest, starting a fresh one when absent, and
    /// refuses to mix profiles in one directory.
    pub fn open(dir: &Path, profile: Profile) -> CliResult<Self> {
        match Self::load(dir)? {
            Some(m) if m.profile != profile => Err(CliError::Validation(format!(
                "{} already holds {} artifacts; refusing to add {} ones",
                dir.display(),
                m.profile.name(),
                profile.name()
            ))),
            Some(m) => Ok(m),
            None => Ok(Self::new(profile)),
        }
    }

    pub fn record(&mut self, role: &str, dir: &Path, file: &str) -> CliResult<()> {
        let sha256 = sha256_file(&dir.join(file))?;
        self.artifacts.insert(role.into(), ArtifactRef { path: file.into(), sha256 });
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Checks every referenced file against its recorded hash.
    pub fn verify(&self, dir: &Path) -> CliResult<()> {
        for (role, a) in &self.artifacts {
            let p = dir.join(&a.path);
            let actual = sha256_file(&p)?;
            if actual != a.sha256 {
                return Err(CliError::Validation(format!("{role} artifact {} does not match its manifest hash", p.display())));
            }
        }
        Ok(())
    }
}

/// If `file` sits next to a manifest that lists it, verifies its hash and
/// profile. Files without a manifest are accepted as is.
pub fn check_artifact(file: &Path, profile: Option<Profile>) -> CliResult<Option<PipelineManifest>> {
    let dir = file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let Some(m) = PipelineManifest::load(&dir)? else {
        return Ok(None);
    };
    let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if let Some(a) = m.artifacts.values().find(|a| a.path == name) {
        if sha256_file(file)? != a.sha256 {
            return Err(CliError::Validation(format!("{} does not match its manifest hash", file.display())));
        }
        if let Some(p) = profile {
            if p != m.profile {
                return Err(CliError::Validation(format!(
                    "{} belongs to a {} pipeline, not {}",
                    file.display(),
                    m.profile.name(),
                    p.name()
                )));
            }
        }
    }
    Ok(Some(m))
}
