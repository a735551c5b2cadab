//! JSON sidecars written next to every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{file_sha256, RunConfig};
use crate::MissingArtifact;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("bermudan".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert(
            "dataset_format".into(),
            bermudan_core::dataset::DATASET_FORMAT_VERSION.to_string(),
        );
        versions.insert("model_format".into(), bermudan_ml::model::MODEL_FORMAT_VERSION.to_string());
        Sidecar {
            command: command.into(),
            config_hash: config.hash(),
            seeds: BTreeMap::new(),
            versions,
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn input(mut self, path: &Path) -> anyhow::Result<Self> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(self)
    }

    pub fn write_for(&self, output: &Path) -> anyhow::Result<()> {
        let path = sidecar_for(output);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_for(output: &Path) -> anyhow::Result<Self> {
        let path = sidecar_for(output);
        let text = std::fs::read_to_string(&path).map_err(|_| MissingArtifact {
            path: path.clone(),
            hint: "provenance sidecar not found".into(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `x.csv` -> `x.csv.provenance.json`.
pub fn sidecar_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    output.with_file_name(name)
}

/// Fails with [`MissingArtifact`] unless `path` exists.
pub fn require(path: &Path, hint: &str) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.into(),
        }
        .into())
    }
}

/// Fails with [`MissingArtifact`] unless `output` was built from the
/// current contents of `input`.
pub fn require_fresh(output: &Path, input: &Path, hint: &str) -> anyhow::Result<()> {
    require(output, hint)?;
    let sidecar = Sidecar::read_for(output)?;
    let key = input.display().to_string();
    let now = file_sha256(input)?;
    if sidecar.inputs.get(&key) != Some(&now) {
        return Err(MissingArtifact {
            path: output.to_path_buf(),
            hint: format!("built from a different {key}; {hint}"),
        }
        .into());
    }
    Ok(())
}
