//! Output layout, per-stage config hashes and the provenance sidecar.
//!
//! Each stage writes `stages/<stage>.json` recording the hash of the config
//! sections it consumed (chained with its upstream stage hashes) and the files
//! it produced. Downstream stages recompute the expected hash from the current
//! config and refuse to read artifacts whose recorded hash differs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::io::{read_json, write_json};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Featurize,
    Train,
    Calibrate,
    Evaluate,
    Explain,
    LlmExportFinetune,
    LlmEvaluate,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Calibrate => "calibrate",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::LlmExportFinetune => "llm-export-finetune",
            Stage::LlmEvaluate => "llm-evaluate",
            Stage::Report => "report",
        }
    }
}

/// SHA-256 over the canonical JSON of `value`, hex encoded.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub config_hash: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.root.join("stages").join(format!("{}.json", stage.as_str()))
    }

    pub fn ensure_dirs(&self, rels: &[&str]) -> Result<()> {
        for rel in rels {
            let p = self.root.join(rel);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn write_manifest(&self, stage: Stage, config_hash: &str, outputs: Vec<String>) -> Result<()> {
        self.ensure_dirs(&["stages"])?;
        write_json(
            &self.manifest_path(stage),
            &StageManifest {
                stage,
                config_hash: config_hash.to_string(),
                outputs,
            },
        )
    }

    /// Checks that `stage` ran with the configuration hashing to `expected`
    /// and that its outputs are still present.
    pub fn require(&self, stage: Stage, expected: &str) -> Result<StageManifest> {
        let path = self.manifest_path(stage);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: stage.as_str(),
                path,
            });
        }
        let manifest: StageManifest = read_json(&path)?;
        if manifest.config_hash != expected {
            return Err(Error::StaleArtifact {
                stage: stage.as_str(),
                path,
            });
        }
        for rel in &manifest.outputs {
            let p = self.root.join(rel);
            if !p.exists() {
                return Err(Error::MissingArtifact {
                    stage: stage.as_str(),
                    path: p,
                });
            }
        }
        Ok(manifest)
    }

    /// True when `stage` has a fresh manifest for `expected`.
    pub fn is_fresh(&self, stage: Stage, expected: &str) -> bool {
        self.require(stage, expected).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub elapsed_ms: u128,
}

/// Timestamps and host details, kept apart from the primary outputs so those
/// stay byte-comparable across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub host: String,
    pub os: String,
    pub stages: BTreeMap<String, StageRun>,
}

pub fn record_provenance(layout: &Layout, stage: Stage, run: StageRun) -> Result<()> {
    let path = layout.path("provenance.json");
    let mut prov: Provenance = if path.exists() {
        read_json(&path).unwrap_or_default()
    } else {
        Provenance::default()
    };
    prov.tool_version = env!("CARGO_PKG_VERSION").to_string();
    prov.host = std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into());
    prov.os = std::env::consts::OS.to_string();
    prov.stages.insert(stage.as_str().to_string(), run);
    write_json(&path, &prov)
}
