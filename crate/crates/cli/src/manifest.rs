use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use belnet_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Links the files of one experiment and fingerprints their contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub dataset_path: String,
    pub train_config_path: String,
    pub checkpoint_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
    /// Path to `sha256("blob <len>\0" ++ content)`, like a git object id.
    pub hashes: BTreeMap<String, String>,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}

/// Hashes of `meta.json` and `samples.jsonl` in a split directory.
pub fn dataset_hashes(dir: &Path, into: &mut BTreeMap<String, String>) -> Result<()> {
    for name in ["meta.json", "samples.jsonl"] {
        let p = dir.join(name);
        into.insert(p.display().to_string(), file_hash(&p)?);
    }
    Ok(())
}

impl ExperimentManifest {
    /// Builds the manifest after training. The id is derived from the hashes
    /// of the inputs (dataset and effective configuration).
    pub fn for_training(dataset: &Path, train_config: &Path, checkpoint: &Path) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        dataset_hashes(dataset, &mut inputs)?;
        inputs.insert(train_config.display().to_string(), file_hash(train_config)?);
        let joined: String = inputs.values().map(String::as_str).collect();
        let experiment_id = content_hash(joined.as_bytes())[..16].to_string();
        let mut hashes = inputs;
        hashes.insert(checkpoint.display().to_string(), file_hash(checkpoint)?);
        Ok(ExperimentManifest {
            experiment_id,
            dataset_path: dataset.display().to_string(),
            train_config_path: train_config.display().to_string(),
            checkpoint_path: checkpoint.display().to_string(),
            report_path: None,
            hashes,
        })
    }

    /// Every path the manifest refers to must still exist.
    pub fn check_paths(&self) -> Result<()> {
        let listed = [&self.dataset_path, &self.train_config_path, &self.checkpoint_path];
        for p in listed.into_iter().chain(self.report_path.as_ref()) {
            if !Path::new(p).exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest.json"),
                ));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::write_json(path, self)
    }
}
