//! Self-describing JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::backbone::{from_spec, BackboneSpec};
use super::hyper::Hyperparams;
use super::params::{ParamStore, Tensor};
use super::parser::{LabelEntry, LabelVocab, Parser};

pub const CHECKPOINT_FORMAT: &str = "rstparse-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    hyperparams: Hyperparams,
    labels: Vec<LabelEntry>,
    inventory: Vec<String>,
    backbone: BackboneSpec,
    seed: u64,
    tensors: Vec<Tensor>,
}

impl Parser {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let backbone = self.backbone.spec().ok_or_else(|| {
            Error::Checkpoint(format!("backbone {:?} cannot be checkpointed", self.backbone.kind()))
        })?;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            hyperparams: self.hp.clone(),
            labels: self.labels.to_entries(),
            inventory: self.inventory.clone(),
            backbone,
            seed: self.seed,
            tensors: self.params.tensors().to_vec(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?} (expected {CHECKPOINT_FORMAT:?})",
                file.format
            )));
        }
        let mut params = ParamStore::new();
        for t in file.tensors {
            params.insert(t)?;
        }
        let backbone = from_spec(&file.backbone)?;
        let labels = LabelVocab::from_entries(&file.labels)?;
        Parser::from_parts(file.hyperparams, backbone, labels, file.inventory, params, file.seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_checkpoint_json()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}
