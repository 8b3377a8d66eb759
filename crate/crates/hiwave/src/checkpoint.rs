//! JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "hiwave-checkpoint-1",
//!   "variant": "hybrid-L3-db2-gem",
//!   "seed": 0,
//!   "eval_batch_size": 64,
//!   "tokenizer": { ... },
//!   "model": { ... },
//!   "normalization": { "source": "train", "mean": [...], "std": [...], "guarded": [] },
//!   "params": { "input.weight": { "shape": [216, 64], "data": [...] }, ... }
//! }
//! ```
//!
//! Floats are written with round-trip precision, so a reloaded model
//! reproduces the saved one bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use hiwave_core::{ChannelStats, HiWaveModel, ModelConfig, Tensor, TokenizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HiwaveError, Result};
use crate::records::{read_json, write_json};

pub const FORMAT: &str = "hiwave-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub variant: String,
    pub seed: u64,
    /// Batch size the recorded test accuracy was computed with.
    pub eval_batch_size: usize,
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    /// Statistics the inputs were z-scored with; absent when training used raw inputs.
    pub normalization: Option<ChannelStats>,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn capture(
        model: &HiWaveModel,
        variant: &str,
        seed: u64,
        eval_batch_size: usize,
        normalization: Option<ChannelStats>,
    ) -> Self {
        let params = model
            .params()
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    StoredTensor {
                        shape: p.value.shape().to_vec(),
                        data: p.value.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: FORMAT.into(),
            variant: variant.into(),
            seed,
            eval_batch_size,
            tokenizer: model.tokenizer_config().clone(),
            model: model.model_config().clone(),
            normalization,
            params,
        }
    }

    /// Rebuilds the model and overwrites every parameter with the stored values.
    pub fn restore(&self) -> Result<HiWaveModel> {
        if self.format != FORMAT {
            return Err(HiwaveError::Config(format!(
                "unsupported checkpoint format `{}`",
                self.format
            )));
        }
        let mut model = HiWaveModel::build(self.model.clone(), self.tokenizer.clone(), self.seed)?;
        let tensors = self
            .params
            .iter()
            .map(|(name, t)| Ok((name.as_str(), Tensor::new(t.shape.clone(), t.data.clone())?)))
            .collect::<std::result::Result<Vec<_>, hiwave_core::TensorError>>()
            .map_err(|e| HiwaveError::Config(format!("checkpoint tensor: {e}")))?;
        model.load_values(tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
