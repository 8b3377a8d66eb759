//! JSON experiment configuration and the named ablation variants.
//!
//! Every section rejects unknown keys. Missing keys fall back to the
//! champion run: hybrid tokens, db2, depth 3, GeM at 3, 30 epochs of AdamW.

use std::path::{Path, PathBuf};

use hiwave_core::{ModelConfig, Pooling, TokenizerConfig, TrainConfig, Variant, WaveletKind};
use serde::{Deserialize, Serialize};

use crate::error::{HiwaveError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root; `HIWAVE_DATA_ROOT` is used when absent.
    pub root: Option<PathBuf>,
    pub standardize: bool,
    /// Binary cache of the parsed splits, created on first use.
    pub cache: Option<PathBuf>,
    /// Downloaded archive checked against `sha256` before loading.
    pub archive: Option<PathBuf>,
    pub sha256: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            standardize: true,
            cache: None,
            archive: None,
            sha256: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HiwaveError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| HiwaveError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Tokenizer for a named variant, or the configured one for [`CUSTOM`].
    pub fn tokenizer_for(&self, variant: &str) -> Result<TokenizerConfig> {
        if variant == CUSTOM {
            Ok(self.tokenizer.clone())
        } else {
            variant_tokenizer(variant, &self.tokenizer)
        }
    }

    /// Name under which a run of the configured tokenizer is recorded.
    pub fn variant_label(&self) -> &'static str {
        variant_name(&self.tokenizer).unwrap_or(CUSTOM)
    }

    /// Dataset root from the config, else from `HIWAVE_DATA_ROOT`.
    pub fn data_root(&self) -> Result<PathBuf> {
        self.data
            .root
            .clone()
            .or_else(|| std::env::var_os("HIWAVE_DATA_ROOT").map(PathBuf::from))
            .ok_or_else(|| HiwaveError::Usage("no dataset root: pass --data-root or set HIWAVE_DATA_ROOT".into()))
    }
}

/// The seven configurations of the ablation study, champion second.
pub const VARIANTS: [&str; 7] = [
    "baseline",
    "hybrid-L3-db2-gem",
    "replacement-L3-db2-gem",
    "hybrid-L2-db2-gem",
    "hybrid-pyramid-db2-gem",
    "hybrid-L3-db4-gem",
    "hybrid-L3-db2-avg",
];

pub const CHAMPION: &str = "hybrid-L3-db2-gem";

/// Label for a tokenizer that matches none of [`VARIANTS`].
pub const CUSTOM: &str = "custom";

/// Tokenizer settings for a named variant; `base` supplies `gem_init` and
/// the patch geometry.
pub fn variant_tokenizer(name: &str, base: &TokenizerConfig) -> Result<TokenizerConfig> {
    let champion = TokenizerConfig {
        variant: Variant::Hybrid,
        wavelet: WaveletKind::Db2,
        depth_set: vec![3],
        pooling: Pooling::Gem,
        ..base.clone()
    };
    let cfg = match name {
        "baseline" => TokenizerConfig {
            variant: Variant::Baseline,
            ..champion
        },
        "hybrid-L3-db2-gem" => champion,
        "replacement-L3-db2-gem" => TokenizerConfig {
            variant: Variant::Replacement,
            ..champion
        },
        "hybrid-L2-db2-gem" => TokenizerConfig {
            depth_set: vec![2],
            ..champion
        },
        "hybrid-pyramid-db2-gem" => TokenizerConfig {
            depth_set: vec![1, 2, 3],
            ..champion
        },
        "hybrid-L3-db4-gem" => TokenizerConfig {
            wavelet: WaveletKind::Db4,
            ..champion
        },
        "hybrid-L3-db2-avg" => TokenizerConfig {
            pooling: Pooling::Avg,
            ..champion
        },
        other => {
            return Err(HiwaveError::Config(format!(
                "unknown variant `{other}`; expected one of {}",
                VARIANTS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// The variant name matching `cfg`, if it is one of [`VARIANTS`].
pub fn variant_name(cfg: &TokenizerConfig) -> Option<&'static str> {
    VARIANTS
        .iter()
        .copied()
        .find(|v| variant_tokenizer(v, cfg).is_ok_and(|t| &t == cfg))
}
