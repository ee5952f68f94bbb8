use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Resolution, SynthParams};
use crate::error::{config_err, Error, Result};
use crate::imgrep::{Combo, ContrastParams};
use crate::nncore::OptimizerKind;
use crate::unet::UNetConfig;

/// Where samples come from: a directory in the standard layout, or a
/// synthetic corpus generated on the fly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: Option<PathBuf>,
    pub resolution: Resolution,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub count: usize,
    pub params: SynthParams,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 64,
            params: SynthParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub depth: usize,
    pub base_width: usize,
    pub convs_per_block: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_width: 16,
            convs_per_block: 2,
        }
    }
}

impl ModelConfig {
    pub fn unet(&self, combo: Combo) -> UNetConfig {
        UNetConfig {
            convs_per_block: self.convs_per_block,
            ..UNetConfig::for_combo(combo, self.depth, self.base_width)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub combo: Combo,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Total optimizer steps; overrides `epochs` when set.
    pub steps: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub folds: usize,
    pub contrast: ContrastParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            combo: "RGB+G".parse().expect("valid combo"),
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 40,
            steps: None,
            batch_size: 4,
            seed: 0,
            folds: 8,
            contrast: ContrastParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(config_err(format!(
                "learning_rate {} is invalid",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be >= 1"));
        }
        if self.folds < 2 {
            return Err(config_err(format!(
                "folds must be >= 2, got {}",
                self.folds
            )));
        }
        self.contrast.validate()
    }

    /// Optimizer steps for a training split of `n` samples.
    pub fn total_steps(&self, n: usize) -> usize {
        self.steps
            .unwrap_or_else(|| self.epochs * n.div_ceil(self.batch_size))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Subset of columns to run; all 14 when absent.
    pub combos: Option<Vec<Combo>>,
}

impl AblationConfig {
    pub fn columns(&self) -> Vec<Combo> {
        match &self.combos {
            Some(list) => Combo::table_order()
                .into_iter()
                .filter(|c| list.contains(c))
                .collect(),
            None => Combo::table_order(),
        }
    }
}

/// Complete run description, read from a single JSON file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => config_err(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.unet(self.train.combo).validate()?;
        let r = self.dataset.resolution;
        self.model
            .unet(self.train.combo)
            .check_input(r.height, r.width)?;
        if let Some(s) = &self.dataset.synthetic {
            s.params.validate()?;
        }
        if matches!(&self.ablation.combos, Some(c) if c.is_empty()) {
            return Err(config_err("ablation.combos is empty"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}
