//! Run configuration: one JSON file drives the whole pipeline. Unknown keys
//! are rejected and every random decision is pinned by an explicit seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dropout::{DropoutKind, DropoutParams};
use crate::error::{Error, Result};
use crate::evosearch::{AimWeights, EaParams};
use crate::hwmodel::{HwShape, LatencyCalibration};
use crate::nn::NetworkSpec;
use crate::rng;
use crate::supernet::{SupernetSpec, TrainHyper};

pub const SCHEMA_VERSION: u32 = 1;

/// Fraction of the training file held out as the validation split.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceConfig {
    pub kind: DropoutKind,
    pub rate: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_mask_count")]
    pub mask_count: usize,
}

fn default_block_size() -> usize {
    3
}

fn default_mask_count() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotConfig {
    pub slot_index: usize,
    pub choices: Vec<ChoiceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Optional cap on the number of training images read from the dataset.
    #[serde(default)]
    pub train_limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub parent_count: usize,
    pub mutation_prob: f64,
    pub mutation_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub mc_samples: usize,
    pub ece_bins: usize,
    pub ood_samples: usize,
    #[serde(default = "default_enumerate_cap")]
    pub enumerate_cap: u128,
}

fn default_enumerate_cap() -> u128 {
    4096
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub clock_mhz: f64,
    #[serde(default)]
    pub calibration: LatencyCalibration,
    /// Extra (elements, channels, spatial) shapes for the surrogate's
    /// training grid, on top of the supernet's own slot shapes.
    #[serde(default)]
    pub grid: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub search: u64,
    pub ood: u64,
    pub bank: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub backbone: NetworkSpec,
    pub slots: Vec<SlotConfig>,
    pub training: TrainingConfig,
    pub search: SearchConfig,
    pub aim_weights: AimWeights,
    pub evaluation: EvaluationConfig,
    pub latency: LatencyConfig,
    pub seeds: Seeds,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            message: format!("{}: {e}", path.display()),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.backbone.validate()?;
        if self.slots.is_empty() {
            return Err(Error::config("at least one dropout slot is required"));
        }
        for slot in &self.slots {
            if slot.choices.is_empty() {
                return Err(Error::config(format!(
                    "slot {} has an empty choice list",
                    slot.slot_index
                )));
            }
            let mut kinds: Vec<DropoutKind> = slot.choices.iter().map(|c| c.kind).collect();
            kinds.sort();
            kinds.dedup();
            if kinds.len() != slot.choices.len() {
                return Err(Error::config(format!(
                    "slot {} repeats a dropout kind; letter codes must stay unambiguous",
                    slot.slot_index
                )));
            }
            for choice in &slot.choices {
                if !(0.0..1.0).contains(&choice.rate) {
                    return Err(Error::config(format!(
                        "slot {} {} rate {} outside [0, 1)",
                        slot.slot_index,
                        choice.kind.name(),
                        choice.rate
                    )));
                }
            }
        }
        self.aim_weights.validate()?;
        self.ea_params().validate()?;
        self.latency.calibration.validate()?;
        if self.latency.clock_mhz <= 0.0 {
            return Err(Error::config(format!(
                "clock_mhz must be positive, got {}",
                self.latency.clock_mhz
            )));
        }
        if self.evaluation.mc_samples == 0 || self.evaluation.ece_bins == 0 {
            return Err(Error::config("mc_samples and ece_bins must be positive"));
        }
        Ok(())
    }

    /// Instantiates the supernet, deriving each Masksembles bank seed from
    /// the run's bank seed, the slot index, and the choice index.
    pub fn supernet(&self) -> Result<SupernetSpec> {
        let slot_choices = self
            .slots
            .iter()
            .map(|slot| {
                let choices = slot
                    .choices
                    .iter()
                    .enumerate()
                    .map(|(choice_index, c)| {
                        let params = DropoutParams {
                            rate: c.rate,
                            block_size: c.block_size,
                            mask_count: c.mask_count,
                            seed: rng::mix(self.seeds.bank, slot.slot_index as u64, choice_index as u64),
                        };
                        (c.kind, params)
                    })
                    .collect();
                (slot.slot_index, choices)
            })
            .collect();
        SupernetSpec::new(self.backbone.clone(), slot_choices)
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.training.epochs,
            learning_rate: self.training.learning_rate,
            momentum: self.training.momentum,
            batch_size: self.training.batch_size,
        }
    }

    pub fn ea_params(&self) -> EaParams {
        EaParams {
            population_size: self.search.population_size,
            generations: self.search.generations,
            parent_count: self.search.parent_count,
            mutation_prob: self.search.mutation_prob,
            mutation_fraction: self.search.mutation_fraction,
            seed: self.seeds.search,
        }
    }

    pub fn grid_shapes(&self) -> Vec<HwShape> {
        self.latency
            .grid
            .iter()
            .map(|&[elements, channels, spatial]| HwShape { elements, channels, spatial })
            .collect()
    }

    /// Stable identity of the supernet this config describes: a SHA-256 over
    /// the canonical JSON of the backbone and the fully resolved slot
    /// choices. Checkpoints carry this hash and are rejected elsewhere.
    pub fn spec_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct HashedChoice {
            kind: &'static str,
            rate: f64,
            block_size: usize,
            mask_count: usize,
            seed: u64,
        }
        #[derive(Serialize)]
        struct Hashed<'a> {
            backbone: &'a NetworkSpec,
            slots: Vec<(usize, Vec<HashedChoice>)>,
        }
        let slots = self
            .slots
            .iter()
            .map(|slot| {
                let choices = slot
                    .choices
                    .iter()
                    .enumerate()
                    .map(|(choice_index, c)| HashedChoice {
                        kind: c.kind.name(),
                        rate: c.rate,
                        block_size: c.block_size,
                        mask_count: c.mask_count,
                        seed: rng::mix(self.seeds.bank, slot.slot_index as u64, choice_index as u64),
                    })
                    .collect();
                (slot.slot_index, choices)
            })
            .collect();
        let hashed = Hashed { backbone: &self.backbone, slots };
        let json = serde_json::to_string(&hashed).map_err(|e| Error::Config {
            message: format!("spec hash serialization failed: {e}"),
        })?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
