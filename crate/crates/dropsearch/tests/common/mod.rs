//! Shared helpers for the integration suites: a small MLP run configuration
//! and a matching synthetic dataset, fast enough for exit-code and
//! consistency checks.

use std::path::Path;

use dropsearch::dropout::DropoutKind;
use dropsearch::evosearch::AimWeights;
use dropsearch::harness::config::{
    ChoiceConfig, EvaluationConfig, LatencyConfig, PathsConfig, RunConfig, SearchConfig, Seeds,
    SlotConfig, TrainingConfig, SCHEMA_VERSION,
};
use dropsearch::harness::synth;
use dropsearch::hwmodel::LatencyCalibration;
use dropsearch::nn::{LayerSpec, NetworkSpec};

pub fn mini_config(dir: &Path) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        backbone: NetworkSpec {
            input_shape: vec![1, 28, 28],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 32 },
                LayerSpec::Relu,
                LayerSpec::DropoutSlot { slot_index: 0 },
                LayerSpec::Linear { out_features: 16 },
                LayerSpec::Relu,
                LayerSpec::DropoutSlot { slot_index: 1 },
                LayerSpec::Linear { out_features: 10 },
            ],
        },
        slots: vec![
            SlotConfig {
                slot_index: 0,
                choices: vec![
                    ChoiceConfig { kind: DropoutKind::Bernoulli, rate: 0.25, block_size: 3, mask_count: 4 },
                    ChoiceConfig { kind: DropoutKind::RandomChannel, rate: 0.25, block_size: 3, mask_count: 4 },
                    ChoiceConfig { kind: DropoutKind::Block, rate: 0.25, block_size: 3, mask_count: 4 },
                    ChoiceConfig { kind: DropoutKind::Masksembles, rate: 0.25, block_size: 3, mask_count: 4 },
                ],
            },
            SlotConfig {
                slot_index: 1,
                choices: vec![
                    ChoiceConfig { kind: DropoutKind::Bernoulli, rate: 0.5, block_size: 3, mask_count: 4 },
                    ChoiceConfig { kind: DropoutKind::Masksembles, rate: 0.5, block_size: 3, mask_count: 4 },
                ],
            },
        ],
        training: TrainingConfig {
            epochs: 1,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 16,
            train_limit: Some(300),
        },
        search: SearchConfig {
            population_size: 4,
            generations: 3,
            parent_count: 2,
            mutation_prob: 0.2,
            mutation_fraction: 0.5,
        },
        aim_weights: AimWeights { eta: 1.0, mu: 1.0, beta: 1.0, lambda: 1.0 },
        evaluation: EvaluationConfig {
            mc_samples: 3,
            ece_bins: 10,
            ood_samples: 32,
            enumerate_cap: 4096,
        },
        latency: LatencyConfig {
            clock_mhz: 200.0,
            calibration: LatencyCalibration::default(),
            grid: vec![[64, 64, 1], [16, 16, 1]],
        },
        seeds: Seeds { train: 1, search: 2, ood: 3, bank: 4, eval: 5 },
        paths: PathsConfig {
            train_images: dir.join("data/train-images-idx3-ubyte"),
            train_labels: dir.join("data/train-labels-idx1-ubyte"),
            out_dir: dir.join("out"),
        },
    }
}

/// Writes the mini dataset and the config JSON; returns the config path.
pub fn prepare_mini_run(dir: &Path) -> std::path::PathBuf {
    synth::write_dataset(&dir.join("data"), 300, 50, 11).unwrap();
    let cfg = mini_config(dir);
    let path = dir.join("run.json");
    dropsearch::hwmodel::write_json(&path, &cfg).unwrap();
    path
}
