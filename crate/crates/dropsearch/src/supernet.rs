//! The layer-wise dropout search space and one-shot supernet training.
//!
//! A supernet is a backbone network whose dropout slots each carry a list of
//! candidate designs. Training samples one sub-network per mini-batch
//! (uniform choice per slot) and updates the single shared parameter set, so
//! the cost per step is independent of the search-space size.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dropout::{DesignRegistry, DropoutDesign, DropoutKind, DropoutParams};
use crate::error::{Error, Result};
use crate::nn::{self, MaskMap, NetworkSpec, Parameters};
use crate::rng::{self, tag};
use crate::tensor::{Real, Tensor};

/// One candidate design at one slot: descriptor plus the instantiated
/// strategy (Masksembles choices already hold their prepared bank).
pub struct SlotChoice {
    pub kind: DropoutKind,
    pub params: DropoutParams,
    pub design: Box<dyn DropoutDesign>,
}

/// A dropout slot and its ordered choice list.
pub struct SlotSpec {
    pub slot_index: usize,
    pub shape: Vec<usize>,
    pub choices: Vec<SlotChoice>,
}

impl SlotSpec {
    pub fn option_count(&self) -> usize {
        self.choices.len()
    }
}

/// Backbone plus slots; the weight-sharing container for all sub-networks.
pub struct SupernetSpec {
    pub backbone: NetworkSpec,
    pub slots: Vec<SlotSpec>,
}

impl SupernetSpec {
    /// Builds the supernet, instantiating every slot choice against the
    /// activation shape the backbone produces at that slot.
    pub fn new(
        backbone: NetworkSpec,
        slot_choices: Vec<(usize, Vec<(DropoutKind, DropoutParams)>)>,
    ) -> Result<Self> {
        backbone.validate()?;
        let shapes = backbone.slot_shapes()?;
        let registry = DesignRegistry::builtin();
        let mut slots = Vec::with_capacity(slot_choices.len());
        for (slot_index, choices) in slot_choices {
            let shape = shapes.get(&slot_index).ok_or_else(|| Error::InvalidParam {
                name: "slots",
                message: format!("backbone has no dropout slot {slot_index}"),
            })?;
            if choices.is_empty() {
                return Err(Error::InvalidParam {
                    name: "slots",
                    message: format!("slot {slot_index} has an empty choice list"),
                });
            }
            let choices = choices
                .into_iter()
                .map(|(kind, params)| {
                    let design = registry.build(kind, &params, shape)?;
                    Ok(SlotChoice { kind, params, design })
                })
                .collect::<Result<Vec<_>>>()?;
            slots.push(SlotSpec { slot_index, shape: shape.clone(), choices });
        }
        slots.sort_by_key(|s| s.slot_index);
        let configured: Vec<usize> = slots.iter().map(|s| s.slot_index).collect();
        let mut declared = backbone.slot_indices();
        declared.sort_unstable();
        if configured != declared {
            return Err(Error::InvalidParam {
                name: "slots",
                message: format!(
                    "slot lists must match the backbone's dropout slots exactly: backbone {declared:?}, configured {configured:?}"
                ),
            });
        }
        Ok(SupernetSpec { backbone, slots })
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Total number of sub-networks: the product of per-slot choice counts.
    pub fn space_size(&self) -> u128 {
        self.slots.iter().map(|s| s.option_count() as u128).product()
    }

    pub fn check_genome(&self, genome: &GenomeConfig) -> Result<()> {
        if genome.choices.len() != self.slots.len() {
            return Err(Error::InvalidParam {
                name: "genome",
                message: format!(
                    "genome length {} does not match slot count {}",
                    genome.choices.len(),
                    self.slots.len()
                ),
            });
        }
        for (i, (&choice, slot)) in genome.choices.iter().zip(self.slots.iter()).enumerate() {
            if choice >= slot.option_count() {
                return Err(Error::GenomeOutOfRange {
                    slot: i,
                    choice,
                    options: slot.option_count(),
                });
            }
        }
        Ok(())
    }

    /// All genomes in lexicographic (odometer) order.
    pub fn enumerate_genomes(&self) -> Vec<GenomeConfig> {
        let mut genomes = Vec::new();
        let n = self.slots.len();
        let mut current = vec![0usize; n];
        loop {
            genomes.push(GenomeConfig { choices: current.clone() });
            let mut i = n;
            loop {
                if i == 0 {
                    return genomes;
                }
                i -= 1;
                current[i] += 1;
                if current[i] < self.slots[i].option_count() {
                    break;
                }
                current[i] = 0;
            }
        }
    }
}

/// A length-N choice vector identifying one sub-network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GenomeConfig {
    pub choices: Vec<usize>,
}

impl GenomeConfig {
    pub fn new(choices: Vec<usize>) -> Self {
        GenomeConfig { choices }
    }

    /// Compact dash-joined index rendering, e.g. `0-2-1`.
    pub fn key(&self) -> String {
        self.choices
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn id(&self) -> u64 {
        rng::genome_id(&self.choices)
    }
}

impl std::fmt::Display for GenomeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.key())
    }
}

/// Uniform, independent choice per slot.
pub fn sample_uniform(spec: &SupernetSpec, rng: &mut ChaCha8Rng) -> GenomeConfig {
    let choices = spec
        .slots
        .iter()
        .map(|slot| rng.gen_range(0..slot.option_count()))
        .collect();
    GenomeConfig { choices }
}

/// Generates the mask map for one sub-network at Monte-Carlo sample index
/// `t`. Dynamic designs draw fresh masks from `rng`; Masksembles slots read
/// bank entry `t mod K` and ignore the stream.
pub fn activate(
    spec: &SupernetSpec,
    genome: &GenomeConfig,
    t: u64,
    rng: &mut ChaCha8Rng,
) -> Result<MaskMap> {
    spec.check_genome(genome)?;
    let mut masks = MaskMap::new();
    for (slot, &choice) in spec.slots.iter().zip(genome.choices.iter()) {
        let design = &slot.choices[choice].design;
        let mask = design.gen_mask(&slot.shape, t, rng)?;
        masks.insert(slot.slot_index, mask);
    }
    Ok(masks)
}

/// Training hyperparameters for the supernet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl TrainHyper {
    fn validate(&self) -> Result<()> {
        if self.epochs > 0 && (self.learning_rate <= 0.0 || !self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam {
                name: "learning_rate",
                message: format!("must be positive, got {}", self.learning_rate),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParam {
                name: "momentum",
                message: format!("must lie in [0, 1), got {}", self.momentum),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam {
                name: "batch_size",
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Summary of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub iterations: usize,
    pub epoch_mean_loss: Vec<f64>,
}

/// Single-path one-shot training: each mini-batch samples one genome
/// uniformly, generates its masks once (shared across the batch), and applies
/// one SGD step to the shared parameters. Deterministic in `seed`.
pub fn train_supernet<T: Real>(
    spec: &SupernetSpec,
    dataset: &[(Tensor<T>, usize)],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<(Parameters<T>, TrainReport)> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let mut params = nn::init_params::<T>(&spec.backbone, seed)?;
    let mut velocity = params.zeros_like();
    let mut sample_rng = rng::stream(seed, tag::TRAIN, 0);
    let mut shuffle_rng = rng::stream(seed, tag::SHUFFLE, 0);
    // Masksembles slots advance through their banks with per-slot counters.
    let mut bank_counters: BTreeMap<usize, u64> =
        spec.slots.iter().map(|s| (s.slot_index, 0u64)).collect();

    let mut report = TrainReport { seed, iterations: 0, epoch_mean_loss: Vec::new() };
    let mut indices: Vec<usize> = (0..dataset.len()).collect();

    for _epoch in 0..hyper.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0f64;
        let mut epoch_samples = 0usize;
        for batch in indices.chunks(hyper.batch_size) {
            let genome = sample_uniform(spec, &mut sample_rng);
            let mut masks = MaskMap::new();
            for (slot, &choice) in spec.slots.iter().zip(genome.choices.iter()) {
                let chosen = &slot.choices[choice];
                let t = if chosen.kind == DropoutKind::Masksembles {
                    let counter = bank_counters.get_mut(&slot.slot_index).expect("slot known");
                    let t = *counter;
                    *counter += 1;
                    t
                } else {
                    0
                };
                masks.insert(slot.slot_index, chosen.design.gen_mask(&slot.shape, t, &mut sample_rng)?);
            }

            let mut grad_acc = params.zeros_like();
            let mut batch_loss = 0.0f64;
            for &idx in batch {
                let (x, label) = &dataset[idx];
                let acts = nn::forward(&spec.backbone, &params, x, Some(&masks))
                    .map_err(|e| match e {
                        Error::NonFinite { .. } => Error::Diverged { iteration: report.iterations },
                        other => other,
                    })?;
                let loss = nn::loss_ce(acts.last().expect("non-empty"), *label)?;
                let loss = loss.to_f64().unwrap_or(f64::NAN);
                if !loss.is_finite() {
                    return Err(Error::Diverged { iteration: report.iterations });
                }
                batch_loss += loss;
                let grads = nn::backward(&spec.backbone, &params, x, &acts, *label, Some(&masks))?;
                grad_acc.add_assign(&grads);
            }
            grad_acc.scale_in_place(1.0 / batch.len() as f64);
            nn::sgd_step(&mut params, &grad_acc, hyper.learning_rate, hyper.momentum, &mut velocity)?;
            epoch_loss += batch_loss;
            epoch_samples += batch.len();
            report.iterations += 1;
        }
        report.epoch_mean_loss.push(epoch_loss / epoch_samples as f64);
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn toy_supernet(choice_counts: &[usize]) -> SupernetSpec {
        // linear chain with one rank-1 slot per entry
        let mut layers = vec![LayerSpec::Linear { out_features: 8 }];
        for (i, _) in choice_counts.iter().enumerate() {
            layers.push(LayerSpec::DropoutSlot { slot_index: i });
        }
        layers.push(LayerSpec::Linear { out_features: 4 });
        let backbone = NetworkSpec::new(vec![6], layers).unwrap();
        let all = [
            DropoutKind::Bernoulli,
            DropoutKind::RandomChannel,
            DropoutKind::Block,
            DropoutKind::Masksembles,
        ];
        let slots = choice_counts
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let choices = (0..m)
                    .map(|j| {
                        let kind = all[j % all.len()];
                        let mut params = DropoutParams::new(0.25).with_seed(7 + i as u64);
                        if kind == DropoutKind::Block {
                            params.block_size = 1;
                        }
                        (kind, params)
                    })
                    .collect();
                (i, choices)
            })
            .collect();
        SupernetSpec::new(backbone, slots).unwrap()
    }

    fn toy_dataset(n: usize, seed: u64) -> Vec<(Tensor<f32>, usize)> {
        let mut rng = rng::stream(seed, tag::DATA, 0);
        (0..n)
            .map(|_| {
                let label = rng.gen_range(0..4usize);
                let data: Vec<f64> = (0..6)
                    .map(|j| if j == label { 1.0 } else { rng.gen::<f64>() * 0.2 })
                    .collect();
                (Tensor::from_f64_slice(vec![6], &data).unwrap(), label)
            })
            .collect()
    }

    #[test]
    fn single_option_slots_force_the_unique_genome() {
        let spec = toy_supernet(&[1, 1, 1]);
        let mut rng = rng::stream(1, 0, 0);
        for _ in 0..10 {
            assert_eq!(sample_uniform(&spec, &mut rng).choices, vec![0, 0, 0]);
        }
    }

    #[test]
    fn sampling_is_uniform_per_slot() {
        let spec = toy_supernet(&[4, 4, 4]);
        let mut rng = rng::stream(5, 0, 0);
        let mut counts = vec![[0usize; 4]; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let g = sample_uniform(&spec, &mut rng);
            for (slot, &c) in g.choices.iter().enumerate() {
                counts[slot][c] += 1;
            }
        }
        for slot in 0..3 {
            for choice in 0..4 {
                let freq = counts[slot][choice] as f64 / draws as f64;
                assert!((freq - 0.25).abs() <= 0.02, "slot {slot} choice {choice}: {freq}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_in_stream_state() {
        let spec = toy_supernet(&[3, 2]);
        let mut a = rng::stream(9, 1, 2);
        let mut b = rng::stream(9, 1, 2);
        for _ in 0..50 {
            assert_eq!(sample_uniform(&spec, &mut a), sample_uniform(&spec, &mut b));
        }
    }

    #[test]
    fn activate_rejects_out_of_range_choices() {
        let spec = toy_supernet(&[2, 2]);
        let mut rng = rng::stream(0, 0, 0);
        let bad = GenomeConfig::new(vec![0, 5]);
        match activate(&spec, &bad, 0, &mut rng) {
            Err(Error::GenomeOutOfRange { slot: 1, choice: 5, options: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn masksembles_choice_cycles_with_t() {
        let spec = toy_supernet(&[4]);
        // choice 3 is masksembles in toy_supernet's rotation
        let genome = GenomeConfig::new(vec![3]);
        let mut rng = rng::stream(3, 0, 0);
        let k = 4;
        let m0 = activate(&spec, &genome, 2, &mut rng).unwrap();
        let m1 = activate(&spec, &genome, 2 + k, &mut rng).unwrap();
        assert_eq!(m0.get(&0), m1.get(&0));
    }

    #[test]
    fn zero_rate_genome_matches_maskless_forward() {
        let backbone = NetworkSpec::new(
            vec![6],
            vec![
                LayerSpec::Linear { out_features: 8 },
                LayerSpec::DropoutSlot { slot_index: 0 },
                LayerSpec::Linear { out_features: 4 },
            ],
        )
        .unwrap();
        let spec = SupernetSpec::new(
            backbone,
            vec![(0, vec![(DropoutKind::Bernoulli, DropoutParams::new(0.0))])],
        )
        .unwrap();
        let params = nn::init_params::<f64>(&spec.backbone, 2).unwrap();
        let x = Tensor::<f64>::from_f64_slice(vec![6], &[0.1, -0.2, 0.3, 0.7, -0.5, 0.9]).unwrap();
        let mut rng = rng::stream(0, 0, 0);
        let masks = activate(&spec, &GenomeConfig::new(vec![0]), 0, &mut rng).unwrap();
        let with = nn::forward(&spec.backbone, &params, &x, Some(&masks)).unwrap();
        let without = nn::forward(&spec.backbone, &params, &x, None).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn evaluating_genomes_never_mutates_shared_parameters() {
        let spec = toy_supernet(&[4, 4]);
        let params = nn::init_params::<f32>(&spec.backbone, 8).unwrap();
        let before = params.clone();
        let x = Tensor::<f32>::filled(vec![6], 0.5);
        let mut rng = rng::stream(1, 2, 3);
        for genome in [GenomeConfig::new(vec![0, 3]), GenomeConfig::new(vec![2, 1])] {
            let masks = activate(&spec, &genome, 0, &mut rng).unwrap();
            let _ = nn::forward(&spec.backbone, &params, &x, Some(&masks)).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let spec = toy_supernet(&[2]);
        let data = toy_dataset(16, 1);
        let hyper = TrainHyper { epochs: 0, learning_rate: 0.01, momentum: 0.9, batch_size: 4 };
        let (params, report) = train_supernet(&spec, &data, &hyper, 33).unwrap();
        assert_eq!(params, nn::init_params::<f32>(&spec.backbone, 33).unwrap());
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let spec = toy_supernet(&[4, 2]);
        let data = toy_dataset(64, 5);
        let hyper = TrainHyper { epochs: 2, learning_rate: 0.05, momentum: 0.9, batch_size: 8 };
        let (a, ra) = train_supernet(&spec, &data, &hyper, 12).unwrap();
        let (b, rb) = train_supernet(&spec, &data, &hyper, 12).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epoch_mean_loss, rb.epoch_mean_loss);
    }

    #[test]
    fn training_reduces_mean_loss_on_separable_data() {
        let spec = toy_supernet(&[2]);
        let data = toy_dataset(512, 9);
        let hyper = TrainHyper { epochs: 3, learning_rate: 0.1, momentum: 0.9, batch_size: 32 };
        let (_, report) = train_supernet(&spec, &data, &hyper, 21).unwrap();
        let first = report.epoch_mean_loss.first().unwrap();
        let last = report.epoch_mean_loss.last().unwrap();
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn iteration_count_is_independent_of_space_size() {
        let small = toy_supernet(&[1]);
        let large = toy_supernet(&[4, 4, 4]);
        let data = toy_dataset(40, 2);
        let hyper = TrainHyper { epochs: 2, learning_rate: 0.01, momentum: 0.0, batch_size: 8 };
        let (_, rs) = train_supernet(&small, &data, &hyper, 1).unwrap();
        let (_, rl) = train_supernet(&large, &data, &hyper, 1).unwrap();
        assert_eq!(rs.iterations, 2 * 5);
        assert_eq!(rl.iterations, 2 * 5);
    }

    #[test]
    fn space_size_multiplies_choice_counts() {
        let spec = toy_supernet(&[4, 4, 2]);
        assert_eq!(spec.space_size(), 32);
        assert_eq!(spec.enumerate_genomes().len(), 32);
    }
}
