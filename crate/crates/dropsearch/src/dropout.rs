//! The four dropout designs and their masks.
//!
//! Each design is a strategy behind the [`DropoutDesign`] trait: Bernoulli
//! (element-level), RandomChannel (channel/feature-level), Block (contiguous
//! squares seeded at a corrected rate), and Masksembles (a static bank of
//! pre-generated channel masks reused cyclically, no inference-time RNG).
//! Designs register by name and letter code in [`DesignRegistry`], which is
//! how configs and the CLI select them at runtime.
//!
//! All masks use inverted scaling (`elements / ones`), so the expected output
//! of [`apply`] equals the input for every design and the four kinds stay
//! comparable under one metric suite.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::{Real, Tensor};

/// Closed enumeration of the four supported dropout designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutKind {
    Bernoulli,
    #[serde(rename = "random")]
    RandomChannel,
    Block,
    Masksembles,
}

impl DropoutKind {
    pub const ALL: [DropoutKind; 4] = [
        DropoutKind::Bernoulli,
        DropoutKind::RandomChannel,
        DropoutKind::Block,
        DropoutKind::Masksembles,
    ];

    /// Stable lowercase name used in configs and CSV files.
    pub fn name(self) -> &'static str {
        match self {
            DropoutKind::Bernoulli => "bernoulli",
            DropoutKind::RandomChannel => "random",
            DropoutKind::Block => "block",
            DropoutKind::Masksembles => "masksembles",
        }
    }

    /// Single-letter code used when rendering genomes (B / R / K / M).
    pub fn letter(self) -> char {
        match self {
            DropoutKind::Bernoulli => 'B',
            DropoutKind::RandomChannel => 'R',
            DropoutKind::Block => 'K',
            DropoutKind::Masksembles => 'M',
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DropoutKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        DropoutKind::ALL.iter().copied().find(|k| k.letter() == letter)
    }

    /// Index into one-hot feature encodings; fixed order B, R, K, M.
    pub fn index(self) -> usize {
        match self {
            DropoutKind::Bernoulli => 0,
            DropoutKind::RandomChannel => 1,
            DropoutKind::Block => 2,
            DropoutKind::Masksembles => 3,
        }
    }
}

/// Hyperparameters shared by all designs. `block_size` only matters for
/// Block, `mask_count` and `seed` only for Masksembles bank generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutParams {
    pub rate: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_mask_count")]
    pub mask_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_block_size() -> usize {
    3
}

fn default_mask_count() -> usize {
    4
}

impl DropoutParams {
    pub fn new(rate: f64) -> Self {
        DropoutParams {
            rate,
            block_size: default_block_size(),
            mask_count: default_mask_count(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check_rate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) || !self.rate.is_finite() {
            return Err(Error::InvalidParam {
                name: "rate",
                message: format!("dropout rate must lie in [0, 1), got {}", self.rate),
            });
        }
        Ok(())
    }
}

/// Binary mask congruent with one activation shape, plus its inverted scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    shape: Vec<usize>,
    values: Vec<u8>,
    scale: f64,
}

impl Mask {
    /// Builds a mask from 0/1 values; rejects the all-zero mask.
    fn from_values(shape: Vec<usize>, values: Vec<u8>) -> Option<Mask> {
        let ones = values.iter().filter(|&&v| v == 1).count();
        if ones == 0 {
            return None;
        }
        let scale = values.len() as f64 / ones as f64;
        Some(Mask { shape, values, scale })
    }

    pub fn all_ones(shape: Vec<usize>) -> Mask {
        let n: usize = shape.iter().product();
        Mask { shape, values: vec![1; n], scale: 1.0 }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

/// y = x · mask · scale, elementwise.
pub fn apply<T: Real>(mask: &Mask, x: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            context: "mask application",
            expected: mask.shape().to_vec(),
            got: x.shape().to_vec(),
        });
    }
    let scale = T::from_f64_exact(mask.scale);
    let data = x
        .data()
        .iter()
        .zip(mask.values.iter())
        .map(|(&v, &m)| if m == 1 { v * scale } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// DropBlock-style seeding rate. `s` is the short spatial side.
pub fn block_gamma(rate: f64, block_size: usize, s: usize) -> f64 {
    let b = block_size as f64;
    let s = s as f64;
    rate / (b * b) * (s * s) / ((s - b + 1.0) * (s - b + 1.0))
}

/// 1-D analogue for feature-vector slots.
fn block_gamma_1d(rate: f64, block_size: usize, s: usize) -> f64 {
    let b = block_size as f64;
    let s = s as f64;
    rate / b * s / (s - b + 1.0)
}

const MAX_REDRAWS: usize = 100;

fn rank_channels(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.len() {
        3 => Ok((shape[0], shape[1] * shape[2])),
        1 => Ok((shape[0], 1)),
        _ => Err(Error::InvalidParam {
            name: "activation_shape",
            message: format!("dropout slots take rank-3 (C,H,W) or rank-1 (F) shapes, got {shape:?}"),
        }),
    }
}

/// One dropout strategy: generates masks for a fixed slot shape family.
///
/// `t` is the Monte-Carlo sample index; only Masksembles reads it (bank index
/// `t mod K`), the dynamic designs draw fresh masks from `rng` instead.
pub trait DropoutDesign: Send + Sync {
    fn kind(&self) -> DropoutKind;

    fn params(&self) -> &DropoutParams;

    fn gen_mask(&self, shape: &[usize], t: u64, rng: &mut ChaCha8Rng) -> Result<Mask>;

    /// Expected count of random decisions per generated mask; 0 for static
    /// designs. Orders the designs by sampling granularity.
    fn random_decisions(&self, shape: &[usize]) -> f64;
}

fn redraw<F>(kind: &'static str, rate: f64, mut draw: F) -> Result<Mask>
where
    F: FnMut() -> Option<Mask>,
{
    for _ in 0..=MAX_REDRAWS {
        if let Some(mask) = draw() {
            return Ok(mask);
        }
    }
    Err(Error::DegenerateRate { kind, rate })
}

// ---------------------------------------------------------------------------
// Bernoulli: one independent keep/drop decision per element.
// ---------------------------------------------------------------------------

pub struct BernoulliDropout {
    params: DropoutParams,
}

impl BernoulliDropout {
    pub fn new(params: DropoutParams) -> Result<Self> {
        params.check_rate()?;
        Ok(BernoulliDropout { params })
    }
}

impl DropoutDesign for BernoulliDropout {
    fn kind(&self) -> DropoutKind {
        DropoutKind::Bernoulli
    }

    fn params(&self) -> &DropoutParams {
        &self.params
    }

    fn gen_mask(&self, shape: &[usize], _t: u64, rng: &mut ChaCha8Rng) -> Result<Mask> {
        rank_channels(shape)?;
        let keep = 1.0 - self.params.rate;
        let n: usize = shape.iter().product();
        redraw("bernoulli", self.params.rate, || {
            let values: Vec<u8> = (0..n)
                .map(|_| u8::from(rng.gen::<f64>() < keep))
                .collect();
            Mask::from_values(shape.to_vec(), values)
        })
    }

    fn random_decisions(&self, shape: &[usize]) -> f64 {
        shape.iter().product::<usize>() as f64
    }
}

// ---------------------------------------------------------------------------
// RandomChannel: one decision per channel (per feature for rank-1 slots);
// kept channels stay as full all-ones planes.
// ---------------------------------------------------------------------------

pub struct RandomChannelDropout {
    params: DropoutParams,
}

impl RandomChannelDropout {
    pub fn new(params: DropoutParams) -> Result<Self> {
        params.check_rate()?;
        Ok(RandomChannelDropout { params })
    }
}

impl DropoutDesign for RandomChannelDropout {
    fn kind(&self) -> DropoutKind {
        DropoutKind::RandomChannel
    }

    fn params(&self) -> &DropoutParams {
        &self.params
    }

    fn gen_mask(&self, shape: &[usize], _t: u64, rng: &mut ChaCha8Rng) -> Result<Mask> {
        let (channels, plane) = rank_channels(shape)?;
        let keep = 1.0 - self.params.rate;
        redraw("random", self.params.rate, || {
            let mut values = vec![0u8; channels * plane];
            for c in 0..channels {
                if rng.gen::<f64>() < keep {
                    values[c * plane..(c + 1) * plane].fill(1);
                }
            }
            Mask::from_values(shape.to_vec(), values)
        })
    }

    fn random_decisions(&self, shape: &[usize]) -> f64 {
        rank_channels(shape).map(|(c, _)| c as f64).unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// Block: seed positions at rate gamma, each seed zeroing a block_size^2
// square centered on it. Squares wrap cyclically at the borders, which keeps
// every position statistically exchangeable and the scaled mask unbiased
// elementwise.
// ---------------------------------------------------------------------------

pub struct BlockDropout {
    params: DropoutParams,
}

impl BlockDropout {
    pub fn new(params: DropoutParams) -> Result<Self> {
        params.check_rate()?;
        if params.block_size == 0 || params.block_size % 2 == 0 {
            return Err(Error::InvalidParam {
                name: "block_size",
                message: format!("block size must be an odd positive integer, got {}", params.block_size),
            });
        }
        Ok(BlockDropout { params })
    }

    fn gamma_for(&self, shape: &[usize]) -> Result<f64> {
        let b = self.params.block_size;
        match shape.len() {
            3 => {
                let s = shape[1].min(shape[2]);
                if b > s {
                    return Err(Error::InvalidParam {
                        name: "block_size",
                        message: format!("block size {b} exceeds short spatial side {s}"),
                    });
                }
                Ok(block_gamma(self.params.rate, b, s))
            }
            1 => {
                let s = shape[0];
                if b > s {
                    return Err(Error::InvalidParam {
                        name: "block_size",
                        message: format!("block size {b} exceeds feature count {s}"),
                    });
                }
                Ok(block_gamma_1d(self.params.rate, b, s))
            }
            _ => rank_channels(shape).map(|_| unreachable!()),
        }
    }

    /// Draws one candidate mask and reports the seed positions, flattened
    /// per channel. Used directly by structure tests.
    pub(crate) fn sample_with_seeds(
        &self,
        shape: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<u8>, Vec<(usize, usize, usize)>)> {
        let gamma = self.gamma_for(shape)?;
        let b = self.params.block_size;
        let half = b / 2;
        let (channels, _) = rank_channels(shape)?;
        let (h, w) = if shape.len() == 3 { (shape[1], shape[2]) } else { (1, shape[0]) };
        let mut values = vec![1u8; channels * h * w];
        let mut seeds = Vec::new();
        for c in 0..channels {
            for r in 0..h {
                for q in 0..w {
                    if rng.gen::<f64>() < gamma {
                        seeds.push((c, r, q));
                        let rows: Box<dyn Iterator<Item = usize>> = if h == 1 {
                            Box::new(std::iter::once(0))
                        } else {
                            Box::new((0..b).map(move |i| (r + h + i - half) % h))
                        };
                        for rr in rows {
                            for j in 0..b {
                                let qq = (q + w + j - half) % w;
                                values[c * h * w + rr * w + qq] = 0;
                            }
                        }
                    }
                }
            }
        }
        Ok((values, seeds))
    }
}

impl DropoutDesign for BlockDropout {
    fn kind(&self) -> DropoutKind {
        DropoutKind::Block
    }

    fn params(&self) -> &DropoutParams {
        &self.params
    }

    fn gen_mask(&self, shape: &[usize], _t: u64, rng: &mut ChaCha8Rng) -> Result<Mask> {
        self.gamma_for(shape)?;
        redraw("block", self.params.rate, || {
            let (values, _) = self
                .sample_with_seeds(shape, rng)
                .expect("shape validated above");
            Mask::from_values(shape.to_vec(), values)
        })
    }

    fn random_decisions(&self, shape: &[usize]) -> f64 {
        let elements: usize = shape.iter().product();
        self.gamma_for(shape).map(|g| g * elements as f64).unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// Masksembles: a static bank of K channel masks reused cyclically.
// ---------------------------------------------------------------------------

/// K pre-generated channel masks for one slot. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBank {
    channels: usize,
    keep: usize,
    masks: Vec<Vec<u8>>,
    seed: u64,
}

impl MaskBank {
    pub fn mask_count(&self) -> usize {
        self.masks.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kept_channels(&self) -> usize {
        self.keep
    }

    pub fn channel_mask(&self, t: u64) -> &[u8] {
        &self.masks[(t % self.masks.len() as u64) as usize]
    }
}

/// Builds a bank of `mask_count` channel masks, each keeping exactly
/// `ceil((1 - rate) * channels)` channels.
///
/// Channels are assigned by a need-balanced draw so that coverage across the
/// bank differs by at most one between channels (and is exactly equal when
/// `mask_count * keep` divides evenly by `channels`). That keeps the cyclic
/// average of scaled masks at the input value elementwise.
pub fn build_mask_bank(params: &DropoutParams, channels: usize, seed: u64) -> Result<MaskBank> {
    params.check_rate()?;
    let k = params.mask_count;
    if k < 2 {
        return Err(Error::InvalidParam {
            name: "mask_count",
            message: format!("masksembles needs at least 2 masks, got {k}"),
        });
    }
    if channels < k {
        return Err(Error::InvalidParam {
            name: "mask_count",
            message: format!("{channels} channels cannot host {k} masks (need channels >= mask_count)"),
        });
    }
    let keep = ((1.0 - params.rate) * channels as f64).ceil() as usize;
    let keep = keep.clamp(1, channels);

    let mut rng = rng::stream(seed, tag::BANK, channels as u64);
    let total = k * keep;
    let base = total / channels;
    let rem = total % channels;
    let mut need = vec![base; channels];
    let mut order: Vec<usize> = (0..channels).collect();
    order.shuffle(&mut rng);
    for &c in order.iter().take(rem) {
        need[c] += 1;
    }

    let mut masks = Vec::with_capacity(k);
    for _ in 0..k {
        let mut rank: Vec<usize> = (0..channels).collect();
        rank.shuffle(&mut rng);
        let mut by_need: Vec<usize> = (0..channels).collect();
        by_need.sort_by(|&a, &b| need[b].cmp(&need[a]).then(rank[a].cmp(&rank[b])));
        let chosen: BTreeSet<usize> = by_need.into_iter().take(keep).collect();
        for &c in &chosen {
            need[c] = need[c].saturating_sub(1);
        }
        let mut mask = vec![0u8; channels];
        for &c in &chosen {
            mask[c] = 1;
        }
        masks.push(mask);
    }
    Ok(MaskBank { channels, keep, masks, seed })
}

pub struct Masksembles {
    params: DropoutParams,
    bank: MaskBank,
}

impl Masksembles {
    /// Builds the design with its bank prepared for `channels`.
    pub fn new(params: DropoutParams, channels: usize) -> Result<Self> {
        let bank = build_mask_bank(&params, channels, params.seed)?;
        Ok(Masksembles { params, bank })
    }

    pub fn bank(&self) -> &MaskBank {
        &self.bank
    }
}

impl DropoutDesign for Masksembles {
    fn kind(&self) -> DropoutKind {
        DropoutKind::Masksembles
    }

    fn params(&self) -> &DropoutParams {
        &self.params
    }

    fn gen_mask(&self, shape: &[usize], t: u64, _rng: &mut ChaCha8Rng) -> Result<Mask> {
        let (channels, plane) = rank_channels(shape)?;
        if channels != self.bank.channels {
            return Err(Error::ShapeMismatch {
                context: "masksembles bank",
                expected: vec![self.bank.channels],
                got: vec![channels],
            });
        }
        let channel_mask = self.bank.channel_mask(t);
        let mut values = vec![0u8; channels * plane];
        for (c, &m) in channel_mask.iter().enumerate() {
            if m == 1 {
                values[c * plane..(c + 1) * plane].fill(1);
            }
        }
        Mask::from_values(shape.to_vec(), values).ok_or(Error::DegenerateRate {
            kind: "masksembles",
            rate: self.params.rate,
        })
    }

    fn random_decisions(&self, _shape: &[usize]) -> f64 {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Registry: name / letter -> design factory, the runtime selection point.
// ---------------------------------------------------------------------------

type BuildFn = fn(&DropoutParams, &[usize]) -> Result<Box<dyn DropoutDesign>>;

pub struct RegistryEntry {
    pub kind: DropoutKind,
    pub name: &'static str,
    pub letter: char,
    build: BuildFn,
}

/// Maps kind names and letter codes to design constructors.
pub struct DesignRegistry {
    entries: Vec<RegistryEntry>,
}

fn build_bernoulli(params: &DropoutParams, _shape: &[usize]) -> Result<Box<dyn DropoutDesign>> {
    Ok(Box::new(BernoulliDropout::new(*params)?))
}

fn build_random(params: &DropoutParams, _shape: &[usize]) -> Result<Box<dyn DropoutDesign>> {
    Ok(Box::new(RandomChannelDropout::new(*params)?))
}

fn build_block(params: &DropoutParams, _shape: &[usize]) -> Result<Box<dyn DropoutDesign>> {
    Ok(Box::new(BlockDropout::new(*params)?))
}

fn build_masksembles(params: &DropoutParams, shape: &[usize]) -> Result<Box<dyn DropoutDesign>> {
    let (channels, _) = rank_channels(shape)?;
    Ok(Box::new(Masksembles::new(*params, channels)?))
}

impl DesignRegistry {
    pub fn builtin() -> Self {
        DesignRegistry {
            entries: vec![
                RegistryEntry {
                    kind: DropoutKind::Bernoulli,
                    name: "bernoulli",
                    letter: 'B',
                    build: build_bernoulli,
                },
                RegistryEntry {
                    kind: DropoutKind::RandomChannel,
                    name: "random",
                    letter: 'R',
                    build: build_random,
                },
                RegistryEntry {
                    kind: DropoutKind::Block,
                    name: "block",
                    letter: 'K',
                    build: build_block,
                },
                RegistryEntry {
                    kind: DropoutKind::Masksembles,
                    name: "masksembles",
                    letter: 'M',
                    build: build_masksembles,
                },
            ],
        }
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    /// Instantiates a design for a slot. `shape` is the activation shape the
    /// design will mask; Masksembles prepares its bank here.
    pub fn build(
        &self,
        kind: DropoutKind,
        params: &DropoutParams,
        shape: &[usize],
    ) -> Result<Box<dyn DropoutDesign>> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.kind == kind)
            .expect("all kinds registered");
        (entry.build)(params, shape)
    }

    pub fn build_by_name(
        &self,
        name: &str,
        params: &DropoutParams,
        shape: &[usize],
    ) -> Result<Box<dyn DropoutDesign>> {
        let entry = self.entries.iter().find(|e| e.name == name).ok_or_else(|| {
            Error::InvalidParam {
                name: "dropout kind",
                message: format!(
                    "unknown design '{name}'; known: {}",
                    self.entries.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
                ),
            }
        })?;
        (entry.build)(params, shape)
    }
}

/// One-shot mask generation without holding a design object. Masksembles
/// builds its bank from `params.seed`.
pub fn gen_mask(
    kind: DropoutKind,
    params: &DropoutParams,
    shape: &[usize],
    t: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Mask> {
    let design = DesignRegistry::builtin().build(kind, params, shape)?;
    design.gen_mask(shape, t, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rng_at(seed: u64) -> ChaCha8Rng {
        stream(seed, 0xdead, 0)
    }

    #[test]
    fn zero_rate_gives_identity_mask_for_every_kind() {
        let shape = [4usize, 6, 6];
        for kind in DropoutKind::ALL {
            let params = DropoutParams::new(0.0).with_seed(9);
            let mask = gen_mask(kind, &params, &shape, 0, &mut rng_at(1)).unwrap();
            assert_eq!(mask.ones(), 4 * 6 * 6, "{kind:?}");
            assert_eq!(mask.scale(), 1.0, "{kind:?}");
        }
    }

    #[test]
    fn rate_one_is_rejected() {
        let params = DropoutParams::new(1.0);
        let err = gen_mask(DropoutKind::Bernoulli, &params, &[8], 0, &mut rng_at(2));
        assert!(matches!(err, Err(Error::InvalidParam { name: "rate", .. })));
        let params = DropoutParams::new(-0.1);
        let err = gen_mask(DropoutKind::Bernoulli, &params, &[8], 0, &mut rng_at(2));
        assert!(err.is_err());
    }

    #[test]
    fn masksembles_cycles_its_bank() {
        let params = DropoutParams { rate: 0.5, block_size: 3, mask_count: 4, seed: 11 };
        let design = Masksembles::new(params, 8).unwrap();
        let shape = [8usize, 4, 4];
        let m1 = design.gen_mask(&shape, 1, &mut rng_at(0)).unwrap();
        let m5 = design.gen_mask(&shape, 5, &mut rng_at(99)).unwrap();
        assert_eq!(m1, m5);
    }

    #[test]
    fn masksembles_is_static_across_calls() {
        let params = DropoutParams { rate: 0.25, block_size: 3, mask_count: 4, seed: 3 };
        let design = Masksembles::new(params, 8).unwrap();
        let shape = [8usize, 3, 3];
        let first = design.gen_mask(&shape, 2, &mut rng_at(0)).unwrap();
        for i in 0..1000u64 {
            let again = design.gen_mask(&shape, 2, &mut rng_at(i)).unwrap();
            assert_eq!(first, again);
        }
    }

    #[test]
    fn block_gamma_matches_hand_evaluation() {
        // rate 0.1, block 3, s 8: 0.1/9 * 64/36
        let gamma = block_gamma(0.1, 3, 8);
        assert!((gamma - 0.019_753_086_419_753_09).abs() < 1e-12);
    }

    #[test]
    fn apply_scales_and_zeroes() {
        let x = Tensor::<f64>::new(vec![3], vec![2.0, 4.0, 6.0]).unwrap();
        let mask = Mask { shape: vec![3], values: vec![1, 0, 1], scale: 1.5 };
        let y = apply(&mask, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0, 9.0]);
    }

    #[test]
    fn apply_identity_under_all_ones() {
        let x = Tensor::<f32>::new(vec![2, 2], vec![1.0, -2.0, 0.5, 9.0]).unwrap();
        let mask = Mask::all_ones(vec![2, 2]);
        assert_eq!(apply(&mask, &x).unwrap(), x);
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let x = Tensor::<f32>::zeros(vec![4]);
        let mask = Mask::all_ones(vec![5]);
        assert!(apply(&mask, &x).is_err());
    }

    #[test]
    fn bank_rate_zero_keeps_everything() {
        let params = DropoutParams { rate: 0.0, block_size: 3, mask_count: 4, seed: 0 };
        let bank = build_mask_bank(&params, 8, 0).unwrap();
        for t in 0..4 {
            assert!(bank.channel_mask(t).iter().all(|&m| m == 1));
        }
    }

    #[test]
    fn bank_keeps_exact_channel_counts() {
        let params = DropoutParams { rate: 0.5, block_size: 3, mask_count: 2, seed: 5 };
        let bank = build_mask_bank(&params, 4, 5).unwrap();
        for t in 0..2 {
            let ones: usize = bank.channel_mask(t).iter().map(|&m| m as usize).sum();
            assert_eq!(ones, 2);
        }
    }

    #[test]
    fn bank_is_deterministic() {
        let params = DropoutParams { rate: 0.25, block_size: 3, mask_count: 4, seed: 77 };
        let a = build_mask_bank(&params, 16, 123).unwrap();
        let b = build_mask_bank(&params, 16, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bank_rejects_too_few_channels() {
        let params = DropoutParams { rate: 0.5, block_size: 3, mask_count: 4, seed: 0 };
        assert!(build_mask_bank(&params, 3, 0).is_err());
    }

    #[test]
    fn bank_coverage_is_balanced_at_defaults() {
        // conv default: rate 0.25 -> keep 6 of 8, 4 masks: 24 = 3 * 8 exactly.
        let params = DropoutParams { rate: 0.25, block_size: 3, mask_count: 4, seed: 0 };
        for seed in 0..32 {
            let bank = build_mask_bank(&params, 8, seed).unwrap();
            let mut coverage = vec![0usize; 8];
            for t in 0..4u64 {
                for (c, &m) in bank.channel_mask(t).iter().enumerate() {
                    coverage[c] += m as usize;
                }
            }
            assert!(coverage.iter().all(|&n| n == 3), "seed {seed}: {coverage:?}");
        }
    }

    #[test]
    fn block_zeros_reconstruct_from_seeds() {
        let params = DropoutParams { rate: 0.3, block_size: 3, mask_count: 4, seed: 0 };
        let design = BlockDropout::new(params).unwrap();
        let shape = [2usize, 8, 8];
        let mut rng = rng_at(42);
        for _ in 0..20 {
            let (values, seeds) = design.sample_with_seeds(&shape, &mut rng).unwrap();
            let mut expect = vec![1u8; 2 * 8 * 8];
            for (c, r, q) in seeds {
                for i in 0..3 {
                    for j in 0..3 {
                        let rr = (r + 8 + i - 1) % 8;
                        let qq = (q + 8 + j - 1) % 8;
                        expect[c * 64 + rr * 8 + qq] = 0;
                    }
                }
            }
            assert_eq!(values, expect);
        }
    }

    #[test]
    fn block_rejects_oversized_blocks() {
        let params = DropoutParams { rate: 0.2, block_size: 5, mask_count: 4, seed: 0 };
        let design = BlockDropout::new(params).unwrap();
        assert!(design.gen_mask(&[2, 4, 4], 0, &mut rng_at(0)).is_err());
    }

    #[test]
    fn block_even_size_rejected() {
        let params = DropoutParams { rate: 0.2, block_size: 2, mask_count: 4, seed: 0 };
        assert!(BlockDropout::new(params).is_err());
    }

    #[test]
    fn degenerate_rate_errors_after_redraw_budget() {
        // At rate 0.9999 on 4 elements nearly every draw is all-zero; with
        // this fixed stream the retry budget runs out.
        let params = DropoutParams::new(0.9999);
        let err = gen_mask(DropoutKind::Bernoulli, &params, &[4], 0, &mut rng_at(7));
        assert!(matches!(err, Err(Error::DegenerateRate { .. })));
    }

    #[test]
    fn granularity_ordering_of_random_decisions() {
        let shape = [8usize, 8, 8];
        let p = DropoutParams::new(0.25).with_seed(1);
        let bern = BernoulliDropout::new(p).unwrap();
        let block = BlockDropout::new(p).unwrap();
        let chan = RandomChannelDropout::new(p).unwrap();
        let mask = Masksembles::new(p, 8).unwrap();
        let b = bern.random_decisions(&shape);
        let k = block.random_decisions(&shape);
        let r = chan.random_decisions(&shape);
        let m = mask.random_decisions(&shape);
        assert!(b > k, "bernoulli {b} vs block {k}");
        assert!(k > r, "block {k} vs channel {r}");
        assert!(r > m, "channel {r} vs masksembles {m}");
        assert_eq!(m, 0.0);
    }

    #[test]
    fn registry_resolves_names_and_letters() {
        let reg = DesignRegistry::builtin();
        assert_eq!(reg.entries().len(), 4);
        for entry in reg.entries() {
            assert_eq!(DropoutKind::from_name(entry.name), Some(entry.kind));
            assert_eq!(DropoutKind::from_letter(entry.letter), Some(entry.kind));
        }
        let p = DropoutParams::new(0.1);
        let d = reg.build_by_name("block", &p, &[2, 6, 6]).unwrap();
        assert_eq!(d.kind(), DropoutKind::Block);
        assert!(reg.build_by_name("swish", &p, &[2, 6, 6]).is_err());
    }

    #[test]
    fn empirical_drop_rate_tracks_p() {
        let params = DropoutParams::new(0.5);
        let design = BernoulliDropout::new(params).unwrap();
        let mut rng = rng_at(31);
        let mut zeros = 0usize;
        let mut total = 0usize;
        for _ in 0..100 {
            let mask = design.gen_mask(&[10_000], 0, &mut rng).unwrap();
            zeros += mask.values().iter().filter(|&&v| v == 0).count();
            total += mask.values().len();
        }
        let rate = zeros as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.002, "empirical rate {rate}");
    }
}
