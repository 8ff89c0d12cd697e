//! Monte-Carlo predictive inference and the algorithmic metrics of the
//! search objective: accuracy (%), expected calibration error (%), and
//! average prediction entropy (nats) on out-of-distribution inputs.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Parameters};
use crate::rng::{self, tag};
use crate::supernet::{self, GenomeConfig, SupernetSpec};
use crate::tensor::{Real, Tensor};

/// Mean of T per-pass softmax outputs for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDist {
    probs: Vec<f64>,
    samples: usize,
}

impl PredictiveDist {
    pub fn new(probs: Vec<f64>, samples: usize) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
            return Err(Error::InvalidParam {
                name: "probs",
                message: format!("not a probability vector: {probs:?}"),
            });
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam {
                name: "probs",
                message: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        Ok(PredictiveDist { probs, samples })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    /// Max probability; the confidence used for calibration binning.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax class; ties break toward the lowest index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats, with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum()
    }
}

/// The four terms of the search aim for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy_pct: f64,
    pub ece_pct: f64,
    pub ape_nats: f64,
    pub latency_ms: f64,
}

/// Averages `t_samples` stochastic forward passes into one predictive
/// distribution. Pass index `t` feeds the Masksembles bank cycle; dynamic
/// slots draw fresh masks from `rng` each pass.
pub fn mc_predict<T: Real>(
    spec: &SupernetSpec,
    params: &Parameters<T>,
    genome: &GenomeConfig,
    x: &Tensor<T>,
    t_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PredictiveDist> {
    mc_predict_with_hook(spec, params, genome, x, t_samples, rng, None)
}

/// `mc_predict` with a per-layer output hook (fixed-point evaluation mode).
pub fn mc_predict_with_hook<T: Real>(
    spec: &SupernetSpec,
    params: &Parameters<T>,
    genome: &GenomeConfig,
    x: &Tensor<T>,
    t_samples: usize,
    rng: &mut ChaCha8Rng,
    hook: Option<&dyn Fn(&mut Tensor<T>)>,
) -> Result<PredictiveDist> {
    if t_samples == 0 {
        return Err(Error::InvalidParam {
            name: "mc_samples",
            message: "need at least one Monte-Carlo sample".into(),
        });
    }
    let classes = spec.backbone.class_count()?;
    let mut acc = vec![0.0f64; classes];
    for t in 0..t_samples {
        let masks = supernet::activate(spec, genome, t as u64, rng)?;
        let acts = nn::forward_with_hook(&spec.backbone, params, x, Some(&masks), hook)?;
        let probs = nn::softmax_f64(acts.last().expect("non-empty network"));
        for (a, p) in acc.iter_mut().zip(probs.iter()) {
            *a += p;
        }
    }
    for a in acc.iter_mut() {
        *a /= t_samples as f64;
    }
    PredictiveDist::new(acc, t_samples)
}

/// Percentage of samples whose argmax matches the label.
pub fn accuracy(dists: &[PredictiveDist], labels: &[usize]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    if dists.len() != labels.len() {
        return Err(Error::InvalidParam {
            name: "labels",
            message: format!("{} predictions vs {} labels", dists.len(), labels.len()),
        });
    }
    let correct = dists
        .iter()
        .zip(labels.iter())
        .filter(|(d, &l)| d.predicted_class() == l)
        .count();
    Ok(100.0 * correct as f64 / dists.len() as f64)
}

/// Bin index for a confidence under equal-width binning: bin b covers
/// (b/B, (b+1)/B], with c = 0 assigned to bin 0.
pub fn ece_bin(confidence: f64, bins: usize) -> usize {
    for b in 0..bins {
        if confidence <= (b + 1) as f64 / bins as f64 {
            return b;
        }
    }
    bins - 1
}

/// Expected calibration error in percent over `bins` equal-width bins.
pub fn ece(dists: &[PredictiveDist], labels: &[usize], bins: usize) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    if dists.len() != labels.len() {
        return Err(Error::InvalidParam {
            name: "labels",
            message: format!("{} predictions vs {} labels", dists.len(), labels.len()),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidParam {
            name: "ece_bins",
            message: "need at least one bin".into(),
        });
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut acc_sum = vec![0.0f64; bins];
    for (d, &l) in dists.iter().zip(labels.iter()) {
        let c = d.confidence();
        let b = ece_bin(c, bins);
        count[b] += 1;
        conf_sum[b] += c;
        if d.predicted_class() == l {
            acc_sum[b] += 1.0;
        }
    }
    let n = dists.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let nb = count[b] as f64;
        total += nb / n * (acc_sum[b] / nb - conf_sum[b] / nb).abs();
    }
    Ok(100.0 * total)
}

/// Mean entropy of the predictive distributions, in nats.
pub fn ape(dists: &[PredictiveDist]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    Ok(dists.iter().map(PredictiveDist::entropy).sum::<f64>() / dists.len() as f64)
}

/// Per-feature mean and standard deviation of a dataset, used to synthesise
/// matched Gaussian-noise OOD inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub shape: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_dataset<T: Real>(data: &[(Tensor<T>, usize)]) -> Result<Self> {
        let (first, _) = data.first().ok_or(Error::EmptyInput("dataset"))?;
        let shape = first.shape().to_vec();
        let features = first.len();
        let mut mean = vec![0.0f64; features];
        let mut sq = vec![0.0f64; features];
        for (x, _) in data {
            if x.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    context: "feature statistics",
                    expected: shape,
                    got: x.shape().to_vec(),
                });
            }
            for (i, v) in x.data().iter().enumerate() {
                let v = v.to_f64().expect("finite");
                mean[i] += v;
                sq[i] += v * v;
            }
        }
        let n = data.len() as f64;
        for i in 0..features {
            mean[i] /= n;
            sq[i] = (sq[i] / n - mean[i] * mean[i]).max(0.0).sqrt();
        }
        Ok(FeatureStats { shape, mean, std: sq })
    }
}

/// `n` tensors of i.i.d. Gaussian draws with the dataset's per-feature mean
/// and std. Deterministic in `seed`.
pub fn make_ood<T: Real>(
    stats: &FeatureStats,
    n: usize,
    shape: &[usize],
    seed: u64,
) -> Result<Vec<Tensor<T>>> {
    if shape != stats.shape.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "ood generation",
            expected: stats.shape.clone(),
            got: shape.to_vec(),
        });
    }
    if stats.std.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParam {
            name: "std",
            message: "feature std must be non-negative and finite".into(),
        });
    }
    let mut rng = rng::stream(seed, tag::OOD, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let data: Vec<f64> = stats
            .mean
            .iter()
            .zip(stats.std.iter())
            .map(|(&m, &s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + s * z
            })
            .collect();
        out.push(Tensor::from_f64_slice(shape.to_vec(), &data)?);
    }
    Ok(out)
}
