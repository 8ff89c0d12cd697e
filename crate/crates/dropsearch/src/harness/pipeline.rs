//! Command implementations behind the CLI: train, latency-fit, search,
//! enumerate, and single-genome eval. Each command reads everything it needs
//! from the run config plus explicit artifact paths, so commands compose as
//! independent processes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evosearch::{self, aim_score, CandidateRecord, Evaluator, SearchOutcome};
use crate::harness::checkpoint::{self, CheckpointManifest};
use crate::harness::config::{RunConfig, VALIDATION_FRACTION};
use crate::harness::idx;
use crate::harness::report;
use crate::hwmodel::{
    self, build_dataset, genome_latency, quantize_q7_8, GpModel, LatencyBackend,
};
use crate::metrics::{self, EvalMetrics, FeatureStats};
use crate::nn::Parameters;
use crate::rng::{self, tag};
use crate::supernet::{self, GenomeConfig, SupernetSpec, TrainReport};
use crate::tensor::Tensor;

/// Artifact file names under the run's output directory.
pub struct ArtifactPaths {
    out_dir: PathBuf,
}

impl ArtifactPaths {
    pub fn new(out_dir: &Path) -> ArtifactPaths {
        ArtifactPaths { out_dir: out_dir.to_path_buf() }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.out_dir.join("checkpoint.json")
    }

    pub fn train_report(&self) -> PathBuf {
        self.out_dir.join("train_report.json")
    }

    pub fn gp_model(&self) -> PathBuf {
        self.out_dir.join("gp_model.json")
    }

    pub fn gp_fit_report(&self) -> PathBuf {
        self.out_dir.join("gp_fit_report.json")
    }

    pub fn latency_dataset(&self) -> PathBuf {
        self.out_dir.join("latency_dataset.csv")
    }

    pub fn search_history(&self) -> PathBuf {
        self.out_dir.join("search_history.csv")
    }

    pub fn search_best(&self) -> PathBuf {
        self.out_dir.join("search_best.json")
    }

    pub fn search_pareto(&self) -> PathBuf {
        self.out_dir.join("search_pareto.csv")
    }

    pub fn enumerate_csv(&self) -> PathBuf {
        self.out_dir.join("enumerate.csv")
    }

    pub fn enumerate_pareto(&self) -> PathBuf {
        self.out_dir.join("enumerate_pareto.csv")
    }
}

/// Loads the training IDX pair, applying the config's `train_limit`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<(Tensor<f32>, usize)>> {
    let mut data = idx::load_idx(&cfg.paths.train_images, &cfg.paths.train_labels)?;
    if let Some(limit) = cfg.training.train_limit {
        data.truncate(limit);
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    Ok(data)
}

/// Seeded shuffle, then a 10% validation holdout (at least one sample each).
pub fn split_train_val(
    mut data: Vec<(Tensor<f32>, usize)>,
    seed: u64,
) -> (Vec<(Tensor<f32>, usize)>, Vec<(Tensor<f32>, usize)>) {
    use rand::seq::SliceRandom;
    let mut rng = rng::stream(seed, tag::SPLIT, 0);
    data.shuffle(&mut rng);
    let val_len = ((data.len() as f64 * VALIDATION_FRACTION).round() as usize)
        .clamp(1, data.len().saturating_sub(1).max(1));
    let train = data.split_off(val_len);
    (train, data)
}

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub manifest: CheckpointManifest,
    pub report: TrainReport,
}

/// Phase 2: trains the supernet on the train split and persists the
/// checkpoint plus a JSON train report.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    let spec = cfg.supernet()?;
    let data = load_dataset(cfg)?;
    let (train, _val) = split_train_val(data, cfg.seeds.train);
    let (params, report) = supernet::train_supernet(&spec, &train, &cfg.train_hyper(), cfg.seeds.train)?;

    let paths = ArtifactPaths::new(&cfg.paths.out_dir);
    std::fs::create_dir_all(paths.out_dir()).map_err(|e| Error::io(paths.out_dir(), e))?;
    let manifest = checkpoint::save_checkpoint(
        &paths.checkpoint(),
        &cfg.spec_hash()?,
        cfg.seeds.train,
        cfg.training.epochs,
        &params,
    )?;
    hwmodel::write_json(&paths.train_report(), &report)?;
    Ok(TrainArtifacts { checkpoint_path: paths.checkpoint(), manifest, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct GpFitReport {
    pub rows: usize,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    pub loo_rmse: f64,
}

pub struct FitArtifacts {
    pub model_path: PathBuf,
    pub model: GpModel,
    pub report: GpFitReport,
}

/// Phase 4a: builds the latency dataset over the supernet's slot shapes plus
/// the config grid, fits the GP surrogate, and persists model + fit report +
/// the dataset CSV.
pub fn cmd_latency_fit(cfg: &RunConfig) -> Result<FitArtifacts> {
    let spec = cfg.supernet()?;
    let dataset = build_dataset(&spec, &cfg.latency.calibration, &cfg.grid_shapes(), cfg.latency.clock_mhz)?;
    let model = hwmodel::fit_surrogate(&dataset, None)?;
    let report = GpFitReport {
        rows: dataset.len(),
        lengthscale: model.lengthscale,
        signal_var: model.signal_var,
        noise_var: model.noise_var,
        jitter: model.jitter,
        log_marginal_likelihood: model.log_marginal_likelihood,
        loo_rmse: model.loo_rmse(),
    };
    let paths = ArtifactPaths::new(&cfg.paths.out_dir);
    std::fs::create_dir_all(paths.out_dir()).map_err(|e| Error::io(paths.out_dir(), e))?;
    hwmodel::write_json(&paths.gp_model(), &model)?;
    hwmodel::write_json(&paths.gp_fit_report(), &report)?;
    dataset.write_csv(&paths.latency_dataset())?;
    Ok(FitArtifacts { model_path: paths.gp_model(), model, report })
}

/// Loads a persisted GP model and rebuilds its solver state.
pub fn load_gp(path: &Path) -> Result<GpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut model: GpModel = serde_json::from_str(&text).map_err(|e| Error::Config {
        message: format!("{}: {e}", path.display()),
    })?;
    model.rebuild()?;
    Ok(model)
}

/// Loads a checkpoint and rejects it when its supernet hash differs from the
/// config's.
pub fn load_checked_checkpoint(
    cfg: &RunConfig,
    path: &Path,
) -> Result<(CheckpointManifest, Parameters<f32>)> {
    let (manifest, params) = checkpoint::load_checkpoint(path)?;
    let expected = cfg.spec_hash()?;
    if manifest.spec_hash != expected {
        return Err(Error::SpecHashMismatch { expected, got: manifest.spec_hash });
    }
    Ok((manifest, params))
}

/// Shared-weight genome evaluator: MC prediction on the validation split for
/// accuracy/ECE, matched Gaussian noise for aPE, and the latency backend for
/// the hardware term. Per-sample RNG streams derive from
/// `(eval_seed, genome id, sample index)`, so results are independent of
/// evaluation order; results cache by genome.
pub struct PipelineEvaluator<'a> {
    spec: &'a SupernetSpec,
    params: Parameters<f32>,
    val: Vec<(Tensor<f32>, usize)>,
    ood: Vec<Tensor<f32>>,
    mc_samples: usize,
    ece_bins: usize,
    eval_seed: u64,
    quantized: bool,
    backend: LatencyBackend<'a>,
    cache: BTreeMap<Vec<usize>, EvalMetrics>,
}

const OOD_STREAM_BIT: u64 = 1 << 63;

impl<'a> PipelineEvaluator<'a> {
    pub fn from_config(
        cfg: &RunConfig,
        spec: &'a SupernetSpec,
        params: Parameters<f32>,
        backend: LatencyBackend<'a>,
        quantized: bool,
    ) -> Result<PipelineEvaluator<'a>> {
        let data = load_dataset(cfg)?;
        let (train, val) = split_train_val(data, cfg.seeds.train);
        let stats = FeatureStats::from_dataset(&train)?;
        let shape = stats.shape.clone();
        let ood = metrics::make_ood::<f32>(&stats, cfg.evaluation.ood_samples, &shape, cfg.seeds.ood)?;
        let params = if quantized { quantize_params(&params) } else { params };
        Ok(PipelineEvaluator {
            spec,
            params,
            val,
            ood,
            mc_samples: cfg.evaluation.mc_samples,
            ece_bins: cfg.evaluation.ece_bins,
            eval_seed: cfg.seeds.eval,
            quantized,
            backend,
            cache: BTreeMap::new(),
        })
    }

    pub fn validation_len(&self) -> usize {
        self.val.len()
    }

    fn predict(
        &self,
        genome: &GenomeConfig,
        x: &Tensor<f32>,
        stream_index: u64,
    ) -> Result<metrics::PredictiveDist> {
        let mut rng = rng::stream(self.eval_seed, genome.id(), stream_index);
        if self.quantized {
            let xq = quantize_q7_8(x);
            let hook = |t: &mut Tensor<f32>| *t = quantize_q7_8(t);
            metrics::mc_predict_with_hook(
                self.spec,
                &self.params,
                genome,
                &xq,
                self.mc_samples,
                &mut rng,
                Some(&hook),
            )
        } else {
            metrics::mc_predict(self.spec, &self.params, genome, x, self.mc_samples, &mut rng)
        }
    }

    fn evaluate_uncached(&self, genome: &GenomeConfig) -> Result<EvalMetrics> {
        self.spec.check_genome(genome)?;
        let mut dists = Vec::with_capacity(self.val.len());
        for (i, (x, _)) in self.val.iter().enumerate() {
            dists.push(self.predict(genome, x, i as u64)?);
        }
        let labels: Vec<usize> = self.val.iter().map(|(_, l)| *l).collect();
        let accuracy_pct = metrics::accuracy(&dists, &labels)?;
        let ece_pct = metrics::ece(&dists, &labels, self.ece_bins)?;

        let mut ood_dists = Vec::with_capacity(self.ood.len());
        for (i, x) in self.ood.iter().enumerate() {
            ood_dists.push(self.predict(genome, x, OOD_STREAM_BIT | i as u64)?);
        }
        let ape_nats = metrics::ape(&ood_dists)?;
        let latency_ms = genome_latency(self.spec, genome, &self.backend)?;
        Ok(EvalMetrics { accuracy_pct, ece_pct, ape_nats, latency_ms })
    }
}

impl Evaluator for PipelineEvaluator<'_> {
    fn evaluate(&mut self, genome: &GenomeConfig) -> Result<EvalMetrics> {
        if let Some(m) = self.cache.get(&genome.choices) {
            return Ok(*m);
        }
        let m = self.evaluate_uncached(genome)?;
        self.cache.insert(genome.choices.clone(), m);
        Ok(m)
    }
}

fn quantize_params(params: &Parameters<f32>) -> Parameters<f32> {
    let mut out = params.clone();
    let keys: Vec<usize> = params.iter().map(|(k, _)| k).collect();
    for key in keys {
        let lp = out.get_mut(key).expect("cloned keys");
        lp.weight = quantize_q7_8(&lp.weight);
        lp.bias = quantize_q7_8(&lp.bias);
    }
    out
}

#[derive(Debug, Serialize)]
struct BestJson<'a> {
    genome: String,
    letters: String,
    metrics: &'a EvalMetrics,
    aim: f64,
    aim_weights: &'a crate::evosearch::AimWeights,
}

pub struct SearchArtifacts {
    pub outcome: SearchOutcome,
    pub best_letters: String,
    pub history_path: PathBuf,
    pub best_path: PathBuf,
    pub pareto_path: PathBuf,
}

/// Phase 3: evolutionary search against the trained checkpoint and the GP
/// surrogate. Emits the full history CSV, the best-genome JSON, and the
/// Pareto CSV.
pub fn cmd_search(cfg: &RunConfig, checkpoint_path: &Path, gp_path: &Path) -> Result<SearchArtifacts> {
    let spec = cfg.supernet()?;
    let (_manifest, params) = load_checked_checkpoint(cfg, checkpoint_path)?;
    let model = load_gp(gp_path)?;
    let backend = LatencyBackend::Surrogate {
        model: &model,
        calib: &cfg.latency.calibration,
        clock_mhz: cfg.latency.clock_mhz,
    };
    let mut evaluator = PipelineEvaluator::from_config(cfg, &spec, params, backend, false)?;
    let outcome = evosearch::search(&spec, &mut evaluator, &cfg.aim_weights, &cfg.ea_params())?;

    let paths = ArtifactPaths::new(&cfg.paths.out_dir);
    std::fs::create_dir_all(paths.out_dir()).map_err(|e| Error::io(paths.out_dir(), e))?;
    let rows = report::rows_with_pareto_flags(&spec, &outcome.history, &outcome.pareto)?;
    report::write_report_csv(&paths.search_history(), &rows)?;
    let pareto_rows = report::rows_with_pareto_flags(&spec, &outcome.pareto, &outcome.pareto)?;
    report::write_report_csv(&paths.search_pareto(), &pareto_rows)?;

    let best_letters = report::letters(&spec, &outcome.best.genome)?;
    hwmodel::write_json(
        &paths.search_best(),
        &BestJson {
            genome: outcome.best.genome.key(),
            letters: best_letters.clone(),
            metrics: &outcome.best.metrics,
            aim: outcome.best.aim,
            aim_weights: &cfg.aim_weights,
        },
    )?;
    Ok(SearchArtifacts {
        outcome,
        best_letters,
        history_path: paths.search_history(),
        best_path: paths.search_best(),
        pareto_path: paths.search_pareto(),
    })
}

pub struct EnumerateArtifacts {
    pub records: Vec<CandidateRecord>,
    pub pareto: Vec<CandidateRecord>,
    pub csv_path: PathBuf,
    pub pareto_path: PathBuf,
}

/// Exhaustive reference evaluation of every genome (lexicographic order),
/// plus the reference Pareto front. Refuses spaces beyond the configured cap.
pub fn cmd_enumerate(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    gp_path: &Path,
) -> Result<EnumerateArtifacts> {
    let spec = cfg.supernet()?;
    let size = spec.space_size();
    if size > cfg.evaluation.enumerate_cap {
        return Err(Error::SpaceCap { size, cap: cfg.evaluation.enumerate_cap });
    }
    let (_manifest, params) = load_checked_checkpoint(cfg, checkpoint_path)?;
    let model = load_gp(gp_path)?;
    let backend = LatencyBackend::Surrogate {
        model: &model,
        calib: &cfg.latency.calibration,
        clock_mhz: cfg.latency.clock_mhz,
    };
    let mut evaluator = PipelineEvaluator::from_config(cfg, &spec, params, backend, false)?;

    let mut records = Vec::new();
    for genome in spec.enumerate_genomes() {
        let metrics = evaluator.evaluate(&genome).map_err(|e| Error::Evaluation {
            genome: genome.key(),
            message: e.to_string(),
        })?;
        records.push(CandidateRecord { genome, aim: aim_score(&metrics, &cfg.aim_weights), metrics });
    }
    let pareto = evosearch::pareto_front(&records)?;

    let paths = ArtifactPaths::new(&cfg.paths.out_dir);
    std::fs::create_dir_all(paths.out_dir()).map_err(|e| Error::io(paths.out_dir(), e))?;
    let rows = report::rows_with_pareto_flags(&spec, &records, &pareto)?;
    report::write_report_csv(&paths.enumerate_csv(), &rows)?;
    let pareto_rows = report::rows_with_pareto_flags(&spec, &pareto, &pareto)?;
    report::write_report_csv(&paths.enumerate_pareto(), &pareto_rows)?;
    Ok(EnumerateArtifacts {
        records,
        pareto,
        csv_path: paths.enumerate_csv(),
        pareto_path: paths.enumerate_pareto(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub genome: String,
    pub letters: String,
    pub metrics: EvalMetrics,
    pub aim: f64,
    pub quantized: bool,
}

/// Evaluates one letter-coded genome. Without a GP model path the latency
/// term comes from the analytic oracle; `quantized` switches the forward
/// passes to Q7.8 weights and activations.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    gp_path: Option<&Path>,
    code: &str,
    quantized: bool,
) -> Result<EvalOutput> {
    let spec = cfg.supernet()?;
    let genome = report::parse_letters(&spec, code)?;
    let (_manifest, params) = load_checked_checkpoint(cfg, checkpoint_path)?;
    let model = match gp_path {
        Some(path) => Some(load_gp(path)?),
        None => None,
    };
    let backend = match &model {
        Some(model) => LatencyBackend::Surrogate {
            model,
            calib: &cfg.latency.calibration,
            clock_mhz: cfg.latency.clock_mhz,
        },
        None => LatencyBackend::Oracle {
            calib: &cfg.latency.calibration,
            clock_mhz: cfg.latency.clock_mhz,
        },
    };
    let mut evaluator = PipelineEvaluator::from_config(cfg, &spec, params, backend, quantized)?;
    let metrics = evaluator.evaluate(&genome)?;
    Ok(EvalOutput {
        genome: genome.key(),
        letters: report::letters(&spec, &genome)?,
        metrics,
        aim: aim_score(&metrics, &cfg.aim_weights),
        quantized,
    })
}
