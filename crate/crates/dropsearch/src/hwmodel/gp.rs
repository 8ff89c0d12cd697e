//! Gaussian-process latency surrogate: Matérn-5/2 kernel, constant mean,
//! exact inference through a Cholesky factor, hyperparameters chosen by grid
//! search on the log marginal likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matérn kernel with smoothness 5/2 on a Euclidean distance `r`.
pub fn matern52(r: f64, lengthscale: f64, signal_var: f64) -> f64 {
    let z = 5.0f64.sqrt() * r / lengthscale;
    signal_var * (1.0 + z + z * z / 3.0) * (-z).exp()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-dimension z-score standardization fitted on the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let dims = rows.first().map(Vec::len).unwrap_or(0);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        let mut sq = vec![0.0; dims];
        for row in rows {
            for (d, &v) in row.iter().enumerate() {
                mean[d] += v;
                sq[d] += v * v;
            }
        }
        for d in 0..dims {
            mean[d] /= n;
            let var = (sq[d] / n - mean[d] * mean[d]).max(0.0);
            let s = var.sqrt();
            sq[d] = if s > 0.0 { s } else { 1.0 };
        }
        Standardizer { mean, std: sq }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

/// Candidate hyperparameter lists for the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lengthscales: Vec<f64>,
    pub signal_vars: Vec<f64>,
    pub noise_vars: Vec<f64>,
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

impl HyperGrid {
    /// Default grid scaled to the target variance: lengthscales log-spaced in
    /// [0.1, 10], signal variances in [0.1, 10] x var(y), noise variances in
    /// [1e-8, 1e-2] x var(y).
    pub fn default_for(y_var: f64) -> HyperGrid {
        let y_var = if y_var > 0.0 { y_var } else { 1.0 };
        HyperGrid {
            lengthscales: log_spaced(0.1, 10.0, 7),
            signal_vars: log_spaced(0.1, 10.0, 7).into_iter().map(|g| g * y_var).collect(),
            noise_vars: log_spaced(1e-8, 1e-2, 7).into_iter().map(|g| g * y_var).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = !self.lengthscales.is_empty()
            && !self.signal_vars.is_empty()
            && !self.noise_vars.is_empty()
            && self.lengthscales.iter().all(|&l| l > 0.0)
            && self.signal_vars.iter().all(|&s| s > 0.0)
            && self.noise_vars.iter().all(|&s| s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam {
                name: "hyper_grid",
                message: "grids must be non-empty with positive lengthscales/signal variances".into(),
            })
        }
    }
}

/// Fitted GP. `x` holds standardized features; the Cholesky factor is
/// rebuilt deterministically after deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModel {
    pub mean: f64,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    pub standardizer: Standardizer,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(skip)]
    chol: Vec<Vec<f64>>,
}

fn kernel_matrix(x: &[Vec<f64>], lengthscale: f64, signal_var: f64, diag_add: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(euclidean(&x[i], &x[j]), lengthscale, signal_var);
            k[i][j] = v;
            k[j][i] = v;
        }
        k[i][i] += diag_add;
    }
    k
}

/// Lower-triangular Cholesky factor; `None` when the matrix is not positive
/// definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for j in 0..i {
            sum -= l[i][j] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    x
}

fn solve_upper_t(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    // solves L^T x = b
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for j in i + 1..n {
            sum -= l[j][i] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    x
}

struct FitCandidate {
    lengthscale: f64,
    signal_var: f64,
    noise_var: f64,
    jitter: f64,
    lml: f64,
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

fn fit_candidate(
    x: &[Vec<f64>],
    centered: &[f64],
    lengthscale: f64,
    signal_var: f64,
    noise_var: f64,
) -> Result<FitCandidate> {
    let n = x.len();
    let mut jitter = 0.0;
    let mut attempt = 0;
    let chol = loop {
        let k = kernel_matrix(x, lengthscale, signal_var, noise_var + jitter);
        match cholesky(&k) {
            Some(l) => break l,
            None if attempt < 3 => {
                jitter = if jitter == 0.0 { 1e-6 * signal_var } else { jitter * 10.0 };
                attempt += 1;
            }
            None => {
                return Err(Error::GpFit {
                    message: format!(
                        "kernel matrix not positive definite at lengthscale {lengthscale}, signal {signal_var}, noise {noise_var} after max jitter"
                    ),
                })
            }
        }
    };
    let alpha = solve_upper_t(&chol, &solve_lower(&chol, centered));
    let data_term: f64 = centered.iter().zip(alpha.iter()).map(|(t, a)| t * a).sum();
    let log_det: f64 = (0..n).map(|i| chol[i][i].ln()).sum();
    let lml = -0.5 * data_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(FitCandidate { lengthscale, signal_var, noise_var, jitter, lml, chol, alpha })
}

/// Fits the GP: constant mean = mean(y), hyperparameters chosen from the grid
/// by exact log marginal likelihood (ties resolve to the smallest
/// lengthscale).
pub fn gp_fit(features: &[Vec<f64>], targets: &[f64], grid: &HyperGrid) -> Result<GpModel> {
    if features.len() < 2 || features.len() != targets.len() {
        return Err(Error::InvalidParam {
            name: "gp_dataset",
            message: format!(
                "need at least 2 rows with matching targets, got {} features / {} targets",
                features.len(),
                targets.len()
            ),
        });
    }
    grid.validate()?;
    let standardizer = Standardizer::fit(features);
    let x: Vec<Vec<f64>> = features.iter().map(|f| standardizer.apply(f)).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let centered: Vec<f64> = targets.iter().map(|y| y - mean).collect();

    let mut best: Option<FitCandidate> = None;
    for &lengthscale in &grid.lengthscales {
        for &signal_var in &grid.signal_vars {
            for &noise_var in &grid.noise_vars {
                let cand = fit_candidate(&x, &centered, lengthscale, signal_var, noise_var)?;
                let better = match &best {
                    None => true,
                    Some(b) => cand.lml > b.lml,
                };
                if better {
                    best = Some(cand);
                }
            }
        }
    }
    let best = best.expect("grid validated non-empty");
    Ok(GpModel {
        mean,
        lengthscale: best.lengthscale,
        signal_var: best.signal_var,
        noise_var: best.noise_var,
        jitter: best.jitter,
        log_marginal_likelihood: best.lml,
        standardizer,
        x,
        y: targets.to_vec(),
        alpha: best.alpha,
        chol: best.chol,
    })
}

impl GpModel {
    /// Rebuilds the Cholesky factor after deserialization. Uses the stored
    /// jitter, so a reloaded model predicts identically.
    pub fn rebuild(&mut self) -> Result<()> {
        let k = kernel_matrix(&self.x, self.lengthscale, self.signal_var, self.noise_var + self.jitter);
        self.chol = cholesky(&k).ok_or_else(|| Error::GpFit {
            message: "stored model's kernel matrix is not positive definite".into(),
        })?;
        Ok(())
    }

    /// Posterior mean and variance at raw (unstandardized) features.
    pub fn predict(&self, raw_features: &[f64]) -> (f64, f64) {
        let q = self.standardizer.apply(raw_features);
        let k_star: Vec<f64> = self
            .x
            .iter()
            .map(|xi| matern52(euclidean(&q, xi), self.lengthscale, self.signal_var))
            .collect();
        let mean = self.mean
            + k_star
                .iter()
                .zip(self.alpha.iter())
                .map(|(k, a)| k * a)
                .sum::<f64>();
        let v = solve_lower(&self.chol, &k_star);
        let var = matern52(0.0, self.lengthscale, self.signal_var) - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Leave-one-out RMSE at the fitted hyperparameters, from the closed-form
    /// identity `residual_i = alpha_i / (K^-1)_(ii)`.
    pub fn loo_rmse(&self) -> f64 {
        let n = self.x.len();
        let mut sq = 0.0;
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let col = solve_upper_t(&self.chol, &solve_lower(&self.chol, &e));
            let kinv_ii = col[i];
            let r = self.alpha[i] / kinv_ii;
            sq += r * r;
        }
        (sq / n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_rows(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = crate::rng::stream(seed, 0xa1, 0);
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen::<f64>() * 4.0, rng.gen::<f64>() * 2.0 - 1.0])
            .collect();
        let targets: Vec<f64> = features
            .iter()
            .map(|f| (f[0] * 0.7).sin() + 0.3 * f[1] + 2.0)
            .collect();
        (features, targets)
    }

    fn tight_grid() -> HyperGrid {
        HyperGrid {
            lengthscales: vec![0.5, 1.0, 2.0],
            signal_vars: vec![0.5, 1.0, 2.0],
            noise_vars: vec![1e-8],
        }
    }

    #[test]
    fn kernel_is_symmetric_with_signal_variance_diagonal() {
        let mut rng = crate::rng::stream(4, 0xa2, 0);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 10.0).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 10.0).collect();
            let r = euclidean(&a, &b);
            assert_eq!(matern52(r, 1.3, 2.1), matern52(euclidean(&b, &a), 1.3, 2.1));
        }
        assert_eq!(matern52(0.0, 0.7, 3.25), 3.25);
    }

    #[test]
    fn gram_matrices_are_positive_semidefinite() {
        // Cholesky of K + 1e-8 I succeeding bounds the smallest eigenvalue
        // below by -1e-8.
        let mut rng = crate::rng::stream(6, 0xa3, 0);
        for trial in 0..20 {
            let x: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..4).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect())
                .collect();
            let mut k = kernel_matrix(&x, 1.0, 1.0, 0.0);
            for i in 0..k.len() {
                k[i][i] += 1e-8;
            }
            assert!(cholesky(&k).is_some(), "trial {trial}");
        }
    }

    #[test]
    fn noise_free_fit_interpolates_training_targets() {
        let (features, targets) = toy_rows(14, 9);
        let model = gp_fit(&features, &targets, &tight_grid()).unwrap();
        for (f, y) in features.iter().zip(targets.iter()) {
            let (mean, var) = model.predict(f);
            assert!(
                (mean - y).abs() <= 1e-4 * y.abs().max(1e-9),
                "predicted {mean}, target {y}"
            );
            assert!(var >= 0.0 && var < 1e-4);
        }
    }

    #[test]
    fn far_queries_revert_to_the_constant_mean() {
        let features = vec![vec![0.0, 0.0], vec![0.1, 0.0]];
        let targets = vec![3.0, 3.0];
        let model = gp_fit(&features, &targets, &tight_grid()).unwrap();
        let (mean, var) = model.predict(&[1e6, 1e6]);
        assert!((mean - 3.0).abs() < 1e-9);
        assert!((var - model.signal_var).abs() < 1e-9);
    }

    #[test]
    fn variance_is_never_negative() {
        let (features, targets) = toy_rows(10, 2);
        let model = gp_fit(&features, &targets, &tight_grid()).unwrap();
        let mut rng = crate::rng::stream(8, 0xa4, 0);
        for _ in 0..1000 {
            let q = vec![rng.gen::<f64>() * 8.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
            let (_, var) = model.predict(&q);
            assert!(var >= 0.0);
        }
    }

    #[test]
    fn serialized_model_predicts_identically() {
        let (features, targets) = toy_rows(12, 5);
        let model = gp_fit(&features, &targets, &tight_grid()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let mut reloaded: GpModel = serde_json::from_str(&json).unwrap();
        reloaded.rebuild().unwrap();
        let mut rng = crate::rng::stream(1, 0xa5, 0);
        for _ in 0..100 {
            let q = vec![rng.gen::<f64>() * 5.0, rng.gen::<f64>()];
            let (m0, v0) = model.predict(&q);
            let (m1, v1) = reloaded.predict(&q);
            assert!((m0 - m1).abs() <= 1e-12);
            assert!((v0 - v1).abs() <= 1e-12);
        }
    }

    #[test]
    fn loo_rmse_is_finite_and_non_negative() {
        let (features, targets) = toy_rows(10, 7);
        let model = gp_fit(&features, &targets, &tight_grid()).unwrap();
        let rmse = model.loo_rmse();
        assert!(rmse.is_finite() && rmse >= 0.0);
    }

    #[test]
    fn tie_breaking_prefers_small_lengthscales() {
        // two identical targets make many hyperparameters equivalent; the
        // fit must still be deterministic and pick the smallest lengthscale
        // among LML ties
        let features = vec![vec![0.0], vec![1.0]];
        let targets = vec![1.0, 1.0];
        let grid = HyperGrid {
            lengthscales: vec![0.5, 5.0],
            signal_vars: vec![1.0],
            noise_vars: vec![1e-6],
        };
        let a = gp_fit(&features, &targets, &grid).unwrap();
        let b = gp_fit(&features, &targets, &grid).unwrap();
        assert_eq!(a.lengthscale, b.lengthscale);
    }

    #[test]
    fn rejects_undersized_datasets() {
        let grid = tight_grid();
        assert!(gp_fit(&[vec![1.0]], &[2.0], &grid).is_err());
        assert!(gp_fit(&[vec![1.0], vec![2.0]], &[1.0], &grid).is_err());
    }
}
