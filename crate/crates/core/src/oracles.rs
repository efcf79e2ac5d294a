//! Isotropic Gaussian mixtures with closed-form log densities and scores.
//!
//! Convolving a mixture with `N(0, σ²I)` only widens each component, so the
//! exact score of every noise-perturbed marginal is available. These serve
//! as reference score functions for the trainer and sampler.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::sampler::{SampleError, ScoreFn};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("dimension mismatch: mixture has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid mixture: {0}")]
    InvalidMixture(&'static str),
    #[error("no samples given")]
    EmptySamples,
    #[error("need at least 2 mode centers, got {0}")]
    TooFewCenters(usize),
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<f64>,
}

impl GaussianMixture {
    /// Weights must be positive; they are normalized to sum to one.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<f64>) -> Result<Self, OracleError> {
        let k = weights.len();
        if k == 0 || means.len() != k || stds.len() != k {
            return Err(OracleError::InvalidMixture("weights, means and stds must have equal non-zero length"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(OracleError::InvalidMixture("weights must be positive"));
        }
        if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(OracleError::InvalidMixture("stds must be positive"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
            return Err(OracleError::InvalidMixture("means must share one non-zero dimension"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { weights, means, stds })
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self { weights: vec![1.0], means: vec![vec![0.0; dim]], stds: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != self.dim() {
            return Err(OracleError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Per-component `log w_k + log N(x; μ_k, s_k² I)`.
    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim() as f64;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, mu), s)| {
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::log(*w) - 0.5 * d * (LN_2PI + 2.0 * libm::log(*s)) - sq / (2.0 * s * s)
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, OracleError> {
        self.check_dim(x)?;
        Ok(log_sum_exp(&self.component_logs(x)))
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check_dim(x)?;
        let logs = self.component_logs(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logs.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = e.iter().sum();
        Ok(e.into_iter().map(|v| v / total).collect())
    }

    /// `∇ₓ log p(x) = Σ_k r_k(x)·(μ_k − x)/s_k²`
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        let r = self.responsibilities(x)?;
        let mut out = vec![0.0; x.len()];
        for ((rk, mu), s) in r.iter().zip(&self.means).zip(&self.stds) {
            let c = rk / (s * s);
            for (o, (m, xi)) in out.iter_mut().zip(mu.iter().zip(x)) {
                *o += c * (m - xi);
            }
        }
        Ok(out)
    }

    /// The mixture convolved with `N(0, σ² I)`.
    pub fn smoothed(&self, sigma: f64) -> Result<GaussianMixture, OracleError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(OracleError::InvalidMixture("smoothing sigma must be non-negative"));
        }
        let mut m = self.clone();
        for s in &mut m.stds {
            *s = libm::sqrt(*s * *s + sigma * sigma);
        }
        Ok(m)
    }

    /// Ancestral samples: component by weight, then an isotropic Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                self.means[k]
                    .iter()
                    .map(|m| m + self.stds[k] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

pub fn gmm_log_density(m: &GaussianMixture, x: &[f64]) -> Result<f64, OracleError> {
    m.log_density(x)
}

pub fn gmm_score(m: &GaussianMixture, x: &[f64]) -> Result<Vec<f64>, OracleError> {
    m.score(x)
}

pub fn smoothed_gmm(m: &GaussianMixture, sigma: f64) -> Result<GaussianMixture, OracleError> {
    m.smoothed(sigma)
}

/// Fraction of samples nearest to each center (ties go to the lower index).
pub fn histogram_mode_weights(samples: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    if centers.len() < 2 {
        return Err(OracleError::TooFewCenters(centers.len()));
    }
    if samples.is_empty() {
        return Err(OracleError::EmptySamples);
    }
    let d = centers[0].len();
    let mut counts = vec![0usize; centers.len()];
    for s in samples {
        if s.len() != d {
            return Err(OracleError::DimensionMismatch { expected: d, got: s.len() });
        }
        let mut best = (0, f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let dist: f64 = s.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.1 {
                best = (k, dist);
            }
        }
        counts[best.0] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Exact score of a mixture perturbed at the requested noise level.
#[derive(Clone, Debug)]
pub struct SmoothedMixtureScore {
    base: GaussianMixture,
}

impl SmoothedMixtureScore {
    pub fn new(base: GaussianMixture) -> Self {
        Self { base }
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.base
    }
}

impl ScoreFn for SmoothedMixtureScore {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<(), SampleError> {
        let m = self.base.smoothed(sigma).map_err(|_| SampleError::BadSigma(sigma))?;
        let s = m.score(x).map_err(|_| SampleError::Dimension { expected: self.dim(), got: x.len() })?;
        out.copy_from_slice(&s);
        Ok(())
    }
}
