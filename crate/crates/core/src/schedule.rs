//! Geometric noise levels, per-level loss weights, and the data-driven
//! choice of the largest noise level.

use alloc::vec::Vec;

use rand::Rng;

use crate::rng::seeded;
use crate::selfies::OneHotSequence;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    InvalidArgument(&'static str),
    #[error("level {index} out of range for {len} levels")]
    LevelOutOfRange { index: usize, len: usize },
    #[error("need at least 2 samples to estimate a distance, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { index: usize, expected: (usize, usize), got: (usize, usize) },
}

/// Loss weighting λ(i) across levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LambdaMode {
    /// λ(i) = σᵢ²
    #[default]
    SigmaSquared,
}

/// Noise standard deviations in strictly decreasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    lambda_mode: LambdaMode,
}

impl NoiseSchedule {
    /// `σ_k = σ_max·(σ_min/σ_max)^(k/(n−1))`, with both endpoints stored
    /// exactly as given.
    pub fn geometric(sigma_min: f64, sigma_max: f64, num_levels: usize) -> Result<Self, ScheduleError> {
        if !(sigma_min > 0.0 && sigma_min.is_finite() && sigma_max.is_finite()) {
            return Err(ScheduleError::InvalidArgument("sigmas must be positive and finite"));
        }
        if sigma_min >= sigma_max {
            return Err(ScheduleError::InvalidArgument("sigma_min must be below sigma_max"));
        }
        if num_levels < 2 {
            return Err(ScheduleError::InvalidArgument("need at least 2 levels"));
        }
        let log_ratio = libm::log(sigma_min / sigma_max);
        let last = (num_levels - 1) as f64;
        let mut sigmas: Vec<f64> =
            (0..num_levels).map(|k| sigma_max * libm::exp(log_ratio * k as f64 / last)).collect();
        sigmas[0] = sigma_max;
        sigmas[num_levels - 1] = sigma_min;
        Ok(Self { sigmas, lambda_mode: LambdaMode::SigmaSquared })
    }

    /// Arbitrary strictly decreasing positive levels (a single level is allowed).
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self, ScheduleError> {
        if sigmas.is_empty() {
            return Err(ScheduleError::InvalidArgument("empty schedule"));
        }
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ScheduleError::InvalidArgument("sigmas must be positive and finite"));
        }
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ScheduleError::InvalidArgument("sigmas must be strictly decreasing"));
        }
        Ok(Self { sigmas, lambda_mode: LambdaMode::SigmaSquared })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn num_levels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigma(&self, level: usize) -> Result<f64, ScheduleError> {
        self.sigmas
            .get(level)
            .copied()
            .ok_or(ScheduleError::LevelOutOfRange { index: level, len: self.sigmas.len() })
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }

    pub fn lambda_mode(&self) -> LambdaMode {
        self.lambda_mode
    }

    pub fn lambda_weight(&self, level: usize) -> Result<f64, ScheduleError> {
        let s = self.sigma(level)?;
        Ok(match self.lambda_mode {
            LambdaMode::SigmaSquared => s * s,
        })
    }
}

/// Number of longest sequences always compared against every other sample.
pub const LONGEST_ANCHORS: usize = 64;

/// Largest pairwise L² distance between flattened samples.
///
/// Exhaustive when all `n(n−1)/2` pairs fit in `pair_budget`. Otherwise the
/// first `pair_budget` pairs of a seeded random sequence are examined, plus
/// every pair involving one of the [`LONGEST_ANCHORS`] longest sequences.
/// Pairs are drawn as a prefix of a fixed sequence, so a larger budget never
/// lowers the estimate.
pub fn estimate_sigma_max(
    data: &[OneHotSequence],
    pair_budget: usize,
    seed: u64,
) -> Result<f64, ScheduleError> {
    let n = data.len();
    if n < 2 {
        return Err(ScheduleError::TooFewSamples(n));
    }
    let shape = (data[0].vocab_size(), data[0].max_len());
    for (index, x) in data.iter().enumerate() {
        let got = (x.vocab_size(), x.max_len());
        if got != shape {
            return Err(ScheduleError::ShapeMismatch { index, expected: shape, got });
        }
    }
    let total = n * (n - 1) / 2;
    let mut best = 0.0f64;
    if total <= pair_budget {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(data[i].distance(&data[j]));
            }
        }
        return Ok(best);
    }

    let mut rng = seeded(seed);
    for _ in 0..pair_budget {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        best = best.max(data[i].distance(&data[j]));
    }

    let mut by_len: Vec<usize> = (0..n).collect();
    by_len.sort_by_key(|&i| (core::cmp::Reverse(data[i].token_len()), i));
    for &a in by_len.iter().take(LONGEST_ANCHORS) {
        for (b, other) in data.iter().enumerate() {
            if a != b {
                best = best.max(data[a].distance(other));
            }
        }
    }
    Ok(best)
}
