//! Langevin dynamics, plain and annealed over a noise schedule.
//!
//! Fields are flat `f64` slices; for token matrices that is the row-major
//! `V × L` flattening. Each chain draws from its own RNG stream keyed by
//! `(seed, chain index)`, so results do not depend on how chains are
//! scheduled across threads.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernel::KernelError;
use crate::rng::{stream, Rng64};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("noise level must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("field has {got} values, score function expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite score at level {level} (sigma {sigma}), step {step}")]
    NonFinite { level: usize, step: usize, sigma: f64 },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] KernelError),
}

/// A score field `s(x, σ)` over flat vectors of length [`ScoreFn::dim`].
pub trait ScoreFn: Sync {
    fn dim(&self) -> usize;
    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<(), SampleError>;
}

impl<S: ScoreFn + ?Sized> ScoreFn for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<(), SampleError> {
        (**self).score_into(x, sigma, out)
    }
}

/// Wraps a score function and counts evaluations.
pub struct CountingScore<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S> CountingScore<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<S: ScoreFn> ScoreFn for CountingScore<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<(), SampleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score_into(x, sigma, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Prior {
    /// Independent `U(0, 1)` per coordinate.
    #[default]
    UniformBox,
    /// Independent `N(0, σ_max²)` per coordinate.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub steps_per_level: usize,
    pub epsilon: f64,
    pub prior: Prior,
    pub final_denoise: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps_per_level: 10, epsilon: 2e-5, prior: Prior::UniformBox, final_denoise: true, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.steps_per_level == 0 {
            return Err(SampleError::InvalidConfig("steps per level must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SampleError::InvalidConfig("epsilon must be positive"));
        }
        Ok(())
    }
}

/// `α_i = ε·σ_i²/σ_min²`
pub fn step_size(schedule: &NoiseSchedule, level: usize, epsilon: f64) -> f64 {
    let s = schedule.sigmas()[level];
    let m = schedule.sigma_min();
    epsilon * (s * s) / (m * m)
}

fn check_score(score: &[f64], level: usize, step: usize, sigma: f64) -> Result<(), SampleError> {
    if score.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SampleError::NonFinite { level, step, sigma })
    }
}

/// Buffers reused across steps of one chain.
pub struct Scratch {
    score: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Self { score: vec![0.0; dim] }
    }
}

/// One update `x ← x + α·s(x, σ) + √(2α)·z`. `level` and `step` only label
/// diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn langevin_step<S: ScoreFn + ?Sized, R: Rng + ?Sized>(
    x: &mut [f64],
    score_fn: &S,
    sigma: f64,
    alpha: f64,
    rng: &mut R,
    scratch: &mut Scratch,
    level: usize,
    step: usize,
) -> Result<(), SampleError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SampleError::InvalidConfig("step size must be positive"));
    }
    if x.len() != score_fn.dim() {
        return Err(SampleError::Dimension { expected: score_fn.dim(), got: x.len() });
    }
    scratch.score.resize(x.len(), 0.0);
    score_fn.score_into(x, sigma, &mut scratch.score)?;
    check_score(&scratch.score, level, step, sigma)?;
    let noise = libm::sqrt(2.0 * alpha);
    for (xi, si) in x.iter_mut().zip(&scratch.score) {
        let z: f64 = rng.sample(StandardNormal);
        *xi += alpha * si + noise * z;
    }
    Ok(())
}

pub fn draw_prior<R: Rng + ?Sized>(prior: Prior, dim: usize, sigma_max: f64, rng: &mut R) -> Vec<f64> {
    match prior {
        Prior::UniformBox => (0..dim).map(|_| rng.random::<f64>()).collect(),
        Prior::Gaussian => (0..dim).map(|_| sigma_max * rng.sample::<f64, _>(StandardNormal)).collect(),
    }
}

/// Runs chain `index` from its prior draw through every level, largest σ first.
pub fn sample_chain<S: ScoreFn + ?Sized>(
    score_fn: &S,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    index: u64,
) -> Result<Vec<f64>, SampleError> {
    config.validate()?;
    let sigmas = schedule.sigmas();
    assert!(sigmas.windows(2).all(|w| w[1] < w[0]), "annealing order must be strictly decreasing");

    let mut rng: Rng64 = stream(config.seed, index);
    let dim = score_fn.dim();
    let mut x = draw_prior(config.prior, dim, schedule.sigma_max(), &mut rng);
    let mut scratch = Scratch::new(dim);
    for (level, &sigma) in sigmas.iter().enumerate() {
        let alpha = step_size(schedule, level, config.epsilon);
        for t in 0..config.steps_per_level {
            langevin_step(&mut x, score_fn, sigma, alpha, &mut rng, &mut scratch, level, t)?;
        }
    }
    if config.final_denoise {
        let sigma = schedule.sigma_min();
        score_fn.score_into(&x, sigma, &mut scratch.score)?;
        check_score(&scratch.score, sigmas.len(), 0, sigma)?;
        let a = sigma * sigma;
        for (xi, si) in x.iter_mut().zip(&scratch.score) {
            *xi += a * si;
        }
    }
    Ok(x)
}

/// `n` independent chains, run in order on the calling thread.
pub fn annealed_sample<S: ScoreFn + ?Sized>(
    score_fn: &S,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    n: usize,
) -> Result<Vec<Vec<f64>>, SampleError> {
    if n == 0 {
        return Err(SampleError::NoSamples);
    }
    (0..n as u64).map(|i| sample_chain(score_fn, schedule, config, i)).collect()
}

/// Non-annealed Langevin at a single σ from a caller-supplied start.
pub fn plain_langevin_chain<S: ScoreFn + ?Sized, R: Rng + ?Sized>(
    score_fn: &S,
    mut x: Vec<f64>,
    sigma: f64,
    alpha: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SampleError> {
    let mut scratch = Scratch::new(x.len());
    for t in 0..steps {
        langevin_step(&mut x, score_fn, sigma, alpha, rng, &mut scratch, 0, t)?;
    }
    Ok(x)
}
