//! Denoising score matching over all noise levels at once, and Adam.
//!
//! For a clean sample `x`, a uniformly drawn level `i` and `z ~ N(0, I)`,
//! the perturbed input is `x̃ = x + σ_i z`. With weight `λ(i) = σ_i²` the
//! per-sample loss is evaluated as `‖raw(x̃) + (x̃ − x)/σ_i‖²`, where `raw`
//! is the network body output (`σ·s`).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernel::{Graph, KernelError, Tensor};
use crate::model::{ModelError, ScoreNetwork};
use crate::rng::{seeded, Rng64, RngState};
use crate::schedule::NoiseSchedule;
use crate::selfies::OneHotSequence;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("sample {index} is {got_v}x{got_l}, network expects {v}x{l}")]
    SampleShape { index: usize, v: usize, l: usize, got_v: usize, got_l: usize },
    #[error("non-finite loss at step {step}: level {level}, sigma {sigma}, dataset rows {rows:?}")]
    NonFiniteLoss { step: u64, level: usize, sigma: f64, rows: Vec<usize> },
    #[error("gradient {index} has shape {got:?}, parameter has {expected:?}")]
    GradientShape { index: usize, expected: Vec<usize>, got: Vec<usize> },
    #[error("adam step counter must start at 1")]
    ZeroStep,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `x̃ = x + σz` and the conditional score `−(x̃ − x)/σ²`.
pub fn perturb_with<R: Rng + ?Sized>(
    x: &OneHotSequence,
    sigma: f64,
    rng: &mut R,
) -> (OneHotSequence, Vec<f64>) {
    let s2 = sigma * sigma;
    let mut noisy = Vec::with_capacity(x.flatten().len());
    let mut target = Vec::with_capacity(x.flatten().len());
    for &v in x.flatten() {
        let z: f64 = rng.sample(StandardNormal);
        let t = v + sigma * z;
        noisy.push(t);
        target.push(-(t - v) / s2);
    }
    let noisy = OneHotSequence::soft(x.vocab_size(), x.max_len(), noisy).expect("shape taken from x");
    (noisy, target)
}

pub fn perturb(x: &OneHotSequence, sigma: f64, seed: u64) -> (OneHotSequence, Vec<f64>) {
    perturb_with(x, sigma, &mut seeded(seed))
}

/// `‖raw + (x̃ − x)/σ‖²`, equal to `σ²·‖raw/σ − target‖²`.
pub fn stabilized_loss(raw: &[f64], x: &[f64], noisy: &[f64], sigma: f64) -> f64 {
    raw.iter()
        .zip(x.iter().zip(noisy))
        .map(|(r, (a, b))| {
            let e = r + (b - a) / sigma;
            e * e
        })
        .sum()
}

/// Level and noise drawn for one batch entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub level: usize,
    pub sigma: f64,
    pub noise: Vec<f64>,
}

/// Per batch entry, in order: a uniform level, then `V·L` standard normals.
pub fn draw_perturbations<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Vec<Draw> {
    (0..n)
        .map(|_| {
            let level = rng.random_range(0..schedule.num_levels());
            let noise = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            Draw { level, sigma: schedule.sigmas()[level], noise }
        })
        .collect()
}

/// One batch entry's loss and, if requested, its parameter gradients.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub loss: f64,
    pub grads: Option<Vec<Tensor>>,
}

fn sample_loss(
    net: &ScoreNetwork,
    x: &OneHotSequence,
    draw: &Draw,
    with_grads: bool,
) -> Result<SampleOutcome, ModelError> {
    let (v, l) = (x.vocab_size(), x.max_len());
    let clean = x.flatten();
    let noisy: Vec<f64> = clean.iter().zip(&draw.noise).map(|(a, z)| a + draw.sigma * z).collect();
    let shift: Vec<f64> = clean.iter().zip(&noisy).map(|(a, b)| (b - a) / draw.sigma).collect();

    let mut g = Graph::new();
    let bound = net.bind(&mut g, with_grads);
    let input = g.constant(Tensor::new(&[v, l], noisy)?);
    let raw = net.raw_output(&mut g, &bound, input)?;
    let shift = g.constant(Tensor::new(&[v, l], shift)?);
    let r = g.add(raw, shift)?;
    let sq = g.mul(r, r)?;
    let loss = g.sum(sq)?;
    let value = g.value(loss).data()[0];
    if !with_grads {
        return Ok(SampleOutcome { loss: value, grads: None });
    }
    let mut grads = g.backward(loss)?;
    let grads = bound.params.iter().map(|p| grads.take(*p).expect("parameter leaf")).collect();
    Ok(SampleOutcome { loss: value, grads: Some(grads) })
}

/// Runs independent per-sample jobs. Results must come back in index order.
pub trait BatchExecutor {
    fn run(
        &self,
        n: usize,
        job: &(dyn Fn(usize) -> Result<SampleOutcome, ModelError> + Sync),
    ) -> Vec<Result<SampleOutcome, ModelError>>;
}

/// Runs every job on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl BatchExecutor for Sequential {
    fn run(
        &self,
        n: usize,
        job: &(dyn Fn(usize) -> Result<SampleOutcome, ModelError> + Sync),
    ) -> Vec<Result<SampleOutcome, ModelError>> {
        (0..n).map(job).collect()
    }
}

/// Batch-mean loss and its gradient, summed in batch order.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub loss: f64,
    pub grads: Option<Vec<Tensor>>,
    pub level_mean_sigma: f64,
}

fn check_shapes(net: &ScoreNetwork, batch: &[&OneHotSequence]) -> Result<(), TrainError> {
    let c = net.config();
    for (index, x) in batch.iter().enumerate() {
        if x.vocab_size() != c.vocab_size || x.max_len() != c.max_len {
            return Err(TrainError::SampleShape {
                index,
                v: c.vocab_size,
                l: c.max_len,
                got_v: x.vocab_size(),
                got_l: x.max_len(),
            });
        }
    }
    Ok(())
}

/// Evaluates a batch under fixed draws. `rows` labels diagnostics.
pub fn evaluate_batch(
    net: &ScoreNetwork,
    batch: &[&OneHotSequence],
    draws: &[Draw],
    with_grads: bool,
    exec: &dyn BatchExecutor,
    step: u64,
    rows: &[usize],
) -> Result<BatchLoss, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    check_shapes(net, batch)?;
    let outcomes = exec.run(batch.len(), &|b| sample_loss(net, batch[b], &draws[b], with_grads));

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grads: Option<Vec<Tensor>> = None;
    for (b, outcome) in outcomes.into_iter().enumerate() {
        let outcome = match outcome {
            Ok(o) if o.loss.is_finite() => o,
            Ok(_) | Err(ModelError::Kernel(KernelError::NonFinite { .. })) => {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    level: draws[b].level,
                    sigma: draws[b].sigma,
                    rows: rows.to_vec(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        loss += outcome.loss / n;
        if let Some(gs) = outcome.grads {
            match grads.as_mut() {
                None => {
                    let mut gs = gs;
                    for t in &mut gs {
                        t.data_mut().iter_mut().for_each(|v| *v /= n);
                    }
                    grads = Some(gs);
                }
                Some(acc) => {
                    for (a, t) in acc.iter_mut().zip(gs) {
                        a.data_mut().iter_mut().zip(t.data()).for_each(|(x, y)| *x += y / n);
                    }
                }
            }
        }
    }
    let level_mean_sigma = draws.iter().map(|d| d.sigma).sum::<f64>() / n;
    Ok(BatchLoss { loss, grads, level_mean_sigma })
}

/// DSM loss of a batch with levels and noise drawn from `seed`.
pub fn dsm_loss(
    net: &ScoreNetwork,
    batch: &[OneHotSequence],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64, TrainError> {
    Ok(dsm_batch(net, batch, schedule, seed, false)?.loss)
}

/// As [`dsm_loss`], with gradients for every parameter tensor.
pub fn dsm_loss_and_grads(
    net: &ScoreNetwork,
    batch: &[OneHotSequence],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let out = dsm_batch(net, batch, schedule, seed, true)?;
    Ok((out.loss, out.grads.expect("gradients requested")))
}

fn dsm_batch(
    net: &ScoreNetwork,
    batch: &[OneHotSequence],
    schedule: &NoiseSchedule,
    seed: u64,
    with_grads: bool,
) -> Result<BatchLoss, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let dim = batch[0].flatten().len();
    let draws = draw_perturbations(batch.len(), dim, schedule, &mut seeded(seed));
    let refs: Vec<&OneHotSequence> = batch.iter().collect();
    let rows: Vec<usize> = (0..batch.len()).collect();
    evaluate_batch(net, &refs, &draws, with_grads, &Sequential, 0, &rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Moments {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let z: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { m: z.clone(), v: z }
    }
}

/// Bias-corrected Adam update for step `t` (counting from 1).
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    moments: &mut Moments,
    config: &AdamConfig,
    t: u64,
) -> Result<(), TrainError> {
    if t == 0 {
        return Err(TrainError::ZeroStep);
    }
    if grads.len() != params.len() || moments.m.len() != params.len() || moments.v.len() != params.len() {
        return Err(TrainError::GradientShape {
            index: params.len().min(grads.len()),
            expected: vec![params.len()],
            got: vec![grads.len()],
        });
    }
    for (index, (p, g)) in params.iter().zip(grads).enumerate() {
        for other in [g, &moments.m[index], &moments.v[index]] {
            if other.shape() != p.shape() {
                return Err(TrainError::GradientShape {
                    index,
                    expected: p.shape().to_vec(),
                    got: other.shape().to_vec(),
                });
            }
        }
    }
    let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = *config;
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = moments.m[i].data_mut();
        let v = moments.v[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mh = *mi / c1;
            let vh = *vi / c2;
            *w -= lr * mh / (libm::sqrt(vh) + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            total_steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.total_steps == 0 || self.checkpoint_every == 0 {
            return Err(TrainError::Config("batch size, steps and checkpoint interval must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite() && self.eps > 0.0) {
            return Err(TrainError::Config("learning rate and eps must be positive"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(TrainError::Config("betas must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub level_mean_sigma: f64,
    pub loss: f64,
}

/// Owns the network, optimizer moments and the batch RNG.
#[derive(Clone, Debug)]
pub struct Trainer {
    net: ScoreNetwork,
    schedule: NoiseSchedule,
    config: TrainConfig,
    moments: Moments,
    step: u64,
    rng: Rng64,
}

impl Trainer {
    pub fn new(net: ScoreNetwork, schedule: NoiseSchedule, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let moments = Moments::zeros_like(net.parameters());
        let rng = seeded(config.seed);
        Ok(Self { net, schedule, config, moments, step: 0, rng })
    }

    /// Continues from saved state; the RNG resumes at its saved position.
    pub fn resume(
        net: ScoreNetwork,
        schedule: NoiseSchedule,
        config: TrainConfig,
        moments: Moments,
        step: u64,
        rng: &RngState,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let shapes_match = moments.m.len() == net.parameters().len()
            && moments.v.len() == net.parameters().len()
            && net.parameters().iter().zip(moments.m.iter().zip(&moments.v)).all(|(p, (m, v))| {
                m.shape() == p.shape() && v.shape() == p.shape()
            });
        if !shapes_match {
            return Err(TrainError::Config("optimizer moments do not match the network"));
        }
        Ok(Self { net, schedule, config, moments, step, rng: rng.restore() })
    }

    pub fn network(&self) -> &ScoreNetwork {
        &self.net
    }

    pub fn into_network(self) -> ScoreNetwork {
        self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    /// Samples a batch with replacement, evaluates it and applies Adam.
    pub fn train_step(&mut self, data: &[OneHotSequence], exec: &dyn BatchExecutor) -> Result<TraceRow, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let rows: Vec<usize> = (0..self.config.batch_size).map(|_| self.rng.random_range(0..data.len())).collect();
        let batch: Vec<&OneHotSequence> = rows.iter().map(|&r| &data[r]).collect();
        check_shapes(&self.net, &batch)?;
        let dim = batch[0].flatten().len();
        let draws = draw_perturbations(batch.len(), dim, &self.schedule, &mut self.rng);

        let step = self.step + 1;
        let out = evaluate_batch(&self.net, &batch, &draws, true, exec, step, &rows)?;
        let grads = out.grads.expect("gradients requested");
        adam_step(self.net.parameters_mut(), &grads, &mut self.moments, &self.config.adam(), step)?;
        self.step = step;
        Ok(TraceRow { step, level_mean_sigma: out.level_mean_sigma, loss: out.loss })
    }

    pub fn run(
        &mut self,
        data: &[OneHotSequence],
        steps: u64,
        exec: &dyn BatchExecutor,
    ) -> Result<Vec<TraceRow>, TrainError> {
        (0..steps).map(|_| self.train_step(data, exec)).collect()
    }
}
