//! Thread-pool execution. Work is split per sample or per chain and results
//! are collected in index order, so output does not depend on thread count.

use rayon::prelude::*;
use rayon::ThreadPool;
use scoremol_core::model::ModelError;
use scoremol_core::sampler::{sample_chain, SampleError, SamplerConfig, ScoreFn};
use scoremol_core::schedule::NoiseSchedule;
use scoremol_core::train::{BatchExecutor, SampleOutcome};

pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self { pool: rayon::ThreadPoolBuilder::new().num_threads(threads).build()? })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0..n)` in index order.
    pub fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Chains `first..first + count`, each seeded from its own index.
    pub fn chains<S: ScoreFn + ?Sized>(
        &self,
        score_fn: &S,
        schedule: &NoiseSchedule,
        config: &SamplerConfig,
        first: u64,
        count: usize,
    ) -> Result<Vec<Vec<f64>>, SampleError> {
        self.pool.install(|| {
            (first..first + count as u64)
                .into_par_iter()
                .map(|i| sample_chain(score_fn, schedule, config, i))
                .collect()
        })
    }
}

impl BatchExecutor for Pool {
    fn run(
        &self,
        n: usize,
        job: &(dyn Fn(usize) -> Result<SampleOutcome, ModelError> + Sync),
    ) -> Vec<Result<SampleOutcome, ModelError>> {
        self.pool.install(|| (0..n).into_par_iter().map(job).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scoremol_core::model::{ScoreNetConfig, ScoreNetwork};
    use scoremol_core::oracles::{GaussianMixture, SmoothedMixtureScore};
    use scoremol_core::sampler::annealed_sample;
    use scoremol_core::selfies::OneHotSequence;
    use scoremol_core::train::{Sequential, TrainConfig, Trainer};

    #[test]
    fn chains_match_sequential() {
        let score = SmoothedMixtureScore::new(GaussianMixture::standard_normal(3));
        let schedule = NoiseSchedule::geometric(0.1, 2.0, 4).unwrap();
        let config = SamplerConfig { seed: 7, ..Default::default() };
        let want = annealed_sample(&score, &schedule, &config, 9).unwrap();
        for threads in [1, 3] {
            let got = Pool::new(threads).unwrap().chains(&score, &schedule, &config, 0, 9).unwrap();
            assert_eq!(got, want);
        }
        let tail = Pool::new(2).unwrap().chains(&score, &schedule, &config, 4, 5).unwrap();
        assert_eq!(tail, want[4..]);
    }

    #[test]
    fn training_matches_sequential() {
        let net = ScoreNetwork::init(ScoreNetConfig::with_size(4, 3, 8, 1, 2), 3).unwrap();
        let schedule = NoiseSchedule::geometric(0.1, 2.0, 5).unwrap();
        let data: Vec<OneHotSequence> =
            (0..6).map(|i| OneHotSequence::from_ids(4, &[i % 4, (i + 1) % 4, 0]).unwrap()).collect();
        let config = TrainConfig { batch_size: 5, learning_rate: 1e-3, ..Default::default() };
        let mut a = Trainer::new(net.clone(), schedule.clone(), config.clone()).unwrap();
        let mut b = Trainer::new(net, schedule, config).unwrap();
        assert_eq!(a.run(&data, 3, &Sequential).unwrap(), b.run(&data, 3, &Pool::new(3).unwrap()).unwrap());
        assert_eq!(a.network(), b.network());
    }
}
