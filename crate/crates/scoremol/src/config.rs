//! Run configuration: built-in defaults, then a `key = value` file, then
//! command-line overrides. Every key must be known.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use scoremol_core::metrics::ReportOptions;
use scoremol_core::model::ScoreNetConfig;
use scoremol_core::sampler::{Prior, SamplerConfig};
use scoremol_core::train::TrainConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `(key, default, description)`
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for every random draw"),
    ("threads", "1", "worker threads; results do not depend on it"),
    ("sigma_min", "0.01", "smallest noise level"),
    ("sigma_max", "10", "largest noise level, or `auto` to estimate from the corpus"),
    ("num_levels", "350", "number of geometric noise levels"),
    ("pair_budget", "100000", "pairs examined by the sigma_max estimate"),
    ("max_len", "auto", "one-hot columns, or `auto` for the longest corpus string"),
    ("d_model", "64", "transformer width"),
    ("n_layers", "2", "transformer layers"),
    ("n_heads", "4", "attention heads"),
    ("batch_size", "32", "training batch size"),
    ("learning_rate", "0.0001", "Adam step size"),
    ("steps", "2000", "training steps"),
    ("checkpoint_every", "1000", "steps between checkpoints"),
    ("repeats", "1", "independent training runs, seeds seed..seed+repeats-1"),
    ("n", "1000", "samples to draw"),
    ("steps_per_level", "10", "Langevin steps per noise level"),
    ("epsilon", "0.00002", "base Langevin step size"),
    ("prior", "uniform", "`uniform` on [0,1] or `gaussian` with sd sigma_max"),
    ("final_denoise", "true", "apply one noiseless step at sigma_min"),
    ("unique_ks", "1000,10000", "uniqueness windows"),
    ("fp_radius", "2", "fingerprint radius"),
    ("fp_width", "2048", "fingerprint bits"),
    ("mode", "both", "oracle sampler: `plain`, `annealed` or `both`"),
    ("plain_steps", "auto", "plain Langevin steps, or `auto` for num_levels * steps_per_level"),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}` ({origin})")]
    UnknownKey { key: String, origin: String },
    #[error("{origin}: malformed line {line}: expected `key = value`")]
    Malformed { origin: String, line: usize },
    #[error("bad value for `{key}`: {value:?} ({reason})")]
    Value { key: &'static str, value: String, reason: String },
    #[error("config file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// String values for every known key, with where each came from.
#[derive(Clone, Debug)]
pub struct Settings {
    values: BTreeMap<&'static str, (String, String)>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|&(k, v, _)| (k, (v.to_string(), "default".to_string()))).collect() }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| **k == key)
            .ok_or_else(|| ConfigError::UnknownKey { key: key.to_string(), origin: origin.to_string() })?;
        *slot.1 = (value.to_string(), origin.to_string());
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { origin: origin.to_string(), line: i + 1 })?;
            self.set(k.trim(), v.trim(), &format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn raw(&self, key: &str) -> &str {
        &self.values.iter().find(|(k, _)| **k == key).expect("known key").1 .0
    }

    fn parse<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e: T::Err| ConfigError::Value { key, value: v.to_string(), reason: e.to_string() })
    }

    fn auto<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key) == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let bad = |key: &'static str, reason: &str| ConfigError::Value {
            key,
            value: self.raw(key).to_string(),
            reason: reason.to_string(),
        };
        let prior = match self.raw("prior") {
            "uniform" => Prior::UniformBox,
            "gaussian" => Prior::Gaussian,
            _ => return Err(bad("prior", "expected `uniform` or `gaussian`")),
        };
        let mode = match self.raw("mode") {
            "plain" => OracleMode::Plain,
            "annealed" => OracleMode::Annealed,
            "both" => OracleMode::Both,
            _ => return Err(bad("mode", "expected `plain`, `annealed` or `both`")),
        };
        let unique_ks = self
            .raw("unique_ks")
            .split(',')
            .map(|s| s.trim().parse::<usize>().ok().filter(|&k| k > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("unique_ks", "expected comma-separated positive integers"))?;
        let threads: usize = self.parse("threads")?;
        if threads == 0 {
            return Err(bad("threads", "must be at least 1"));
        }
        let repeats: u64 = self.parse("repeats")?;
        if repeats == 0 {
            return Err(bad("repeats", "must be at least 1"));
        }
        Ok(RunConfig {
            seed: self.parse("seed")?,
            threads,
            sigma_min: self.parse("sigma_min")?,
            sigma_max: self.auto("sigma_max")?,
            num_levels: self.parse("num_levels")?,
            pair_budget: self.parse("pair_budget")?,
            max_len: self.auto("max_len")?,
            d_model: self.parse("d_model")?,
            n_layers: self.parse("n_layers")?,
            n_heads: self.parse("n_heads")?,
            batch_size: self.parse("batch_size")?,
            learning_rate: self.parse("learning_rate")?,
            steps: self.parse("steps")?,
            checkpoint_every: self.parse("checkpoint_every")?,
            repeats,
            n: self.parse("n")?,
            steps_per_level: self.parse("steps_per_level")?,
            epsilon: self.parse("epsilon")?,
            prior,
            final_denoise: self.parse("final_denoise")?,
            unique_ks,
            fp_radius: self.parse("fp_radius")?,
            fp_width: self.parse("fp_width")?,
            mode,
            plain_steps: self.auto("plain_steps")?,
        })
    }

    /// The resolved settings as a config file that reproduces the run.
    pub fn echo(&self, command: &str, extra: &[(&str, String)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# scoremol {VERSION}");
        let _ = writeln!(out, "# command: {command}");
        for (k, v) in extra {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for (k, (v, origin)) in &self.values {
            let _ = writeln!(out, "{k} = {v}  # {origin}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    Plain,
    Annealed,
    Both,
}

/// Typed view of [`Settings`]. `None` means `auto`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub sigma_min: f64,
    pub sigma_max: Option<f64>,
    pub num_levels: usize,
    pub pair_budget: usize,
    pub max_len: Option<usize>,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: u64,
    pub checkpoint_every: u64,
    pub repeats: u64,
    pub n: usize,
    pub steps_per_level: usize,
    pub epsilon: f64,
    pub prior: Prior,
    pub final_denoise: bool,
    pub unique_ks: Vec<usize>,
    pub fp_radius: usize,
    pub fp_width: usize,
    pub mode: OracleMode,
    pub plain_steps: Option<usize>,
}

impl RunConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            total_steps: self.steps,
            seed,
            checkpoint_every: self.checkpoint_every,
            ..TrainConfig::default()
        }
    }

    pub fn net_config(&self, vocab_size: usize, max_len: usize) -> ScoreNetConfig {
        ScoreNetConfig::with_size(vocab_size, max_len, self.d_model, self.n_layers, self.n_heads)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            steps_per_level: self.steps_per_level,
            epsilon: self.epsilon,
            prior: self.prior,
            final_denoise: self.final_denoise,
            seed: self.seed,
        }
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions { unique_ks: self.unique_ks.clone(), radius: self.fp_radius, width: self.fp_width }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = Settings::default().resolve().unwrap();
        assert_eq!(c.sigma_max, Some(10.0));
        assert_eq!(c.num_levels, 350);
        assert_eq!(c.steps_per_level, 10);
        assert_eq!(c.epsilon, 2e-5);
        assert_eq!(c.max_len, None);
        assert_eq!(c.unique_ks, [1000, 10000]);
        assert_eq!(c.sampler_config(), SamplerConfig::default());
        assert_eq!(c.train_config(0), TrainConfig { total_steps: 2000, ..TrainConfig::default() });
    }

    #[test]
    fn layering_order() {
        let mut s = Settings::default();
        s.merge_text("# comment\nseed = 5\nsigma_max = auto  # estimate\nsteps=10\n", "run.cfg").unwrap();
        s.set("seed", "9", "flag").unwrap();
        let c = s.resolve().unwrap();
        assert_eq!((c.seed, c.sigma_max, c.steps), (9, None, 10));
        let echo = s.echo("train", &[]);
        assert!(echo.contains("seed = 9  # flag"));
        assert!(echo.contains("steps = 10  # run.cfg:4"));
        assert!(echo.contains(VERSION));
    }

    #[test]
    fn echo_reloads_to_same_config() {
        let mut s = Settings::default();
        s.set("prior", "gaussian", "flag").unwrap();
        s.set("unique_ks", "5,3", "flag").unwrap();
        let mut again = Settings::default();
        again.merge_text(&s.echo("sample", &[("checkpoint", "x.bin".into())]), "echo").unwrap();
        assert_eq!(again.resolve().unwrap(), s.resolve().unwrap());
    }

    #[test]
    fn errors() {
        let mut s = Settings::default();
        assert!(matches!(s.merge_text("lr = 1\n", "f"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(s.merge_text("seed\n", "f"), Err(ConfigError::Malformed { line: 1, .. })));
        s.set("prior", "cauchy", "flag").unwrap();
        assert!(s.resolve().unwrap_err().to_string().contains("prior"));
        let mut s = Settings::default();
        s.set("threads", "0", "flag").unwrap();
        assert!(s.resolve().is_err());
        let mut s = Settings::default();
        s.set("n", "-3", "flag").unwrap();
        assert!(s.resolve().is_err());
    }
}
