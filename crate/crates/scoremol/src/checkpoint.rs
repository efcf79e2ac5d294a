//! Binary checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "MSCR" | version: u32 | header_len: u32 | header (UTF-8 key=value lines)
//!        | f64 arrays: parameters, first moments, second moments
//!        | checksum: u64 (first 8 bytes of SHA-256 over everything before it)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use scoremol_core::kernel::Tensor;
use scoremol_core::model::{Conditioning, ScoreNetConfig, ScoreNetwork};
use scoremol_core::rng::RngState;
use scoremol_core::schedule::{LambdaMode, NoiseSchedule};
use scoremol_core::selfies::Vocabulary;
use scoremol_core::train::{Moments, TrainConfig, TrainError, Trainer};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"MSCR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint has {extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("checkpoint {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Everything needed to resume training or to sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: ScoreNetwork,
    pub schedule: NoiseSchedule,
    pub vocab: Vocabulary,
    pub train: TrainConfig,
    pub moments: Moments,
    pub step: u64,
    pub rng: RngState,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn join<T: std::fmt::Display>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, vocab: &Vocabulary) -> Self {
        Self {
            network: trainer.network().clone(),
            schedule: trainer.schedule().clone(),
            vocab: vocab.clone(),
            train: trainer.config().clone(),
            moments: trainer.moments().clone(),
            step: trainer.step(),
            rng: trainer.rng_state(),
        }
    }

    pub fn into_trainer(self) -> Result<Trainer, CheckpointError> {
        Ok(Trainer::resume(self.network, self.schedule, self.train, self.moments, self.step, &self.rng)?)
    }

    fn header(&self) -> String {
        let c = self.network.config();
        let t = &self.train;
        let mut h = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(h, "{k}={v}");
        };
        kv("vocab_size", c.vocab_size.to_string());
        kv("max_len", c.max_len.to_string());
        kv("d_model", c.d_model.to_string());
        kv("n_layers", c.n_layers.to_string());
        kv("n_heads", c.n_heads.to_string());
        kv("ff_width", c.ff_width.to_string());
        kv("conditioning", "output_sigma_scaling".into());
        kv("lambda", "sigma_squared".into());
        kv("sigmas", join(self.schedule.sigmas(), ","));
        kv("step", self.step.to_string());
        kv("rng_seed", self.rng.seed.iter().map(|b| format!("{b:02x}")).collect());
        kv("rng_stream", self.rng.stream.to_string());
        kv("rng_word_pos", self.rng.word_pos.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("total_steps", t.total_steps.to_string());
        kv("beta1", t.beta1.to_string());
        kv("beta2", t.beta2.to_string());
        kv("eps", t.eps.to_string());
        kv("seed", t.seed.to_string());
        kv("checkpoint_every", t.checkpoint_every.to_string());
        for tok in self.vocab.tokens() {
            kv("token", tok.clone());
        }
        for (name, shape) in c.parameter_shapes() {
            kv("param", format!("{name} {}", join(&shape, "x")));
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let arrays = self.network.parameters().iter().chain(&self.moments.m).chain(&self.moments.v);
        for t in arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 {
            return Err(CheckpointError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        if bytes.len() < 20 {
            return Err(CheckpointError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = checksum(body);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed });
        }

        let header_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12usize.checked_add(header_len).ok_or(CheckpointError::Truncated)?;
        if body.len() < header_end {
            return Err(CheckpointError::Truncated);
        }
        let header = std::str::from_utf8(&body[12..header_end])
            .map_err(|_| CheckpointError::Header("header is not UTF-8".into()))?;
        let h = Header::parse(header)?;

        let config = ScoreNetConfig {
            vocab_size: h.get("vocab_size")?,
            max_len: h.get("max_len")?,
            d_model: h.get("d_model")?,
            n_layers: h.get("n_layers")?,
            n_heads: h.get("n_heads")?,
            ff_width: h.get("ff_width")?,
            conditioning: match h.one("conditioning")? {
                "output_sigma_scaling" => Conditioning::OutputSigmaScaling,
                other => return Err(CheckpointError::Header(format!("unknown conditioning {other}"))),
            },
        };
        config.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
        if h.one("lambda")? != "sigma_squared" {
            return Err(CheckpointError::Header("unknown lambda mode".into()));
        }
        let shapes = config.parameter_shapes();
        let listed: Vec<&str> = h.all("param");
        let expected: Vec<String> = shapes.iter().map(|(n, s)| format!("{n} {}", join(s, "x"))).collect();
        if listed != expected {
            return Err(CheckpointError::Header("parameter list does not match the network config".into()));
        }

        let sigmas = h
            .one("sigmas")?
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|_| CheckpointError::Header(format!("bad sigma {s}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let schedule = NoiseSchedule::from_sigmas(sigmas).map_err(|e| CheckpointError::Header(e.to_string()))?;
        debug_assert_eq!(schedule.lambda_mode(), LambdaMode::SigmaSquared);

        let vocab = Vocabulary::from_tokens(h.all("token").into_iter().map(String::from).collect())
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        if vocab.len() != config.vocab_size {
            return Err(CheckpointError::Header("vocabulary size does not match the network".into()));
        }

        let seed_hex = h.one("rng_seed")?;
        if seed_hex.len() != 64 {
            return Err(CheckpointError::Header("rng_seed must be 64 hex digits".into()));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| CheckpointError::Header("rng_seed is not hex".into()))?;
        }
        let rng = RngState { seed, stream: h.get("rng_stream")?, word_pos: h.get("rng_word_pos")? };

        let train = TrainConfig {
            batch_size: h.get("batch_size")?,
            learning_rate: h.get("learning_rate")?,
            total_steps: h.get("total_steps")?,
            beta1: h.get("beta1")?,
            beta2: h.get("beta2")?,
            eps: h.get("eps")?,
            seed: h.get("seed")?,
            checkpoint_every: h.get("checkpoint_every")?,
        };

        let mut data = &body[header_end..];
        let mut read_set = || -> Result<Vec<Tensor>, CheckpointError> {
            shapes
                .iter()
                .map(|(_, shape)| {
                    let n: usize = shape.iter().product();
                    if data.len() < n * 8 {
                        return Err(CheckpointError::Truncated);
                    }
                    let (chunk, rest) = data.split_at(n * 8);
                    data = rest;
                    let vals =
                        chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    Tensor::new(shape, vals).map_err(|e| CheckpointError::Header(e.to_string()))
                })
                .collect()
        };
        let params = read_set()?;
        let m = read_set()?;
        let v = read_set()?;
        if !data.is_empty() {
            return Err(CheckpointError::TrailingBytes { extra: data.len() });
        }
        let network = ScoreNetwork::from_parameters(config, params).map_err(|e| CheckpointError::Header(e.to_string()))?;
        Ok(Self { network, schedule, vocab, train, moments: Moments { m, v }, step: h.get("step")?, rng })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Header<'a> {
    entries: Vec<(&'a str, &'a str)>,
}

impl<'a> Header<'a> {
    fn parse(text: &'a str) -> Result<Self, CheckpointError> {
        let entries = text
            .lines()
            .map(|l| l.split_once('=').ok_or_else(|| CheckpointError::Header(format!("malformed line {l:?}"))))
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    fn all(&self, key: &str) -> Vec<&'a str> {
        self.entries.iter().filter(|(k, _)| *k == key).map(|(_, v)| *v).collect()
    }

    fn one(&self, key: &str) -> Result<&'a str, CheckpointError> {
        match self.all(key).as_slice() {
            [v] => Ok(v),
            [] => Err(CheckpointError::Header(format!("missing {key}"))),
            _ => Err(CheckpointError::Header(format!("duplicate {key}"))),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let v = self.one(key)?;
        v.parse().map_err(|_| CheckpointError::Header(format!("bad value for {key}: {v}")))
    }
}
