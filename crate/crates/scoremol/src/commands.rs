//! The five CLI commands as library calls. Each writes into one run
//! directory and echoes its resolved configuration to `config.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand_distr::{Distribution, StandardNormal};
use scoremol_core::metrics::{descriptors, full_report, MetricsError, MetricsReport, DESCRIPTOR_DIM, DESCRIPTOR_NAMES};
use scoremol_core::model::{ModelError, ScoreNetwork};
use scoremol_core::oracles::{histogram_mode_weights, GaussianMixture, OracleError, SmoothedMixtureScore};
use scoremol_core::rng::stream;
use scoremol_core::sampler::{plain_langevin_chain, step_size, SampleError};
use scoremol_core::schedule::{estimate_sigma_max, NoiseSchedule, ScheduleError};
use scoremol_core::selfies::{decode_argmax, derive_graph, tokenize, OneHotSequence, Vocabulary};
use scoremol_core::train::{TraceRow, TrainError, Trainer};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, OracleMode, RunConfig, Settings};
use crate::dataset::{self, DatasetError, Entry};
use crate::mixture::{read_mixture, MixtureFileError};
use crate::parallel::Pool;
use crate::{plot, report};

/// Chains decoded and written per batch while sampling.
const SAMPLE_CHUNK: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("vocabulary {} not found; run `scoremol prepare <dataset>` first and pass its vocab.txt with --vocab", .0.display())]
    MissingVocab(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Mixture(#[from] MixtureFileError),
    #[error("schedule: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("sampling: {0}")]
    Sample(#[from] SampleError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `run/<timestamp>-<tag>` unless an explicit directory is given.
pub fn run_dir(out: Option<&Path>, tag: &str) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => Path::new("run").join(format!("{}-{tag}", chrono::Local::now().format("%Y%m%d-%H%M%S"))),
    }
}

fn open_run(out: &Path, settings: &Settings, command: &str, inputs: &[(&str, String)]) -> Result<RunConfig, CliError> {
    let config = settings.resolve()?;
    create_dir(out)?;
    write_file(&out.join("config.txt"), settings.echo(command, inputs))?;
    Ok(config)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareStats {
    pub strings: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Occurrences per vocabulary token, in id order.
    pub token_counts: Vec<(String, usize)>,
}

pub fn prepare(dataset_path: &Path, out: &Path, settings: &Settings) -> Result<PrepareStats, CliError> {
    open_run(out, settings, "prepare", &[("dataset", show(dataset_path))])?;
    let entries = dataset::read_corpus(dataset_path)?;
    let vocab = dataset::corpus_vocabulary(dataset_path, &entries)?;
    let max_len = dataset::max_token_len(&entries);

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        for t in tokenize(&e.selfies).expect("validated on read") {
            *counts.entry(t).or_default() += 1;
        }
    }
    let token_counts: Vec<(String, usize)> =
        vocab.tokens().iter().map(|t| (t.clone(), counts.get(t.as_str()).copied().unwrap_or(0))).collect();

    dataset::write_vocabulary(&out.join("vocab.txt"), &vocab)?;
    let mut csv = String::from("kind,name,value\n");
    csv.push_str(&format!("summary,strings,{}\nsummary,vocab_size,{}\nsummary,max_len,{}\n", entries.len(), vocab.len(), max_len));
    for (t, c) in &token_counts {
        csv.push_str(&format!("token,{t},{c}\n"));
    }
    write_file(&out.join("stats.csv"), csv)?;
    info!("{} strings, {} tokens in vocabulary, longest string {max_len} tokens", entries.len(), vocab.len());
    Ok(PrepareStats { strings: entries.len(), vocab_size: vocab.len(), max_len, token_counts })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub trace: Vec<TraceRow>,
    pub checkpoint: PathBuf,
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    if !path.exists() {
        return Err(CliError::MissingVocab(path.to_path_buf()));
    }
    Ok(dataset::read_vocabulary(path)?)
}

pub struct TrainArgs<'a> {
    pub dataset: &'a Path,
    pub vocab: &'a Path,
    pub resume: Option<&'a Path>,
}

/// Trains `repeats` networks (seeds `seed`, `seed + 1`, ...). With more than
/// one repeat each gets a `repeat-<r>` subdirectory.
pub fn train(args: &TrainArgs<'_>, out: &Path, settings: &Settings) -> Result<Vec<TrainOutcome>, CliError> {
    let mut inputs = vec![("dataset", show(args.dataset)), ("vocab", show(args.vocab))];
    if let Some(r) = args.resume {
        inputs.push(("resume", show(r)));
    }
    let config = open_run(out, settings, "train", &inputs)?;
    let vocab = load_vocab(args.vocab)?;
    dataset::write_vocabulary(&out.join("vocab.txt"), &vocab)?;
    let entries = dataset::read_corpus(args.dataset)?;
    let pool = Pool::new(config.threads)?;

    if let Some(resume) = args.resume {
        if config.repeats > 1 {
            return Err(CliError::Usage("--resume continues a single run; drop --repeats".into()));
        }
        let mut ckpt = Checkpoint::load(resume)?;
        ckpt.train.total_steps = config.steps;
        if ckpt.vocab != vocab {
            return Err(CliError::Usage(format!("{} was trained with a different vocabulary", show(resume))));
        }
        let data = encode(args.dataset, &entries, &vocab, ckpt.network.config().max_len)?;
        let trainer = ckpt.into_trainer()?;
        return Ok(vec![train_loop(trainer, &vocab, &data, &config, &pool, out)?]);
    }

    let max_len = config.max_len.unwrap_or_else(|| dataset::max_token_len(&entries).max(1));
    let data = encode(args.dataset, &entries, &vocab, max_len)?;
    let sigma_max = match config.sigma_max {
        Some(s) => s,
        None => {
            let s = estimate_sigma_max(&data, config.pair_budget, config.seed)?;
            info!("estimated sigma_max = {s}");
            s
        }
    };
    let schedule = NoiseSchedule::geometric(config.sigma_min, sigma_max, config.num_levels)?;

    let mut outcomes = Vec::new();
    for r in 0..config.repeats {
        let seed = config.seed + r;
        let dir = if config.repeats > 1 { out.join(format!("repeat-{r}")) } else { out.to_path_buf() };
        create_dir(&dir)?;
        let net = ScoreNetwork::init(config.net_config(vocab.len(), max_len), seed)?;
        info!("repeat {r}: seed {seed}, {} parameters, {} levels", net.num_parameters(), schedule.num_levels());
        let trainer = Trainer::new(net, schedule.clone(), config.train_config(seed))?;
        outcomes.push(train_loop(trainer, &vocab, &data, &config, &pool, &dir)?);
    }
    Ok(outcomes)
}

fn encode(path: &Path, entries: &[Entry], vocab: &Vocabulary, max_len: usize) -> Result<Vec<OneHotSequence>, CliError> {
    Ok(dataset::encode_corpus(path, entries, vocab, max_len)?)
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt-{step:06}.bin"))
}

/// Trains until `steps` total steps have been taken.
fn train_loop(
    mut trainer: Trainer,
    vocab: &Vocabulary,
    data: &[OneHotSequence],
    config: &RunConfig,
    pool: &Pool,
    dir: &Path,
) -> Result<TrainOutcome, CliError> {
    let every = trainer.config().checkpoint_every;
    let mut trace = Vec::new();
    while trainer.step() < config.steps {
        let row = trainer.train_step(data, pool)?;
        if row.step % 100 == 0 {
            info!("step {} loss {:.4} mean sigma {:.4}", row.step, row.loss, row.level_mean_sigma);
        }
        trace.push(row);
        if trainer.step() % every == 0 {
            Checkpoint::from_trainer(&trainer, vocab).save(&checkpoint_path(dir, trainer.step()))?;
        }
    }
    let checkpoint = checkpoint_path(dir, trainer.step());
    if trace.is_empty() || trainer.step() % every != 0 {
        Checkpoint::from_trainer(&trainer, vocab).save(&checkpoint)?;
    }

    let mut csv = String::from("step,level_mean_sigma,loss\n");
    for r in &trace {
        csv.push_str(&format!("{},{},{}\n", r.step, r.level_mean_sigma, r.loss));
    }
    write_file(&dir.join("loss.csv"), csv)?;
    let points: Vec<(f64, f64)> = trace.iter().map(|r| (r.step as f64, r.loss)).collect();
    write_file(&dir.join("loss.svg"), plot::line_chart("training loss", "step", "loss", &points, true))?;
    Ok(TrainOutcome { dir: dir.to_path_buf(), trace, checkpoint })
}

/// Per-sample decoding record.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub selfies: String,
    pub tokens: usize,
    pub atoms: usize,
    /// Smallest and mean gap between the two largest entries of a column.
    pub min_margin: f64,
    pub mean_margin: f64,
}

fn decode_field(field: Vec<f64>, vocab: &Vocabulary, max_len: usize) -> Result<Generated, CliError> {
    let x = OneHotSequence::soft(vocab.len(), max_len, field).map_err(|e| CliError::Usage(e.to_string()))?;
    let selfies = decode_argmax(&x, vocab);
    let toks = tokenize(&selfies).expect("decoded from vocabulary tokens");
    let atoms = derive_graph(&toks).num_atoms();
    let margins: Vec<f64> = (0..max_len)
        .map(|j| {
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in 0..vocab.len() {
                let y = x.get(v, j);
                if y > a {
                    b = a;
                    a = y;
                } else if y > b {
                    b = y;
                }
            }
            if b.is_finite() { a - b } else { 0.0 }
        })
        .collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_margin = margins.iter().sum::<f64>() / max_len as f64;
    Ok(Generated { tokens: toks.len(), selfies, atoms, min_margin, mean_margin })
}

/// Draws `n` samples from a checkpoint, writing `samples.selfies` and
/// `generation.csv` as chains complete.
pub fn sample(checkpoint: &Path, out: &Path, settings: &Settings) -> Result<usize, CliError> {
    let config = open_run(out, settings, "sample", &[("checkpoint", show(checkpoint))])?;
    if config.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let sampler = config.sampler_config();
    sampler.validate()?;
    let net = &ckpt.network;
    let max_len = net.config().max_len;
    let pool = Pool::new(config.threads)?;

    let open = |name: &str| -> Result<(PathBuf, BufWriter<fs::File>), CliError> {
        let p = out.join(name);
        let f = fs::File::create(&p).map_err(|source| CliError::Io { path: p.clone(), source })?;
        Ok((p, BufWriter::new(f)))
    };
    let (sp, mut samples) = open("samples.selfies")?;
    let (gp, mut log) = open("generation.csv")?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CliError::Io { path: p, source }
    };
    writeln!(log, "index,selfies,tokens,atoms,min_margin,mean_margin").map_err(io(&gp))?;

    let mut done = 0;
    while done < config.n {
        let count = SAMPLE_CHUNK.min(config.n - done);
        let fields = pool.chains(net, &ckpt.schedule, &sampler, done as u64, count)?;
        for (k, field) in fields.into_iter().enumerate() {
            let g = decode_field(field, &ckpt.vocab, max_len)?;
            writeln!(samples, "{}", g.selfies).map_err(io(&sp))?;
            writeln!(log, "{},{},{},{},{},{}", done + k, g.selfies, g.tokens, g.atoms, g.min_margin, g.mean_margin)
                .map_err(io(&gp))?;
        }
        done += count;
        info!("{done}/{} samples", config.n);
    }
    samples.flush().map_err(io(&sp))?;
    log.flush().map_err(io(&gp))?;
    Ok(done)
}

pub struct EvalArgs<'a> {
    /// One file per repeat; metrics are averaged across them.
    pub generated: &'a [PathBuf],
    pub train_ref: &'a Path,
    pub test_ref: Option<&'a Path>,
}

/// Writes `report.csv`, `report.txt` and one descriptor histogram per
/// descriptor.
pub fn eval(args: &EvalArgs<'_>, out: &Path, settings: &Settings) -> Result<Vec<report::Row>, CliError> {
    if args.generated.is_empty() {
        return Err(CliError::Usage("at least one generated file is required".into()));
    }
    let mut inputs: Vec<(&str, String)> = args.generated.iter().map(|p| ("generated", show(p))).collect();
    inputs.push(("train_ref", show(args.train_ref)));
    if let Some(t) = args.test_ref {
        inputs.push(("test_ref", show(t)));
    }
    let config = open_run(out, settings, "eval", &inputs)?;
    let opts = config.report_options();

    let train = dataset::read_corpus(args.train_ref)?;
    let (test, fdd_label) = match args.test_ref {
        Some(p) => (dataset::read_corpus(p)?, "FDD/Test"),
        None => {
            warn!("no test reference; FDD is computed against the training reference");
            (train.clone(), "FDD/Train")
        }
    };
    let train = dataset::strings(&train);
    let test = dataset::strings(&test);

    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut first_generated: Vec<String> = Vec::new();
    for (i, path) in args.generated.iter().enumerate() {
        let generated: Vec<String> = dataset::read_selfies(path, true)?.into_iter().map(|e| e.selfies).collect();
        let gen: Vec<&str> = generated.iter().map(String::as_str).collect();
        let r = full_report(&gen, &train, &test, &opts)?;
        for (k, v) in &r.unique {
            if v.is_none() {
                warn!("{}: {} samples, fewer than {k}; uniqueness at {k} is absent", show(path), r.n_generated);
            }
        }
        reports.push(r);
        if i == 0 {
            first_generated = generated;
        }
    }
    let rows = report::summarize(&reports, fdd_label);
    write_file(&out.join("report.csv"), report::to_csv(&rows))?;
    write_file(&out.join("report.txt"), report::to_table(&rows))?;

    let gen_desc = descriptor_columns(&first_generated);
    let ref_desc = descriptor_columns(&test);
    let ref_name = if args.test_ref.is_some() { "test" } else { "train" };
    for d in 0..DESCRIPTOR_DIM {
        let svg = plot::histograms(
            DESCRIPTOR_NAMES[d],
            DESCRIPTOR_NAMES[d],
            &[("generated", &gen_desc[d]), (ref_name, &ref_desc[d])],
            20,
        );
        write_file(&out.join(format!("desc-{}.svg", DESCRIPTOR_NAMES[d])), svg)?;
    }
    Ok(rows)
}

fn descriptor_columns<S: AsRef<str>>(strings: &[S]) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(strings.len()); DESCRIPTOR_DIM];
    for s in strings {
        let toks = tokenize(s.as_ref()).expect("parsed by full_report");
        for (c, v) in cols.iter_mut().zip(descriptors(&derive_graph(&toks), toks.len())) {
            c.push(v);
        }
    }
    cols
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSummary {
    pub mode: &'static str,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

fn summarize_samples(mode: &'static str, xs: &[Vec<f64>], m: &GaussianMixture) -> Result<ModeSummary, CliError> {
    let weights = if m.num_components() > 1 { histogram_mode_weights(xs, m.means())? } else { vec![1.0] };
    let n = xs.len() as f64;
    let d = m.dim();
    let mean: Vec<f64> = (0..d).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let variance = (0..d)
        .map(|k| xs.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect();
    Ok(ModeSummary { mode, weights, mean, variance })
}

/// Annealed chains against the exact smoothed-mixture score.
pub fn oracle_annealed(m: &GaussianMixture, config: &RunConfig, pool: &Pool) -> Result<Vec<Vec<f64>>, CliError> {
    let schedule = oracle_schedule(config)?;
    let score = SmoothedMixtureScore::new(m.clone());
    Ok(pool.chains(&score, &schedule, &config.sampler_config(), 0, config.n)?)
}

/// Plain Langevin at `sigma_min` from `N(first component mean, I)`, with
/// the smallest annealed step size.
pub fn oracle_plain(m: &GaussianMixture, config: &RunConfig, pool: &Pool) -> Result<Vec<Vec<f64>>, CliError> {
    let schedule = oracle_schedule(config)?;
    let score = SmoothedMixtureScore::new(m.clone());
    let sigma = schedule.sigma_min();
    let alpha = step_size(&schedule, schedule.num_levels() - 1, config.epsilon);
    let steps = config.plain_steps.unwrap_or(schedule.num_levels() * config.steps_per_level);
    let start = &m.means()[0];
    pool.map(config.n, |i| {
        let mut rng = stream(config.seed, i as u64);
        let init = start.iter().map(|c| c + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        plain_langevin_chain(&score, init, sigma, alpha, steps, &mut rng)
    })
    .into_iter()
    .collect::<Result<_, _>>()
    .map_err(CliError::from)
}

fn oracle_schedule(config: &RunConfig) -> Result<NoiseSchedule, CliError> {
    let sigma_max = config
        .sigma_max
        .ok_or_else(|| CliError::Usage("oracle runs need a numeric sigma_max".into()))?;
    Ok(NoiseSchedule::geometric(config.sigma_min, sigma_max, config.num_levels)?)
}

/// Samples a mixture file with the analytic score and reports mode weights
/// and moments per sampler.
pub fn oracle(mixture: &Path, out: &Path, settings: &Settings) -> Result<Vec<ModeSummary>, CliError> {
    let config = open_run(out, settings, "oracle", &[("mixture", show(mixture))])?;
    if config.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let m = read_mixture(mixture)?;
    let pool = Pool::new(config.threads)?;
    let mut runs: Vec<(&'static str, Vec<Vec<f64>>)> = Vec::new();
    if matches!(config.mode, OracleMode::Plain | OracleMode::Both) {
        runs.push(("plain", oracle_plain(&m, &config, &pool)?));
    }
    if matches!(config.mode, OracleMode::Annealed | OracleMode::Both) {
        runs.push(("annealed", oracle_annealed(&m, &config, &pool)?));
    }

    let mut samples = String::from("mode,index");
    for k in 0..m.dim() {
        samples.push_str(&format!(",x{k}"));
    }
    samples.push('\n');
    let mut weights = String::from("mode,component,weight,target\n");
    let mut moments = String::from("mode,dim,mean,variance\n");
    let mut summaries = Vec::new();
    for (mode, xs) in &runs {
        for (i, x) in xs.iter().enumerate() {
            let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            samples.push_str(&format!("{mode},{i},{}\n", cells.join(",")));
        }
        let s = summarize_samples(mode, xs, &m)?;
        for (k, (w, t)) in s.weights.iter().zip(m.weights()).enumerate() {
            weights.push_str(&format!("{mode},{k},{w},{t}\n"));
        }
        for k in 0..m.dim() {
            moments.push_str(&format!("{mode},{k},{},{}\n", s.mean[k], s.variance[k]));
        }
        info!("{mode}: mode weights {:?}", s.weights);
        summaries.push(s);
    }
    write_file(&out.join("samples.csv"), samples)?;
    write_file(&out.join("mode_weights.csv"), weights)?;
    write_file(&out.join("moments.csv"), moments)?;
    Ok(summaries)
}
