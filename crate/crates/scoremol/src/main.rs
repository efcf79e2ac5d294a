use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use scoremol::commands::{self, CliError, EvalArgs, TrainArgs};
use scoremol::config::{Settings, KEYS};

#[derive(Parser)]
#[command(name = "scoremol", version, about = "Score-based generation of SELFIES molecules")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (default: run/<timestamp>-<command>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` config file, applied before flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Any config key, repeatable: --set num_levels=30
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and corpus statistics
    Prepare { dataset: PathBuf },
    /// Train a score network
    Train {
        dataset: PathBuf,
        /// vocab.txt written by `prepare` (default: next to the dataset)
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Continue from a checkpoint up to --steps total steps
        #[arg(long)]
        resume: Option<PathBuf>,
        /// A number, or `auto` to estimate from the corpus
        #[arg(long)]
        sigma_max: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        repeats: Option<u64>,
    },
    /// Draw samples from a checkpoint
    Sample {
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        steps_per_level: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// `uniform` or `gaussian`
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        no_final_denoise: bool,
    },
    /// Score generated molecules against reference sets
    Eval {
        /// One file per repeat
        #[arg(required = true)]
        generated: Vec<PathBuf>,
        #[arg(long)]
        train_ref: PathBuf,
        /// Defaults to the training reference for FDD
        #[arg(long)]
        test_ref: Option<PathBuf>,
    },
    /// Sample a Gaussian mixture with its exact score
    Oracle {
        mixture: PathBuf,
        /// `plain`, `annealed` or `both`
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn settings(shared: &Shared, flags: &[(&str, Option<String>)]) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(p) = &shared.config {
        s.merge_file(p)?;
    }
    for kv in &shared.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.set(k.trim(), v.trim(), "--set")?;
    }
    let common = [("seed", shared.seed.map(|v| v.to_string())), ("threads", shared.threads.map(|v| v.to_string()))];
    for (k, v) in common.iter().chain(flags) {
        if let Some(v) = v {
            s.set(k, v, "flag")?;
        }
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = |tag| commands::run_dir(cli.shared.out.as_deref(), tag);
    match &cli.command {
        Command::Prepare { dataset } => {
            let s = settings(&cli.shared, &[])?;
            commands::prepare(dataset, &out("prepare"), &s)?;
        }
        Command::Train { dataset, vocab, resume, sigma_max, steps, repeats } => {
            let s = settings(
                &cli.shared,
                &[
                    ("sigma_max", sigma_max.clone()),
                    ("steps", steps.map(|v| v.to_string())),
                    ("repeats", repeats.map(|v| v.to_string())),
                ],
            )?;
            let vocab = vocab.clone().unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).join("vocab.txt"));
            let args = TrainArgs { dataset, vocab: &vocab, resume: resume.as_deref() };
            commands::train(&args, &out("train"), &s)?;
        }
        Command::Sample { checkpoint, n, steps_per_level, epsilon, prior, no_final_denoise } => {
            let s = settings(
                &cli.shared,
                &[
                    ("n", n.map(|v| v.to_string())),
                    ("steps_per_level", steps_per_level.map(|v| v.to_string())),
                    ("epsilon", epsilon.map(|v| v.to_string())),
                    ("prior", prior.clone()),
                    ("final_denoise", no_final_denoise.then(|| "false".to_string())),
                ],
            )?;
            commands::sample(checkpoint, &out("sample"), &s)?;
        }
        Command::Eval { generated, train_ref, test_ref } => {
            let s = settings(&cli.shared, &[])?;
            let args = EvalArgs { generated, train_ref, test_ref: test_ref.as_deref() };
            let rows = commands::eval(&args, &out("eval"), &s)?;
            print!("{}", scoremol::report::to_table(&rows));
        }
        Command::Oracle { mixture, mode, n } => {
            let s = settings(&cli.shared, &[("mode", mode.clone()), ("n", n.map(|v| v.to_string()))])?;
            for m in commands::oracle(mixture, &out("oracle"), &s)? {
                println!("{:<8} weights {:?} mean {:?} variance {:?}", m.mode, m.weights, m.mean, m.variance);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            error!("{msg}");
            eprintln!("config keys: {}", KEYS.iter().map(|k| k.0).collect::<Vec<_>>().join(", "));
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
