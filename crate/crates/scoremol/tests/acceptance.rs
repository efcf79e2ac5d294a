//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use scoremol::checkpoint::{Checkpoint, CheckpointError};
use scoremol::commands::{self, EvalArgs, TrainArgs};
use scoremol::config::Settings;
use scoremol::dataset::{encode_corpus, read_corpus, read_vocabulary};
use scoremol::parallel::Pool;
use scoremol_core::metrics::{
    circular_fingerprint, circular_identifiers, frechet_descriptor_distance, full_report, ReportOptions,
};
use scoremol_core::model::{ScoreNetConfig, ScoreNetwork};
use scoremol_core::rng::seeded;
use scoremol_core::schedule::{estimate_sigma_max, NoiseSchedule};
use scoremol_core::selfies::{decode_argmax, derive_graph, tokenize, Element, OneHotSequence, INDEX_ALPHABET};
use scoremol_core::train::{dsm_loss, dsm_loss_and_grads, Sequential, TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn settings(pairs: &[(&str, &str)]) -> Settings {
    let mut s = Settings::default();
    for (k, v) in pairs {
        s.set(k, v, "acceptance").unwrap();
    }
    s
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Outcome {
    check(elapsed.as_secs() < limit_s, format!("{detail}; {:.1}s (limit {limit_s}s)", elapsed.as_secs_f64()))
}

fn fuzz_alphabet() -> Vec<String> {
    let mut tokens: Vec<String> = INDEX_ALPHABET.iter().map(|t| t.to_string()).collect();
    for e in Element::ALL {
        for prefix in ["", "=", "#"] {
            tokens.push(format!("[{prefix}{}]", e.symbol()));
        }
    }
    tokens.extend(["[Branch1]", "[Branch2]", "[Ring1]", "[Ring2]", "[Xe]", "[PAD]"].map(String::from));
    tokens.sort();
    tokens.dedup();
    tokens
}

fn validity() -> Outcome {
    let start = Instant::now();
    let alphabet = fuzz_alphabet();
    let mut rng = seeded(1);
    let mut invalid = 0;
    for _ in 0..100_000 {
        let len = rng.random_range(0..=30);
        let s: String = (0..len).map(|_| alphabet.choose(&mut rng).unwrap().as_str()).collect();
        if !derive_graph(&tokenize(&s).unwrap()).is_valence_valid() {
            invalid += 1;
        }
    }

    // samples from a desk-size network on the toy vocabulary
    let entries = read_corpus(&data("toy.selfies")).unwrap();
    let vocab = scoremol::dataset::corpus_vocabulary(&data("toy.selfies"), &entries).unwrap();
    let max_len = scoremol::dataset::max_token_len(&entries);
    let net = ScoreNetwork::init(ScoreNetConfig::desk(vocab.len(), max_len), 1).unwrap();
    let schedule = NoiseSchedule::geometric(0.01, 10.0, 30).unwrap();
    let s = settings(&[("steps_per_level", "2"), ("seed", "1")]);
    let cfg = s.resolve().unwrap().sampler_config();
    let fields = Pool::new(1).unwrap().chains(&net, &schedule, &cfg, 0, 1000).unwrap();
    let mut invalid_samples = 0;
    for f in fields {
        let x = OneHotSequence::soft(vocab.len(), max_len, f).unwrap();
        let s = decode_argmax(&x, &vocab);
        if !derive_graph(&tokenize(&s).unwrap()).is_valence_valid() {
            invalid_samples += 1;
        }
    }
    let ok = invalid == 0 && invalid_samples == 0;
    let detail = format!("{invalid}/100000 fuzzed and {invalid_samples}/1000 sampled graphs invalid");
    if ok {
        within(start.elapsed(), 120, detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let v = rng.random_range(2..=8);
        let l = rng.random_range(2..=6);
        let heads = *[1, 2, 4].choose(&mut rng).unwrap();
        let d = heads * rng.random_range(1..=16 / heads);
        let layers = rng.random_range(1..=2);
        let net = ScoreNetwork::init(ScoreNetConfig::with_size(v, l, d, layers, heads), trial).unwrap();
        let batch: Vec<OneHotSequence> = (0..2)
            .map(|_| OneHotSequence::from_ids(v, &(0..l).map(|_| rng.random_range(0..v)).collect::<Vec<_>>()).unwrap())
            .collect();
        let schedule = NoiseSchedule::geometric(0.05, 3.0, 6).unwrap();
        let seed = 100 + trial;
        let (_, grads) = dsm_loss_and_grads(&net, &batch, &schedule, seed).unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for i in 0..g.len() {
                let mut plus = net.clone();
                plus.parameters_mut()[pi].data_mut()[i] += h;
                let mut minus = net.clone();
                minus.parameters_mut()[pi].data_mut()[i] -= h;
                let fd = (dsm_loss(&plus, &batch, &schedule, seed).unwrap()
                    - dsm_loss(&minus, &batch, &schedule, seed).unwrap())
                    / (2.0 * h);
                let an = g.data()[i];
                worst = worst.max((an - fd).abs() / f64::max(1.0, f64::max(an.abs(), fd.abs())));
            }
        }
    }
    let detail = format!("max relative error {worst:.2e} over 50 networks (limit 1e-4)");
    if worst < 1e-4 {
        within(start.elapsed(), 300, detail)
    } else {
        Err(detail)
    }
}

fn dsm_consistency() -> Outcome {
    let start = Instant::now();
    let dim = 8;
    let sigma = 0.5;
    let mut rng = seeded(3);
    let mut draw = |n: usize, scale: f64| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
    };
    // one token per coordinate
    let train: Vec<OneHotSequence> =
        draw(5000, 1.0).into_iter().map(|x| OneHotSequence::soft(1, dim, x).unwrap()).collect();
    let held_out = draw(200, (1.0 + sigma * sigma as f64).sqrt());

    let net = ScoreNetwork::init(ScoreNetConfig::desk(1, dim), 3).unwrap();
    let schedule = NoiseSchedule::from_sigmas(vec![sigma]).unwrap();
    let config = TrainConfig { batch_size: 32, learning_rate: 1e-4, total_steps: 3000, seed: 3, ..Default::default() };
    let mut trainer = Trainer::new(net, schedule, config).unwrap();
    trainer.run(&train, 3000, &Sequential).unwrap();
    let net = trainer.network();

    let (mut cos_sum, mut err2, mut ref2) = (0.0, 0.0, 0.0);
    for x in &held_out {
        let got = net.score(x, sigma).unwrap();
        let want: Vec<f64> = x.iter().map(|v| -v / (1.0 + sigma * sigma)).collect();
        let dot: f64 = got.data().iter().zip(&want).map(|(a, b)| a * b).sum();
        let ng: f64 = got.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nw: f64 = want.iter().map(|a| a * a).sum::<f64>().sqrt();
        cos_sum += dot / (ng * nw);
        err2 += got.data().iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        ref2 += nw * nw;
    }
    let cos = cos_sum / held_out.len() as f64;
    let rel = (err2 / ref2).sqrt();
    let detail = format!("mean cosine {cos:.4} (> 0.99), relative L2 error {rel:.4} (< 0.1)");
    if cos > 0.99 && rel < 0.1 {
        within(start.elapsed(), 600, detail)
    } else {
        Err(detail)
    }
}

fn mode_recovery() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mixture = dir.path().join("mixture.txt");
    fs::write(&mixture, "0.8 1 -5 -5\n0.2 1 5 5\n").unwrap();
    let s = settings(&[
        ("n", "10000"),
        ("sigma_min", "0.01"),
        ("sigma_max", "10"),
        ("num_levels", "30"),
        ("steps_per_level", "10"),
        ("epsilon", "0.00002"),
        ("mode", "both"),
    ]);
    let out = commands::oracle(&mixture, &dir.path().join("o"), &s).unwrap();
    let plain = out.iter().find(|m| m.mode == "plain").unwrap();
    let annealed = out.iter().find(|m| m.mode == "annealed").unwrap();
    let annealed_ok = (annealed.weights[0] - 0.8).abs() <= 0.03 && (annealed.weights[1] - 0.2).abs() <= 0.03;
    let plain_ok = plain.weights[1] < 0.1;
    let detail = format!(
        "annealed weights ({:.4}, {:.4}) vs (0.8, 0.2) ± 0.03 [{}]; plain minor weight {:.4} < 0.1 [{}]",
        annealed.weights[0],
        annealed.weights[1],
        if annealed_ok { "ok" } else { "out of band" },
        plain.weights[1],
        if plain_ok { "ok" } else { "too high" },
    );
    if annealed_ok && plain_ok {
        within(start.elapsed(), 600, detail)
    } else {
        Err(detail)
    }
}

fn schedule_fidelity() -> Outcome {
    let s = NoiseSchedule::geometric(0.01, 10.0, 350).unwrap();
    let sig = s.sigmas();
    let r0 = sig[1] / sig[0];
    let worst_ratio = sig.windows(2).map(|w| (w[1] / w[0] - r0).abs()).fold(0.0, f64::max);
    let mut worst_k = 0.0f64;
    for k in 1..=12usize {
        let l = 12;
        let a: Vec<usize> = vec![1; l];
        let b: Vec<usize> = (0..l).map(|j| if j < k { 2 } else { 1 }).collect();
        let data = [OneHotSequence::from_ids(3, &a).unwrap(), OneHotSequence::from_ids(3, &b).unwrap()];
        let est = estimate_sigma_max(&data, 10, 0).unwrap();
        worst_k = worst_k.max((est - (2.0 * k as f64).sqrt()).abs());
    }
    let ok = sig.len() == 350 && sig[0] == 10.0 && sig[349] == 0.01 && worst_ratio < 1e-12 && worst_k < 1e-12;
    check(
        ok,
        format!(
            "{} levels, endpoints ({}, {}), ratio spread {worst_ratio:.1e}, max |estimate - sqrt(2k)| {worst_k:.1e}",
            sig.len(),
            sig[0],
            sig[349]
        ),
    )
}

fn metric_fixtures() -> Outcome {
    let read = |n: &str| -> Vec<String> {
        fs::read_to_string(data(n)).unwrap().lines().map(String::from).collect()
    };
    let generated = read("fixture_generated.selfies");
    let train = read("fixture_train.selfies");
    let test = read("fixture_test.selfies");
    let opts = ReportOptions { unique_ks: vec![3, 5], ..Default::default() };
    let r = full_report(&generated, &train, &test, &opts).unwrap();

    let mut problems = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64, tol: f64| {
        let ok = if tol == 0.0 { got == want } else { (got - want).abs() <= tol };
        if !ok {
            problems.push(format!("{name} {got} != {want}"));
        }
    };
    expect("Valid", r.valid, 1.0, 0.0);
    expect("Unique@3", r.unique[0].1.unwrap_or(f64::NAN), 2.0 / 3.0, 0.0);
    expect("Unique@5", r.unique[1].1.unwrap_or(f64::NAN), 4.0 / 5.0, 0.0);
    expect("Novelty", r.novelty, 2.0 / 4.0, 0.0);
    expect("Filters", r.filters, 3.0 / 5.0, 0.0);
    // only self pairs and the duplicated pair share bits: 7 of 25 ordered pairs
    expect("IntDiv1", r.intdiv1, 1.0 - 7.0 / 25.0, 0.0);
    expect("IntDiv2", r.intdiv2, 1.0 - (7.0f64 / 25.0).sqrt(), 0.0);
    // the test set adds one skipped token to every string: a unit shift in one descriptor
    expect("FDD", r.fdd.unwrap_or(f64::NAN), 1.0, 1e-9);

    let graphs: Vec<_> = generated.iter().map(|s| derive_graph(&tokenize(s).unwrap())).collect();
    for (i, g) in graphs.iter().enumerate() {
        let ids = circular_identifiers(g, 2).len();
        let bits = circular_fingerprint(g, 2, 2048).unwrap().count_ones();
        if ids != bits {
            problems.push(format!("fingerprint collision in molecule {i}"));
        }
    }

    let mut rng = seeded(6);
    let mut worst_self = 0.0f64;
    for _ in 0..20 {
        let x: Vec<Vec<f64>> =
            (0..60).map(|_| (0..20).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        worst_self = worst_self.max(frechet_descriptor_distance(&x, &x).unwrap());
    }
    if worst_self >= 1e-6 {
        problems.push(format!("FDD(X, X) = {worst_self}"));
    }
    check(problems.is_empty(), if problems.is_empty() {
        format!("fixture values exact, FDD {:.12}, max FDD(X, X) {worst_self:.1e}", r.fdd.unwrap())
    } else {
        problems.join("; ")
    })
}

struct E2eRun {
    loss: Vec<f64>,
    files: Vec<(String, Vec<u8>)>,
    rows: Vec<scoremol::report::Row>,
}

fn e2e_once(root: &Path) -> E2eRun {
    let corpus = data("toy.selfies");
    let s = settings(&[("seed", "7"), ("threads", "1"), ("num_levels", "30"), ("steps", "2000"), ("n", "256")]);
    commands::prepare(&corpus, &root.join("prepare"), &s).unwrap();
    let vocab = root.join("prepare/vocab.txt");
    let args = TrainArgs { dataset: &corpus, vocab: &vocab, resume: None };
    let run = commands::train(&args, &root.join("train"), &s).unwrap().remove(0);
    commands::sample(&run.checkpoint, &root.join("sample"), &s).unwrap();
    let generated = [root.join("sample/samples.selfies")];
    let eval = EvalArgs { generated: &generated, train_ref: &corpus, test_ref: None };
    let rows = commands::eval(&eval, &root.join("eval"), &s).unwrap();
    let files = ["train/loss.csv", "train/ckpt-002000.bin", "sample/samples.selfies", "sample/generation.csv", "eval/report.csv"]
        .iter()
        .map(|f| (f.to_string(), fs::read(root.join(f)).unwrap()))
        .collect();
    E2eRun { loss: run.trace.iter().map(|r| r.loss).collect(), files, rows }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let a = e2e_once(&dir.path().join("a"));
    let b = e2e_once(&dir.path().join("b"));

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let initial = mean(&a.loss[..20]);
    let last = mean(&a.loss[a.loss.len() - 20..]);
    let ratio_names = ["Valid", "Unique@1k", "Novelty", "Filters", "IntDiv1", "IntDiv2"];
    let out_of_range: Vec<&str> = a
        .rows
        .iter()
        .filter(|r| ratio_names.contains(&r.metric.as_str()))
        .filter(|r| r.value.is_some_and(|v| !(0.0..=1.0).contains(&v)))
        .map(|r| r.metric.as_str())
        .collect();
    let differing: Vec<&str> =
        a.files.iter().zip(&b.files).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    let loss_ok = last < 0.5 * initial;
    let detail = format!(
        "loss {initial:.2} -> {last:.2} (ratio {:.3}, need < 0.5); ratios out of [0,1]: {out_of_range:?}; rerun differs in {differing:?}",
        last / initial
    );
    if loss_ok && out_of_range.is_empty() && differing.is_empty() {
        within(start.elapsed(), 1800, detail)
    } else {
        Err(detail)
    }
}

fn checkpoint_round_trip() -> Outcome {
    let corpus = data("toy.selfies");
    let entries = read_corpus(&corpus).unwrap();
    let dir = tempfile::tempdir().unwrap();
    commands::prepare(&corpus, dir.path(), &Settings::default()).unwrap();
    let vocab = read_vocabulary(&dir.path().join("vocab.txt")).unwrap();
    let train = encode_corpus(&corpus, &entries, &vocab, 14).unwrap();

    let net = ScoreNetwork::init(ScoreNetConfig::desk(vocab.len(), 14), 8).unwrap();
    let schedule = NoiseSchedule::geometric(0.01, 10.0, 350).unwrap();
    let mut trainer = Trainer::new(net, schedule, TrainConfig { seed: 8, ..Default::default() }).unwrap();
    trainer.run(&train, 10, &Sequential).unwrap();

    let path = dir.path().join("ckpt.bin");
    Checkpoint::from_trainer(&trainer, &vocab).save(&path).unwrap();
    let mut resumed = Checkpoint::load(&path).unwrap().into_trainer().unwrap();
    let a = trainer.run(&train, 100, &Sequential).unwrap();
    let b = resumed.run(&train, 100, &Sequential).unwrap();
    let same_trace = a == b;
    let same_state = Checkpoint::from_trainer(&trainer, &vocab).to_bytes() == Checkpoint::from_trainer(&resumed, &vocab).to_bytes();

    let bytes = fs::read(&path).unwrap();
    let mut rejected = 0;
    let positions: Vec<usize> = (0..20).map(|k| 12 + k * (bytes.len() - 20) / 20).collect();
    for &p in &positions {
        let mut bad = bytes.clone();
        bad[p] ^= 0x01;
        if matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Checksum { .. })) {
            rejected += 1;
        }
    }
    check(
        same_trace && same_state && rejected == positions.len(),
        format!(
            "resumed trace identical: {same_trace}, final state identical: {same_state}, corrupted copies rejected: {rejected}/{}",
            positions.len()
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 validity", validity),
        ("2 gradient correctness", gradients),
        ("3 score matching consistency", dsm_consistency),
        ("4 annealed mode recovery", mode_recovery),
        ("5 schedule fidelity", schedule_fidelity),
        ("6 metric fixtures", metric_fixtures),
        ("7 end-to-end smoke", end_to_end),
        ("8 checkpoint round-trip", checkpoint_round_trip),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
