//! Generation metrics: validity, uniqueness, novelty, internal diversity,
//! a simplified filter pass rate, and the Fréchet distance between
//! descriptor statistics (FDD).

mod descriptors;
mod fingerprint;
mod frechet;

pub use descriptors::{
    descriptors, passes_filters, FilterReason, DESCRIPTOR_DIM, DESCRIPTOR_NAMES, MAX_HEAVY_ATOMS, MIN_HEAVY_ATOMS,
};
pub use fingerprint::{
    circular_fingerprint, circular_identifiers, internal_diversity, tanimoto, Fingerprint, DEFAULT_RADIUS,
    DEFAULT_WIDTH,
};
pub use frechet::{fit_gaussian, frechet_descriptor_distance, nuclear_norm, sqrt_psd, symmetric_eigen, COVARIANCE_RIDGE};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::selfies::{canonical_hash, derive_graph, tokenize, CodecError, GraphDigest, MolecularGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("uniqueness at {k} needs {k} samples, got {got}")]
    Shortfall { k: usize, got: usize },
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("fingerprint width {0} is not a power of two")]
    BadWidth(usize),
    #[error("diversity power must be at least 1")]
    BadPower,
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("descriptor rows differ in length")]
    DimensionMismatch,
    #[error("{set} line {index}: {source}")]
    Codec { set: &'static str, index: usize, source: CodecError },
}

/// Distinct canonical hashes among the first `k` graphs, over `k`.
pub fn uniqueness_at_k(graphs: &[MolecularGraph], k: usize) -> Result<f64, MetricsError> {
    let hashes: Vec<GraphDigest> = graphs.iter().take(k).map(canonical_hash).collect();
    unique_fraction(&hashes, graphs.len(), k)
}

fn unique_fraction(hashes: &[GraphDigest], available: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::Empty("uniqueness window"));
    }
    if available < k {
        return Err(MetricsError::Shortfall { k, got: available });
    }
    let distinct: BTreeSet<&GraphDigest> = hashes[..k].iter().collect();
    Ok(distinct.len() as f64 / k as f64)
}

/// Fraction of distinct generated hashes not in `training`.
pub fn novelty(generated: &[MolecularGraph], training: &BTreeSet<GraphDigest>) -> Result<f64, MetricsError> {
    let hashes: Vec<GraphDigest> = generated.iter().map(canonical_hash).collect();
    novel_fraction(&hashes, training)
}

fn novel_fraction(hashes: &[GraphDigest], training: &BTreeSet<GraphDigest>) -> Result<f64, MetricsError> {
    if hashes.is_empty() {
        return Err(MetricsError::Empty("generated set"));
    }
    let distinct: BTreeSet<&GraphDigest> = hashes.iter().collect();
    let new = distinct.iter().filter(|h| !training.contains(h)).count();
    Ok(new as f64 / distinct.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportOptions {
    pub unique_ks: Vec<usize>,
    pub radius: usize,
    pub width: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { unique_ks: vec![1000, 10_000], radius: DEFAULT_RADIUS, width: DEFAULT_WIDTH }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub n_generated: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Share of generated graphs that pass valence checks. The empty graph
    /// counts as valid.
    pub valid: f64,
    pub empty: usize,
    /// `(k, value)`; `None` when fewer than `k` samples were generated.
    pub unique: Vec<(usize, Option<f64>)>,
    pub novelty: f64,
    pub intdiv1: f64,
    pub intdiv2: f64,
    pub filters: f64,
    /// `None` when either side has fewer than two molecules.
    pub fdd: Option<f64>,
}

fn k_label(k: usize) -> String {
    if k >= 1000 && k % 1000 == 0 {
        format!("Unique@{}k", k / 1000)
    } else {
        format!("Unique@{k}")
    }
}

impl MetricsReport {
    /// Named values in table order; absent metrics are `None`.
    pub fn rows(&self) -> Vec<(String, Option<f64>)> {
        let mut rows = vec![(String::from("Valid"), Some(self.valid))];
        rows.extend(self.unique.iter().map(|&(k, v)| (k_label(k), v)));
        rows.push((String::from("FDD/Test"), self.fdd));
        rows.push((String::from("Novelty"), Some(self.novelty)));
        rows.push((String::from("Filters"), Some(self.filters)));
        rows.push((String::from("IntDiv1"), Some(self.intdiv1)));
        rows.push((String::from("IntDiv2"), Some(self.intdiv2)));
        rows
    }
}

struct Parsed {
    graphs: Vec<MolecularGraph>,
    token_lens: Vec<usize>,
}

fn parse_set<S: AsRef<str>>(set: &'static str, strings: &[S]) -> Result<Parsed, MetricsError> {
    let mut graphs = Vec::with_capacity(strings.len());
    let mut token_lens = Vec::with_capacity(strings.len());
    for (index, s) in strings.iter().enumerate() {
        let toks = tokenize(s.as_ref()).map_err(|source| MetricsError::Codec { set, index, source })?;
        token_lens.push(toks.len());
        graphs.push(derive_graph(&toks));
    }
    Ok(Parsed { graphs, token_lens })
}

fn descriptor_rows(p: &Parsed) -> Vec<Vec<f64>> {
    p.graphs.iter().zip(&p.token_lens).map(|(g, &t)| descriptors(g, t).to_vec()).collect()
}

/// Every metric for generated strings (in generation order) against a
/// training set (novelty) and a test set (FDD).
pub fn full_report<S: AsRef<str>>(
    generated: &[S],
    train: &[S],
    test: &[S],
    opts: &ReportOptions,
) -> Result<MetricsReport, MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::Empty("generated set"));
    }
    let gen = parse_set("generated", generated)?;
    let train_p = parse_set("train", train)?;
    let test_p = parse_set("test", test)?;
    let n = gen.graphs.len();

    let hashes: Vec<GraphDigest> = gen.graphs.iter().map(canonical_hash).collect();
    let train_hashes: BTreeSet<GraphDigest> = train_p.graphs.iter().map(canonical_hash).collect();

    let valid = gen.graphs.iter().filter(|g| g.is_valence_valid()).count() as f64 / n as f64;
    let empty = gen.graphs.iter().filter(|g| g.is_empty()).count();
    let unique = opts
        .unique_ks
        .iter()
        .map(|&k| (k, unique_fraction(&hashes, n, k).ok()))
        .collect();
    let novelty = novel_fraction(&hashes, &train_hashes)?;

    let fps = gen
        .graphs
        .iter()
        .map(|g| circular_fingerprint(g, opts.radius, opts.width))
        .collect::<Result<Vec<_>, _>>()?;
    let intdiv1 = internal_diversity(&fps, 1)?;
    let intdiv2 = internal_diversity(&fps, 2)?;
    let filters = gen.graphs.iter().filter(|g| passes_filters(g).0).count() as f64 / n as f64;

    let fdd = if n >= 2 && test_p.graphs.len() >= 2 {
        Some(frechet_descriptor_distance(&descriptor_rows(&gen), &descriptor_rows(&test_p))?)
    } else {
        None
    };

    Ok(MetricsReport {
        n_generated: n,
        n_train: train.len(),
        n_test: test.len(),
        valid,
        empty,
        unique,
        novelty,
        intdiv1,
        intdiv2,
        filters,
        fdd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graphs(xs: &[&str]) -> Vec<MolecularGraph> {
        xs.iter().map(|s| derive_graph(&tokenize(s).unwrap())).collect()
    }

    #[test]
    fn uniqueness_counts_graphs_not_strings() {
        let g = graphs(&["[C][C][O]", "[O][C][C]", "[N]"]);
        assert_eq!(uniqueness_at_k(&g, 3).unwrap(), 2.0 / 3.0);
        assert_eq!(uniqueness_at_k(&g, 2).unwrap(), 0.5);
        assert_eq!(uniqueness_at_k(&g, 4).unwrap_err(), MetricsError::Shortfall { k: 4, got: 3 });
        assert_eq!(uniqueness_at_k(&graphs(&["[C]"; 5]), 5).unwrap(), 0.2);
    }

    #[test]
    fn novelty_counts_distinct_hashes() {
        let train: BTreeSet<GraphDigest> = graphs(&["[N]"]).iter().map(canonical_hash).collect();
        assert_eq!(novelty(&graphs(&["[C]", "[C]", "[N]"]), &train).unwrap(), 0.5);
        assert_eq!(novelty(&graphs(&["[N]"]), &train).unwrap(), 0.0);
        assert_eq!(novelty(&graphs(&["[O]"]), &train).unwrap(), 1.0);
        assert!(novelty(&[], &train).is_err());
    }

    #[test]
    fn report_against_itself() {
        let set = ["[C][C][C][C][C][C]", "[C][C][O]", "[N][C][C][C][C][C][C]", "[O][C][C][C][C][C][C][C]"];
        let r = full_report(&set, &set, &set, &ReportOptions { unique_ks: vec![2, 10], ..Default::default() }).unwrap();
        assert_eq!(r.novelty, 0.0);
        assert!(r.fdd.unwrap() < 1e-6);
        assert_eq!(r.valid, 1.0);
        assert_eq!(r.unique, [(2, Some(1.0)), (10, None)]);
        let rows = r.rows();
        assert_eq!(rows[0].0, "Valid");
        assert_eq!(rows[2], (String::from("Unique@10"), None));
    }
}
