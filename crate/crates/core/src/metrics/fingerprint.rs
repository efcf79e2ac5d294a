use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::MetricsError;
use crate::hash::Mixer;
use crate::selfies::MolecularGraph;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_WIDTH: usize = 2048;

/// Fixed-width bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(width: usize) -> Result<Self, MetricsError> {
        if !width.is_power_of_two() {
            return Err(MetricsError::BadWidth(width));
        }
        Ok(Self { width, words: vec![0; width.div_ceil(64)] })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }
}

/// Distinct circular identifiers of a graph, radius 0 first.
///
/// Round 0 hashes element, heavy degree, hydrogen count and charge. Each
/// later round hashes the previous identifier with the sorted
/// `(bond order, neighbor identifier)` list. An identifier is dropped when
/// its bond environment did not grow or repeats one already emitted.
pub fn circular_identifiers(g: &MolecularGraph, radius: usize) -> Vec<u64> {
    let adj = g.adjacency();
    let bond_of = |a: usize, b: usize| {
        g.bonds().iter().position(|x| x.a == a.min(b) && x.b == a.max(b)).expect("adjacent atoms share a bond")
    };

    let mut ids: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            Mixer::new(0xEC0)
                .push(a.element.index() as u64)
                .push(adj[i].len() as u64)
                .push(a.hydrogens as u64)
                .push(a.charge as i64 as u64)
                .finish()
        })
        .collect();
    let mut out: Vec<u64> = Vec::new();
    let mut emitted: BTreeSet<u64> = BTreeSet::new();
    for &id in &ids {
        if emitted.insert(id) {
            out.push(id);
        }
    }

    let mut envs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.num_atoms()];
    let mut seen_envs: BTreeSet<Vec<usize>> = BTreeSet::new();
    for round in 1..=radius {
        let mut next_ids = Vec::with_capacity(ids.len());
        let mut next_envs = Vec::with_capacity(ids.len());
        let mut candidates: Vec<(Vec<usize>, u64)> = Vec::new();
        for (i, nbrs) in adj.iter().enumerate() {
            let mut shell: Vec<(u8, u64)> = nbrs.iter().map(|&(j, o)| (o, ids[j])).collect();
            shell.sort_unstable();
            let id = shell
                .iter()
                .fold(Mixer::new(0xEC1).push(round as u64).push(ids[i]), |m, &(o, l)| m.push(o as u64).push(l))
                .finish();
            let mut env = envs[i].clone();
            for &(j, _) in nbrs {
                env.insert(bond_of(i, j));
                env.extend(envs[j].iter().copied());
            }
            if env.len() > envs[i].len() {
                candidates.push((env.iter().copied().collect(), id));
            }
            next_ids.push(id);
            next_envs.push(env);
        }
        // equal environments found in the same round keep the smallest id
        candidates.sort_unstable();
        for (env, id) in candidates {
            if seen_envs.insert(env) && emitted.insert(id) {
                out.push(id);
            }
        }
        ids = next_ids;
        envs = next_envs;
    }
    out
}

/// ECFP-style fingerprint: each identifier sets bit `id mod width`.
pub fn circular_fingerprint(g: &MolecularGraph, radius: usize, width: usize) -> Result<Fingerprint, MetricsError> {
    let mut fp = Fingerprint::empty(width)?;
    for id in circular_identifiers(g, radius) {
        fp.set((id % width as u64) as usize);
    }
    Ok(fp)
}

/// `|a ∧ b| / |a ∨ b|`, and 1 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, MetricsError> {
    if a.width != b.width {
        return Err(MetricsError::WidthMismatch(a.width, b.width));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 1.0 } else { both as f64 / either as f64 })
}

/// `1 − ((1/n²)·Σ_{i,j} T(i,j)^p)^{1/p}` over all ordered pairs, self-pairs
/// included.
pub fn internal_diversity(fps: &[Fingerprint], p: u32) -> Result<f64, MetricsError> {
    if fps.is_empty() {
        return Err(MetricsError::Empty("fingerprint set"));
    }
    if p == 0 {
        return Err(MetricsError::BadPower);
    }
    let n = fps.len();
    let mut total = 0.0;
    for i in 0..n {
        total += libm::pow(tanimoto(&fps[i], &fps[i])?, p as f64);
        for j in i + 1..n {
            total += 2.0 * libm::pow(tanimoto(&fps[i], &fps[j])?, p as f64);
        }
    }
    let mean = total / (n * n) as f64;
    Ok((1.0 - libm::pow(mean, 1.0 / p as f64)).clamp(0.0, 1.0))
}
