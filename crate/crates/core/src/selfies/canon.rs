use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use super::molecule::MolecularGraph;
use crate::hash::Mixer;

/// 128-bit atom-order-invariant graph digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphDigest(pub [u8; 16]);

/// Digest of the graph with no atoms.
pub const EMPTY_GRAPH_DIGEST: GraphDigest = GraphDigest([0; 16]);

impl fmt::Debug for GraphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for GraphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

const MIN_ROUNDS: usize = 8;

/// Refined per-atom labels after `max(8, diameter)` rounds.
fn refined_labels(g: &MolecularGraph) -> Vec<u64> {
    let adj = g.adjacency();
    let mut labels: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            Mixer::new(0xA70)
                .push(a.element.index() as u64)
                .push(a.charge as i64 as u64)
                .push(adj[i].len() as u64)
                .push(a.hydrogens as u64)
                .finish()
        })
        .collect();
    let rounds = MIN_ROUNDS.max(g.diameter());
    let mut env: Vec<(u8, u64)> = Vec::new();
    for _ in 0..rounds {
        let next = adj
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                env.clear();
                env.extend(nbrs.iter().map(|&(j, order)| (order, labels[j])));
                env.sort_unstable();
                env.iter()
                    .fold(Mixer::new(0x2EF).push(labels[i]), |m, &(o, l)| m.push(o as u64).push(l))
                    .finish()
            })
            .collect();
        labels = next;
    }
    labels
}

/// Canonical digest: sorted final atom labels plus sorted edge labels,
/// hashed with SHA-256 and truncated to 128 bits.
pub fn canonical_hash(g: &MolecularGraph) -> GraphDigest {
    if g.is_empty() {
        return EMPTY_GRAPH_DIGEST;
    }
    let labels = refined_labels(g);
    let mut atoms = labels.clone();
    atoms.sort_unstable();
    let mut edges: Vec<(u64, u64, u8)> = g
        .bonds()
        .iter()
        .map(|b| {
            let (x, y) = (labels[b.a], labels[b.b]);
            (x.min(y), x.max(y), b.order)
        })
        .collect();
    edges.sort_unstable();

    let mut h = Sha256::new();
    h.update((atoms.len() as u64).to_le_bytes());
    for l in &atoms {
        h.update(l.to_le_bytes());
    }
    h.update((edges.len() as u64).to_le_bytes());
    for (x, y, o) in &edges {
        h.update(x.to_le_bytes());
        h.update(y.to_le_bytes());
        h.update([*o]);
    }
    let full = h.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&full[..16]);
    GraphDigest(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::{derive_graph, tokenize};

    fn hash(s: &str) -> GraphDigest {
        canonical_hash(&derive_graph(&tokenize(s).unwrap()))
    }

    #[test]
    fn separates_elements() {
        assert_ne!(hash("[C][O]"), hash("[C][N]"));
    }

    #[test]
    fn empty_graph_sentinel() {
        assert_eq!(hash(""), EMPTY_GRAPH_DIGEST);
        assert_ne!(hash("[C]"), EMPTY_GRAPH_DIGEST);
    }

    #[test]
    fn same_molecule_from_different_strings() {
        // ethanol written from either end
        assert_eq!(hash("[C][C][O]"), hash("[O][C][C]"));
        assert_ne!(hash("[C][C][O]"), hash("[C][O][C]"));
    }

    #[test]
    fn permutation_invariance() {
        let g = derive_graph(&tokenize("[C][C][Branch1][C][Cl][C][=C][Ring1][Ring1][N]").unwrap());
        let n = g.num_atoms();
        let perm: Vec<usize> = (0..n).rev().collect();
        assert_eq!(canonical_hash(&g), canonical_hash(&g.permuted(&perm)));
    }
}
