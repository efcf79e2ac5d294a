use alloc::vec::Vec;

use crate::selfies::{Element, MolecularGraph};

pub const DESCRIPTOR_DIM: usize = 20;

/// Column names, in vector order.
pub const DESCRIPTOR_NAMES: [&str; DESCRIPTOR_DIM] = [
    "count_C",
    "count_N",
    "count_O",
    "count_F",
    "count_S",
    "count_Cl",
    "count_Br",
    "bonds_single",
    "bonds_double",
    "bonds_triple",
    "rings",
    "ring3",
    "ring4",
    "ring5",
    "ring6",
    "ring7",
    "ring8_plus",
    "heavy_atoms",
    "mean_degree",
    "token_length",
];

/// Fixed-length, non-negative descriptor vector; see [`DESCRIPTOR_NAMES`].
/// Ring counts use the smallest cycle through each independent ring bond.
pub fn descriptors(g: &MolecularGraph, token_len: usize) -> [f64; DESCRIPTOR_DIM] {
    let mut d = [0.0; DESCRIPTOR_DIM];
    for a in g.atoms() {
        d[a.element.index()] += 1.0;
    }
    for b in g.bonds() {
        d[7 + (b.order as usize).clamp(1, 3) - 1] += 1.0;
    }
    let rings = g.ring_sizes();
    d[10] = rings.len() as f64;
    for r in rings {
        d[11 + r.clamp(3, 8) - 3] += 1.0;
    }
    d[17] = g.num_atoms() as f64;
    if !g.is_empty() {
        d[18] = 2.0 * g.bonds().len() as f64 / g.num_atoms() as f64;
    }
    d[19] = token_len as f64;
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FilterReason {
    Elements,
    RingSize,
    Size,
    Degree,
    Connected,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Elements => "elements",
            FilterReason::RingSize => "ring",
            FilterReason::Size => "size",
            FilterReason::Degree => "degree",
            FilterReason::Connected => "connected",
        }
    }
}

pub const MIN_HEAVY_ATOMS: usize = 6;
pub const MAX_HEAVY_ATOMS: usize = 50;

/// Simplified drug-likeness rules. Returns every failed rule; an empty
/// list means the molecule passes.
pub fn passes_filters(g: &MolecularGraph) -> (bool, Vec<FilterReason>) {
    let mut reasons = Vec::new();
    if g.atoms().iter().any(|a| !Element::ALL.contains(&a.element)) {
        reasons.push(FilterReason::Elements);
    }
    if g.ring_sizes().iter().any(|r| !(3..=8).contains(r)) {
        reasons.push(FilterReason::RingSize);
    }
    if !(MIN_HEAVY_ATOMS..=MAX_HEAVY_ATOMS).contains(&g.num_atoms()) {
        reasons.push(FilterReason::Size);
    }
    if (0..g.num_atoms()).any(|i| g.degree(i) > 4) {
        reasons.push(FilterReason::Degree);
    }
    if g.components().len() != 1 {
        reasons.push(FilterReason::Connected);
    }
    (reasons.is_empty(), reasons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::{derive_graph, tokenize, Atom, Bond};

    fn graph(s: &str) -> MolecularGraph {
        derive_graph(&tokenize(s).unwrap())
    }

    fn carbons(n: usize, bonds: &[(usize, usize)]) -> MolecularGraph {
        let atoms = (0..n).map(|_| Atom { element: Element::C, charge: 0, hydrogens: 0 }).collect();
        let bonds = bonds.iter().map(|&(a, b)| Bond { a, b, order: 1 }).collect();
        MolecularGraph::from_parts(atoms, bonds)
    }

    #[test]
    fn descriptor_layout() {
        let d = descriptors(&graph("[C][C][C][C][C][C][Ring1][=Branch1]"), 8);
        assert_eq!(d[0], 6.0);
        assert_eq!(d[7], 6.0);
        assert_eq!(d[10], 1.0);
        assert_eq!(d[14], 1.0);
        assert_eq!(d[17], 6.0);
        assert_eq!(d[18], 2.0);
        assert_eq!(d[19], 8.0);
        assert!(d.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(descriptors(&MolecularGraph::new(), 0), [0.0; DESCRIPTOR_DIM]);
    }

    #[test]
    fn filter_rules() {
        assert_eq!(passes_filters(&graph("[C]")), (false, alloc::vec![FilterReason::Size]));
        let ring6 = graph("[C][C][C][C][C][C][Ring1][=Branch1]");
        assert_eq!(passes_filters(&ring6), (true, Vec::new()));
        let split = carbons(8, &[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)]);
        assert_eq!(passes_filters(&split).1, [FilterReason::Connected]);
        let ring9: Vec<(usize, usize)> = (0..9).map(|i| (i.min((i + 1) % 9), i.max((i + 1) % 9))).collect();
        assert_eq!(passes_filters(&carbons(9, &ring9)).1, [FilterReason::RingSize]);
        let star = carbons(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        assert_eq!(passes_filters(&star).1, [FilterReason::Degree]);
    }
}
