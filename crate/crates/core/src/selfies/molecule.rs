use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// Elements of the supported organic subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    C,
    N,
    O,
    F,
    S,
    Cl,
    Br,
}

impl Element {
    pub const ALL: [Element; 7] =
        [Element::C, Element::N, Element::O, Element::F, Element::S, Element::Cl, Element::Br];

    /// Maximum total bond order (explicit bonds plus hydrogens).
    pub fn capacity(self) -> u8 {
        match self {
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F => 1,
            Element::S => 6,
            Element::Cl => 1,
            Element::Br => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    pub hydrogens: u8,
}

/// Undirected bond stored once with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphDefect {
    SelfBond(usize),
    DuplicateBond(usize, usize),
    BadBondOrder(usize, usize),
    AtomOutOfRange(usize),
    OverValence(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from explicit parts. No validation; see [`Self::check`].
    pub fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Self {
        Self { atoms, bonds }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub(crate) fn add_atom(&mut self, element: Element) -> usize {
        self.atoms.push(Atom { element, charge: 0, hydrogens: 0 });
        self.atoms.len() - 1
    }

    pub(crate) fn bond_index(&self, a: usize, b: usize) -> Option<usize> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.bonds.iter().position(|x| x.a == a && x.b == b)
    }

    pub(crate) fn add_bond(&mut self, a: usize, b: usize, order: u8) {
        debug_assert!(a != b && order > 0);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.bonds.push(Bond { a, b, order });
    }

    pub(crate) fn raise_bond(&mut self, idx: usize, by: u8) {
        self.bonds[idx].order += by;
    }

    /// Sum of explicit bond orders at `atom`.
    pub fn explicit_valence(&self, atom: usize) -> u8 {
        self.bonds.iter().filter(|b| b.a == atom || b.b == atom).map(|b| b.order).sum()
    }

    pub(crate) fn fill_hydrogens(&mut self) {
        for i in 0..self.atoms.len() {
            let used = self.explicit_valence(i);
            let atom = &mut self.atoms[i];
            atom.hydrogens = atom.element.capacity().saturating_sub(used);
        }
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == atom || b.b == atom).count()
    }

    /// Neighbor lists as `(neighbor, bond order)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, u8)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.a].push((b.b, b.order));
            adj[b.b].push((b.a, b.order));
        }
        adj
    }

    /// First violated structural invariant, if any.
    pub fn check(&self) -> Result<(), GraphDefect> {
        let n = self.atoms.len();
        for (i, b) in self.bonds.iter().enumerate() {
            if b.a >= n || b.b >= n {
                return Err(GraphDefect::AtomOutOfRange(b.a.max(b.b)));
            }
            if b.a == b.b {
                return Err(GraphDefect::SelfBond(b.a));
            }
            if !(1..=3).contains(&b.order) {
                return Err(GraphDefect::BadBondOrder(b.a, b.b));
            }
            let (lo, hi) = if b.a < b.b { (b.a, b.b) } else { (b.b, b.a) };
            if self.bonds[..i].iter().any(|o| o.a.min(o.b) == lo && o.a.max(o.b) == hi) {
                return Err(GraphDefect::DuplicateBond(lo, hi));
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            let used = self.explicit_valence(i) as u16 + atom.hydrogens as u16;
            if used > atom.element.capacity() as u16 {
                return Err(GraphDefect::OverValence(i));
            }
        }
        Ok(())
    }

    pub fn is_valence_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// Relabels atom `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len());
        let mut atoms = self.atoms.clone();
        for (i, &p) in perm.iter().enumerate() {
            atoms[p] = self.atoms[i];
        }
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| {
                let (x, y) = (perm[b.a], perm[b.b]);
                Bond { a: x.min(y), b: x.max(y), order: b.order }
            })
            .collect();
        bonds.sort();
        MolecularGraph { atoms, bonds }
    }

    /// Connected components, each as a sorted atom list.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// BFS distances from `src`; `usize::MAX` marks unreachable atoms.
    pub fn distances_from(&self, src: usize, adj: &[Vec<(usize, u8)>]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.atoms.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Longest shortest path within any component.
    pub fn diameter(&self) -> usize {
        let adj = self.adjacency();
        (0..self.atoms.len())
            .flat_map(|s| self.distances_from(s, &adj).into_iter().filter(|&d| d != usize::MAX))
            .max()
            .unwrap_or(0)
    }

    /// Size of the smallest cycle through each ring-closing bond of a
    /// spanning forest (one entry per independent cycle).
    pub fn ring_sizes(&self) -> Vec<usize> {
        let n = self.atoms.len();
        // union-find spanning forest
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut closures = Vec::new();
        for (i, b) in self.bonds.iter().enumerate() {
            let (ra, rb) = (find(&mut parent, b.a), find(&mut parent, b.b));
            if ra == rb {
                closures.push(i);
            } else {
                parent[ra] = rb;
            }
        }
        let mut sizes = Vec::with_capacity(closures.len());
        for &ci in &closures {
            let skip = self.bonds[ci];
            let mut adj = vec![Vec::new(); n];
            for (i, b) in self.bonds.iter().enumerate() {
                if i != ci {
                    adj[b.a].push((b.b, b.order));
                    adj[b.b].push((b.a, b.order));
                }
            }
            let d = self.distances_from(skip.a, &adj)[skip.b];
            if d != usize::MAX {
                sizes.push(d + 1);
            }
        }
        sizes
    }

    pub fn cyclomatic_number(&self) -> usize {
        (self.bonds.len() + self.components().len()).saturating_sub(self.atoms.len())
    }
}
