//! Token sequence → molecular graph.
//!
//! The derivation is total: every token sequence yields a valence-valid
//! graph. Each frame tracks the remaining valence of its attachment atom;
//! bond requests are clamped to what is left, and a frame ends as soon as
//! its atom is saturated.
//!
//! Rules for the supported subset:
//! - The first atom of a molecule takes no bond. Later atoms bond to the
//!   previous atom with `min(requested, remaining, capacity)`.
//! - `[Branch1]`/`[Branch2]` read 1/2 index symbols `Q` and derive the next
//!   `Q+1` symbols as a single-bond side chain from the current atom.
//!   Symbols left in that window when the branch saturates are dropped.
//!   A branch needs at least 2 remaining valence, otherwise the branch
//!   symbol alone is skipped.
//! - `[Ring1]`/`[Ring2]` read `Q` and queue a single bond to the atom `Q+1`
//!   positions back (clamped to the first atom). Ring bonds are formed after
//!   the main derivation, only if both ends still have free valence; a ring
//!   bond onto an existing bond raises its order instead.
//! - Unknown symbols are skipped and counted.

use alloc::vec::Vec;

use super::molecule::{Element, MolecularGraph};
use super::tokens::{classify, index_value, Symbol};

#[derive(Clone, Copy, Debug)]
struct Frame {
    /// Remaining valence of the attachment atom; `None` before the first atom.
    state: Option<u8>,
    prev: Option<usize>,
    /// Symbols this frame may still read; `None` is unbounded.
    budget: Option<usize>,
    /// Valence the parent reserved for this branch.
    reserved: u8,
}

#[derive(Clone, Copy, Debug)]
struct RingBond {
    left: usize,
    right: usize,
    order: u8,
}

/// Working state of a derivation: the branch stack and queued ring bonds.
#[derive(Debug)]
pub struct DerivationState<'t> {
    tokens: &'t [&'t str],
    pos: usize,
    frames: Vec<Frame>,
    rings: Vec<RingBond>,
    graph: MolecularGraph,
    unknown: usize,
}

/// Bookkeeping from a derivation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeriveStats {
    pub unknown_tokens: usize,
    pub skipped_controls: usize,
}

impl<'t> DerivationState<'t> {
    fn new(tokens: &'t [&'t str]) -> Self {
        Self {
            tokens,
            pos: 0,
            frames: alloc::vec![Frame { state: None, prev: None, budget: None, reserved: 0 }],
            rings: Vec::new(),
            graph: MolecularGraph::new(),
            unknown: 0,
        }
    }

    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("frame stack never empty while deriving")
    }

    /// Next symbol within the current frame's budget.
    fn next_symbol(&mut self) -> Option<&'t str> {
        if self.pos >= self.tokens.len() {
            return None;
        }
        let frame = self.top();
        match &mut frame.budget {
            Some(0) => return None,
            Some(b) => *b -= 1,
            None => {}
        }
        let tok = self.tokens[self.pos];
        self.pos += 1;
        Some(tok)
    }

    fn read_index(&mut self, digits: usize) -> usize {
        let mut q = 0;
        for _ in 0..digits {
            match self.next_symbol() {
                Some(t) => q = q * 16 + index_value(t),
                None => break,
            }
        }
        q
    }

    fn frame_done(&self) -> bool {
        let f = self.frames.last().expect("non-empty");
        f.state == Some(0) || f.budget == Some(0) || self.pos >= self.tokens.len()
    }

    fn run(mut self) -> (MolecularGraph, DeriveStats) {
        let mut skipped = 0;
        loop {
            if self.frame_done() {
                let f = self.frames.pop().expect("non-empty");
                let Some(parent) = self.frames.last_mut() else { break };
                // unread window symbols of a saturated branch are dropped
                if let Some(left) = f.budget {
                    self.pos = (self.pos + left).min(self.tokens.len());
                }
                parent.state = parent.state.map(|s| s - f.reserved);
                continue;
            }
            let Some(tok) = self.next_symbol() else { continue };
            match classify(tok) {
                Symbol::Atom { element, bond_order } => self.atom(element, bond_order),
                Symbol::Branch(digits) => {
                    let f = *self.top();
                    match f.state {
                        Some(s) if s >= 2 => {
                            let q = self.read_index(digits);
                            let window = match self.top().budget {
                                Some(b) => (q + 1).min(b),
                                None => q + 1,
                            };
                            if let Some(b) = &mut self.top().budget {
                                *b -= window;
                            }
                            self.frames.push(Frame {
                                state: Some(1),
                                prev: f.prev,
                                budget: Some(window),
                                reserved: 1,
                            });
                        }
                        _ => skipped += 1,
                    }
                }
                Symbol::Ring(digits) => {
                    let f = *self.top();
                    match (f.state, f.prev) {
                        (Some(s), Some(prev)) if s > 0 => {
                            let q = self.read_index(digits);
                            let left = prev.saturating_sub(q + 1);
                            self.rings.push(RingBond { left, right: prev, order: 1 });
                            self.top().state = Some(s - 1);
                        }
                        _ => skipped += 1,
                    }
                }
                Symbol::Unknown => self.unknown += 1,
            }
        }
        self.close_rings();
        self.graph.fill_hydrogens();
        let stats = DeriveStats { unknown_tokens: self.unknown, skipped_controls: skipped };
        (self.graph, stats)
    }

    fn atom(&mut self, element: Element, requested: u8) {
        let cap = element.capacity();
        let f = *self.top();
        let idx = self.graph.add_atom(element);
        let next_state = match (f.state, f.prev) {
            (Some(s), Some(prev)) => {
                let order = requested.min(s).min(cap);
                self.graph.add_bond(prev, idx, order);
                cap - order
            }
            _ => cap,
        };
        let top = self.top();
        top.state = Some(next_state);
        top.prev = Some(idx);
    }

    fn close_rings(&mut self) {
        for rb in core::mem::take(&mut self.rings) {
            if rb.left == rb.right {
                continue;
            }
            let free = |g: &MolecularGraph, i: usize| {
                g.atoms()[i].element.capacity().saturating_sub(g.explicit_valence(i))
            };
            let room = rb.order.min(free(&self.graph, rb.left)).min(free(&self.graph, rb.right));
            if room == 0 {
                continue;
            }
            match self.graph.bond_index(rb.left, rb.right) {
                Some(b) => {
                    let current = self.graph.bonds()[b].order;
                    let by = room.min(3 - current);
                    if by > 0 {
                        self.graph.raise_bond(b, by);
                    }
                }
                None => self.graph.add_bond(rb.left, rb.right, room),
            }
        }
    }
}

/// Derives the molecular graph of a token sequence. Never fails.
pub fn derive_graph(tokens: &[&str]) -> MolecularGraph {
    derive_graph_with_stats(tokens).0
}

pub fn derive_graph_with_stats(tokens: &[&str]) -> (MolecularGraph, DeriveStats) {
    DerivationState::new(tokens).run()
}
