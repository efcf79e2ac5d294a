//! SELFIES strings: tokenizing, vocabularies, one-hot matrices, and the
//! derivation of molecular graphs over an organic token subset.

mod canon;
mod derive;
mod molecule;
mod onehot;
mod tokens;
mod vocab;

pub use canon::{canonical_hash, GraphDigest, EMPTY_GRAPH_DIGEST};
pub use derive::{derive_graph, derive_graph_with_stats, DerivationState, DeriveStats};
pub use molecule::{Atom, Bond, Element, GraphDefect, MolecularGraph};
pub use onehot::{decode_argmax, encode, OneHotSequence};
pub use tokens::{classify, index_value, tokenize, Symbol, INDEX_ALPHABET, PAD};
pub use vocab::{build_vocabulary, Vocabulary};

use alloc::boxed::Box;
use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: &'static str },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<CodecError> },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary must list [PAD] first")]
    MissingPad,
    #[error("duplicate vocabulary token {0}")]
    DuplicateToken(String),
    #[error("vocabulary entry {0:?} is not a single token")]
    BadVocabularyEntry(String),
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(String),
    #[error("{len} tokens exceed max length {max}")]
    TooLong { len: usize, max: usize },
    #[error("matrix shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}
