//! SELFIES line files and vocabulary files.
//!
//! A dataset holds one SELFIES string per line; lines starting with `#`
//! are comments. A vocabulary file lists one token per line in id order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use scoremol_core::selfies::{build_vocabulary, encode, tokenize, CodecError, OneHotSequence, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: CodecError },
    #[error("{path}: no SELFIES strings found")]
    Empty { path: PathBuf },
    #[error("{path}: {source}")]
    Vocabulary { path: PathBuf, source: CodecError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// A string with its 1-based line number in the source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub selfies: String,
}

/// Reads and tokenizes every non-comment line. Blank lines are kept as
/// empty molecules when `keep_blank` is set and skipped otherwise.
pub fn read_selfies(path: &Path, keep_blank: bool) -> Result<Vec<Entry>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.starts_with('#') || (s.is_empty() && !keep_blank) {
            continue;
        }
        tokenize(s).map_err(|source| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(Entry { line: i + 1, selfies: s.to_string() });
    }
    Ok(out)
}

/// As [`read_selfies`] with blank lines skipped, failing on an empty result.
pub fn read_corpus(path: &Path) -> Result<Vec<Entry>, DatasetError> {
    let out = read_selfies(path, false)?;
    if out.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    Ok(out)
}

pub fn strings(entries: &[Entry]) -> Vec<&str> {
    entries.iter().map(|e| e.selfies.as_str()).collect()
}

pub fn corpus_vocabulary(path: &Path, entries: &[Entry]) -> Result<Vocabulary, DatasetError> {
    build_vocabulary(strings(entries))
        .map_err(|source| DatasetError::Vocabulary { path: path.to_path_buf(), source })
}

/// Longest token count in the corpus.
pub fn max_token_len(entries: &[Entry]) -> usize {
    entries.iter().map(|e| tokenize(&e.selfies).map(|t| t.len()).unwrap_or(0)).max().unwrap_or(0)
}

/// One-hot encodes every entry at `max_len` columns.
pub fn encode_corpus(
    path: &Path,
    entries: &[Entry],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<OneHotSequence>, DatasetError> {
    entries
        .iter()
        .map(|e| {
            encode(&e.selfies, vocab, max_len)
                .map_err(|source| DatasetError::Parse { path: path.to_path_buf(), line: e.line, source })
        })
        .collect()
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<(), DatasetError> {
    let mut text = String::new();
    for t in vocab.tokens() {
        text.push_str(t);
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let tokens = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    Vocabulary::from_tokens(tokens).map_err(|source| DatasetError::Vocabulary { path: path.to_path_buf(), source })
}

/// Writes strings one per line.
pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{}", l.as_ref()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
