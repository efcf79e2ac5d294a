use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tokens::tokenize;
use super::vocab::Vocabulary;
use super::CodecError;

/// `V × L` token matrix, row-major: entry `(v, j)` is at `v * L + j`.
/// Column `j` describes position `j`.
///
/// A hard sequence has exactly one `1.0` per column; perturbed or sampled
/// fields are soft and may hold any finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotSequence {
    vocab_size: usize,
    max_len: usize,
    data: Vec<f64>,
    hard: bool,
}

impl OneHotSequence {
    pub fn soft(vocab_size: usize, max_len: usize, data: Vec<f64>) -> Result<Self, CodecError> {
        if data.len() != vocab_size * max_len || vocab_size == 0 || max_len == 0 {
            return Err(CodecError::ShapeMismatch { expected: vocab_size * max_len, got: data.len() });
        }
        Ok(Self { vocab_size, max_len, data, hard: false })
    }

    /// Hard sequence from per-position token ids.
    pub fn from_ids(vocab_size: usize, ids: &[usize]) -> Result<Self, CodecError> {
        let l = ids.len();
        if vocab_size == 0 || l == 0 {
            return Err(CodecError::ShapeMismatch { expected: vocab_size * l, got: 0 });
        }
        let mut data = vec![0.0; vocab_size * l];
        for (j, &id) in ids.iter().enumerate() {
            if id >= vocab_size {
                return Err(CodecError::ShapeMismatch { expected: vocab_size, got: id + 1 });
            }
            data[id * l + j] = 1.0;
        }
        Ok(Self { vocab_size, max_len: l, data, hard: true })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn is_hard(&self) -> bool {
        self.hard
    }

    pub fn get(&self, v: usize, j: usize) -> f64 {
        self.data[v * self.max_len + j]
    }

    /// Row-major flattening, length `V·L`.
    pub fn flatten(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Argmax id of column `j`; ties go to the lowest id.
    pub fn column_argmax(&self, j: usize) -> usize {
        let mut best = 0;
        for v in 1..self.vocab_size {
            if self.get(v, j) > self.get(best, j) {
                best = v;
            }
        }
        best
    }

    /// Positions before the first column whose argmax is `[PAD]`.
    pub fn token_len(&self) -> usize {
        (0..self.max_len).find(|&j| self.column_argmax(j) == 0).unwrap_or(self.max_len)
    }

    /// Euclidean distance between the flattened matrices.
    pub fn distance(&self, other: &OneHotSequence) -> f64 {
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        libm::sqrt(s)
    }
}

/// One-hot encodes `s` into `max_len` columns, padding with `[PAD]`.
pub fn encode(s: &str, vocab: &Vocabulary, max_len: usize) -> Result<OneHotSequence, CodecError> {
    let toks = tokenize(s)?;
    if toks.len() > max_len {
        return Err(CodecError::TooLong { len: toks.len(), max: max_len });
    }
    let mut ids = vec![0; max_len];
    for (j, t) in toks.iter().enumerate() {
        ids[j] = vocab.id(t).ok_or_else(|| CodecError::UnknownToken(String::from(*t)))?;
    }
    OneHotSequence::from_ids(vocab.len(), &ids)
}

/// Column-wise argmax back to a string. Decoding stops at the first `[PAD]`
/// (or an id outside the vocabulary).
pub fn decode_argmax(x: &OneHotSequence, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for j in 0..x.max_len() {
        let id = x.column_argmax(j);
        if id == 0 {
            break;
        }
        match vocab.token(id) {
            Some(t) => out.push_str(t),
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::build_vocabulary;

    #[test]
    fn encode_single_token() {
        let v = build_vocabulary(["[C]"]).unwrap();
        let x = encode("[C]", &v, 2).unwrap();
        // rows are vocab ids, columns are positions
        assert_eq!(x.flatten(), &[0.0, 1.0, 1.0, 0.0]);
        assert!(x.is_hard());
        assert_eq!(x.token_len(), 1);
    }

    #[test]
    fn empty_string_is_all_pad() {
        let v = build_vocabulary(["[C]"]).unwrap();
        let x = encode("", &v, 3).unwrap();
        assert!((0..3).all(|j| x.column_argmax(j) == 0));
        assert_eq!(decode_argmax(&x, &v), "");
    }

    #[test]
    fn encode_errors() {
        let v = build_vocabulary(["[C][O]"]).unwrap();
        assert_eq!(encode("[N]", &v, 3).unwrap_err(), CodecError::UnknownToken("[N]".into()));
        assert_eq!(encode("[C][O][C]", &v, 2).unwrap_err(), CodecError::TooLong { len: 3, max: 2 });
    }

    #[test]
    fn decode_rules() {
        let v = build_vocabulary(["[C][O]", "[N]"]).unwrap();
        let x = encode("[C][O]", &v, 4).unwrap();
        assert_eq!(decode_argmax(&x, &v), "[C][O]");

        let zeros = OneHotSequence::soft(v.len(), 3, vec![0.0; v.len() * 3]).unwrap();
        assert_eq!(decode_argmax(&zeros, &v), "");

        let mut data = vec![0.0; v.len() * 2];
        let n = v.id("[N]").unwrap();
        data[n * 2] = 0.7;
        data[v.id("[C]").unwrap() * 2] = 0.6;
        data[v.id("[O]").unwrap() * 2 + 1] = 0.2;
        let soft = OneHotSequence::soft(v.len(), 2, data).unwrap();
        assert!(decode_argmax(&soft, &v).starts_with("[N]"));
        assert_eq!(decode_argmax(&soft, &v), "[N][O]");
    }

    #[test]
    fn interior_pad_truncates() {
        let v = build_vocabulary(["[C][O]"]).unwrap();
        let c = v.id("[C]").unwrap();
        let o = v.id("[O]").unwrap();
        let x = OneHotSequence::from_ids(v.len(), &[c, 0, o]).unwrap();
        assert_eq!(decode_argmax(&x, &v), "[C]");
    }

    #[test]
    fn distance_of_k_differing_columns() {
        let a = OneHotSequence::from_ids(5, &[1, 2, 3, 4, 0]).unwrap();
        let b = OneHotSequence::from_ids(5, &[1, 3, 3, 0, 0]).unwrap();
        assert_eq!(a.distance(&b), libm::sqrt(4.0));
    }
}
