use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tokens::{tokenize, PAD};
use super::CodecError;

/// Dense token ↔ id map with `[PAD]` at id 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from tokens listed in id order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CodecError> {
        if tokens.first().map(String::as_str) != Some(PAD) {
            return Err(CodecError::MissingPad);
        }
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if tokenize(t).map(|v| v.len()) != Ok(1) {
                return Err(CodecError::BadVocabularyEntry(t.clone()));
            }
            if ids.insert(t.clone(), i).is_some() {
                return Err(CodecError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// `[PAD]` followed by every distinct corpus token in lexicographic order.
/// Parse errors report the 1-based line (item) number.
pub fn build_vocabulary<I, S>(corpus: I) -> Result<Vocabulary, CodecError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = BTreeSet::new();
    let mut lines = 0;
    for (i, s) in corpus.into_iter().enumerate() {
        lines += 1;
        let toks = tokenize(s.as_ref()).map_err(|e| CodecError::AtLine { line: i + 1, source: e.into() })?;
        for t in toks {
            if t != PAD && !seen.contains(t) {
                seen.insert(t.to_string());
            }
        }
    }
    if lines == 0 {
        return Err(CodecError::EmptyCorpus);
    }
    let mut tokens = Vec::with_capacity(seen.len() + 1);
    tokens.push(PAD.to_string());
    tokens.extend(seen);
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_string_corpus() {
        let v = build_vocabulary(["[C][O]", "[C][N]"]).unwrap();
        assert_eq!(v.tokens(), ["[PAD]", "[C]", "[N]", "[O]"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("[N]"), Some(2));
        assert_eq!(v.token(3), Some("[O]"));
    }

    #[test]
    fn single_token() {
        assert_eq!(build_vocabulary(["[C]"]).unwrap().len(), 2);
    }

    #[test]
    fn duplicates_do_not_matter() {
        let a = build_vocabulary(["[C][O]", "[C][O]", "[N]"]).unwrap();
        let b = build_vocabulary(["[C][O]", "[N]"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert_eq!(build_vocabulary(Vec::<&str>::new()).unwrap_err(), CodecError::EmptyCorpus);
        assert!(matches!(
            build_vocabulary(["[C]", "[C]x"]).unwrap_err(),
            CodecError::AtLine { line: 2, .. }
        ));
        assert_eq!(
            Vocabulary::from_tokens(alloc::vec!["[C]".into()]).unwrap_err(),
            CodecError::MissingPad
        );
    }
}
