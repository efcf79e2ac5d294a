use alloc::vec::Vec;

use super::molecule::Element;
use super::CodecError;

/// Splits a SELFIES string into its bracketed tokens. Concatenating the
/// result reproduces the input exactly.
pub fn tokenize(s: &str) -> Result<Vec<&str>, CodecError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            return Err(CodecError::Parse { offset: i, reason: "expected '['" });
        }
        let start = i;
        i += 1;
        while i < bytes.len() && bytes[i] != b']' {
            if bytes[i] == b'[' {
                return Err(CodecError::Parse { offset: i, reason: "nested '['" });
            }
            i += 1;
        }
        if i == bytes.len() {
            return Err(CodecError::Parse { offset: start, reason: "unterminated token" });
        }
        if i == start + 1 {
            return Err(CodecError::Parse { offset: start, reason: "empty token" });
        }
        i += 1;
        out.push(&s[start..i]);
    }
    Ok(out)
}

pub const PAD: &str = "[PAD]";

/// The 16 symbols whose position encodes a base-16 digit after a branch or
/// ring token. Any other symbol reads as digit 0.
pub const INDEX_ALPHABET: [&str; 16] = [
    "[C]",
    "[Ring1]",
    "[Ring2]",
    "[Branch1]",
    "[=Branch1]",
    "[#Branch1]",
    "[Branch2]",
    "[=Branch2]",
    "[#Branch2]",
    "[O]",
    "[N]",
    "[=N]",
    "[=C]",
    "[#C]",
    "[S]",
    "[P]",
];

pub fn index_value(token: &str) -> usize {
    INDEX_ALPHABET.iter().position(|t| *t == token).unwrap_or(0)
}

/// Grammar role of a token within the supported subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    Atom { element: Element, bond_order: u8 },
    /// Opens a single-bond branch; the payload is the number of index
    /// symbols that follow.
    Branch(usize),
    Ring(usize),
    Unknown,
}

pub fn classify(token: &str) -> Symbol {
    let inner = match token.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        Some(t) => t,
        None => return Symbol::Unknown,
    };
    match inner {
        "Branch1" => return Symbol::Branch(1),
        "Branch2" => return Symbol::Branch(2),
        "Ring1" => return Symbol::Ring(1),
        "Ring2" => return Symbol::Ring(2),
        _ => {}
    }
    let (bond_order, rest) = match inner.as_bytes().first() {
        Some(b'=') => (2, &inner[1..]),
        Some(b'#') => (3, &inner[1..]),
        _ => (1, inner),
    };
    match Element::from_symbol(rest) {
        Some(element) => Symbol::Atom { element, bond_order },
        None => Symbol::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("[C][C][O]").unwrap(), ["[C]", "[C]", "[O]"]);
        assert!(tokenize("").unwrap().is_empty());
        assert_eq!(
            tokenize("[C][Branch1][Ring1][F][O]").unwrap(),
            ["[C]", "[Branch1]", "[Ring1]", "[F]", "[O]"]
        );
    }

    #[test]
    fn tokenize_errors_carry_offsets() {
        assert_eq!(
            tokenize("[C][]").unwrap_err(),
            CodecError::Parse { offset: 3, reason: "empty token" }
        );
        assert_eq!(
            tokenize("[C][O").unwrap_err(),
            CodecError::Parse { offset: 3, reason: "unterminated token" }
        );
        assert!(matches!(tokenize("C[O]"), Err(CodecError::Parse { offset: 0, .. })));
        assert!(matches!(tokenize("[C[O]"), Err(CodecError::Parse { offset: 2, .. })));
    }

    #[test]
    fn concat_of_tokens_is_identity() {
        let s = "[C][=C][Branch1][C][Cl][Ring1][=Branch1][#N]";
        let joined: String = tokenize(s).unwrap().concat();
        assert_eq!(joined, s);
    }

    #[test]
    fn classification() {
        assert_eq!(classify("[=O]"), Symbol::Atom { element: Element::O, bond_order: 2 });
        assert_eq!(classify("[Cl]"), Symbol::Atom { element: Element::Cl, bond_order: 1 });
        assert_eq!(classify("[Branch2]"), Symbol::Branch(2));
        assert_eq!(classify("[Ring1]"), Symbol::Ring(1));
        assert_eq!(classify("[PAD]"), Symbol::Unknown);
        assert_eq!(classify("[=Branch1]"), Symbol::Unknown);
        assert_eq!(index_value("[=Branch1]"), 4);
        assert_eq!(index_value("[F]"), 0);
    }
}
