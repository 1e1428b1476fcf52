use std::fmt;

use sha2::{Digest, Sha256};

use super::lexer::{tokenize, Tok};
use super::parser::{parse, ParseError};

/// SHA-256 digest of a whitespace-normalized lambda source.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub [u8; 32]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Token stream of `source` joined by single spaces.
pub fn normalize_source(source: &str) -> Result<String, ParseError> {
    let tokens = tokenize(source).map_err(|e| ParseError::Syntax {
        pos: e.pos,
        reason: e.reason,
    })?;
    Ok(tokens
        .iter()
        .filter(|t| t.tok != Tok::Eof)
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" "))
}

/// Digest identifying a source up to whitespace. Fails if the source does not parse.
pub fn canonical_signature(source: &str) -> Result<Signature, ParseError> {
    parse(source)?;
    let normalized = normalize_source(source)?;
    Ok(Signature(Sha256::digest(normalized.as_bytes()).into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_variants_collide() {
        let a = canonical_signature("lambda x: x").unwrap();
        assert_eq!(a, canonical_signature("lambda x:  x").unwrap());
        assert_eq!(a, canonical_signature("lambda   x :\n    x").unwrap());
    }

    #[test]
    fn distinct_sources_differ() {
        assert_ne!(
            canonical_signature("lambda x: x").unwrap(),
            canonical_signature("lambda x: x + 0.0").unwrap()
        );
    }

    #[test]
    fn golden_digest() {
        // Pinned from the first run; must never change across platforms.
        assert_eq!(
            canonical_signature("lambda x: x").unwrap().to_hex(),
            "7ba2aaeb7f6ae1495454b0e0f95849b335c1098ea81f1a86bb7592765bf74c72"
        );
    }

    #[test]
    fn parse_errors_propagate() {
        assert!(canonical_signature("lambda x: y").is_err());
    }
}
