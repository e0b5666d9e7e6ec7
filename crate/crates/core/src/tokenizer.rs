//! Byte-level tokenizer with task special tokens and reserved patch ids.
//!
//! Layout: ids `0..256` are raw bytes, followed by the special tokens in
//! [`Special::ALL`] order, followed by 1024 reserved patch tokens.

use std::collections::BTreeMap;

use thiserror::Error;

pub const N_BYTE_TOKENS: usize = 256;
pub const N_PATCH_TOKENS: usize = 1024;

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizerError {
    #[error("unknown token id {0}")]
    UnknownId(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Pad,
    Bos,
    End,
    Mask,
    Bb,
    Qa,
    Mae,
    Mdtg,
}

impl Special {
    pub const ALL: [Special; 8] = [
        Special::Pad,
        Special::Bos,
        Special::End,
        Special::Mask,
        Special::Bb,
        Special::Qa,
        Special::Mae,
        Special::Mdtg,
    ];

    pub fn text(self) -> &'static str {
        match self {
            Special::Pad => "<pad>",
            Special::Bos => "<s>",
            Special::End => "</s>",
            Special::Mask => "<mask>",
            Special::Bb => "[BB]",
            Special::Qa => "[QA]",
            Special::Mae => "[MAE]",
            Special::Mdtg => "[MDTG]",
        }
    }

    pub fn id(self) -> TokenId {
        (N_BYTE_TOKENS + self as usize) as TokenId
    }
}

pub const N_SPECIALS: usize = Special::ALL.len();
pub const VOCAB_SIZE: usize = N_BYTE_TOKENS + N_SPECIALS + N_PATCH_TOKENS;

/// Stateless; every instance has the same layout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub fn new() -> Self {
        Tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn special(&self, s: Special) -> TokenId {
        s.id()
    }

    pub fn end(&self) -> TokenId {
        Special::End.id()
    }

    pub fn patch_token(&self, i: usize) -> Option<TokenId> {
        (i < N_PATCH_TOKENS).then(|| (N_BYTE_TOKENS + N_SPECIALS + i) as TokenId)
    }

    pub fn is_byte(&self, id: TokenId) -> bool {
        (id as usize) < N_BYTE_TOKENS
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.bytes().map(TokenId::from).collect()
    }

    /// Byte runs are decoded as UTF-8 (lossily); specials render as their names.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut bytes = Vec::new();
        for &id in ids {
            let i = id as usize;
            if i < N_BYTE_TOKENS {
                bytes.push(i as u8);
                continue;
            }
            out.push_str(&String::from_utf8_lossy(&bytes));
            bytes.clear();
            out.push_str(&self.token_name(id)?);
        }
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    pub fn token_name(&self, id: TokenId) -> Result<String, TokenizerError> {
        let i = id as usize;
        if i < N_BYTE_TOKENS {
            Ok(format!("<0x{i:02X}>"))
        } else if i < N_BYTE_TOKENS + N_SPECIALS {
            Ok(Special::ALL[i - N_BYTE_TOKENS].text().to_string())
        } else if i < VOCAB_SIZE {
            Ok(format!("<patch_{}>", i - N_BYTE_TOKENS - N_SPECIALS))
        } else {
            Err(TokenizerError::UnknownId(id))
        }
    }

    /// `{token name → id}` for the whole vocabulary.
    pub fn manifest(&self) -> BTreeMap<String, TokenId> {
        (0..VOCAB_SIZE as TokenId)
            .map(|id| (self.token_name(id).expect("id in range"), id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let t = Tokenizer::new();
        assert_eq!(t.vocab_size(), 256 + 8 + 1024);
        assert_eq!(t.encode(""), Vec::<TokenId>::new());
        assert_eq!(t.encode("A"), vec![0x41]);
        assert_eq!(t.decode(&[t.end()]).unwrap(), "</s>");
        assert_eq!(t.decode(&[VOCAB_SIZE as TokenId]), Err(TokenizerError::UnknownId(1288)));
        assert_eq!(t.patch_token(0), Some(264));
        assert_eq!(t.patch_token(1024), None);
        assert!(Special::ALL.iter().all(|s| !t.is_byte(s.id())));
    }

    #[test]
    fn manifest_is_dense_and_unique() {
        let m = Tokenizer::new().manifest();
        assert_eq!(m.len(), VOCAB_SIZE);
        let mut ids: Vec<_> = m.values().copied().collect();
        ids.sort();
        assert_eq!(ids, (0..VOCAB_SIZE as TokenId).collect::<Vec<_>>());
        assert_eq!(m["[QA]"], Special::Qa.id());
    }

    #[test]
    fn mixed_decode() {
        let t = Tokenizer::new();
        let mut ids = vec![Special::Qa.id()];
        ids.extend(t.encode("hi é"));
        ids.push(t.end());
        assert_eq!(t.decode(&ids).unwrap(), "[QA]hi é</s>");
        assert_eq!(t.decode(&[0xC3]).unwrap(), "\u{FFFD}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn ascii_round_trip(s in "[ -~]{0,40}") {
            let t = Tokenizer::new();
            prop_assert_eq!(t.decode(&t.encode(&s)).unwrap(), s);
        }
    }
}
