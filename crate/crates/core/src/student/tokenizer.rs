use core::hash::Hasher;

use alloc::vec::Vec;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::schema::ItemText;

/// Whitespace tokenizer that hashes lowercase tokens into `vocab` buckets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashTokenizer {
    pub vocab: usize,
    /// Sequences are cut to this many ids.
    pub max_len: usize,
}

impl Default for HashTokenizer {
    fn default() -> Self {
        Self {
            vocab: 1 << 15,
            max_len: 256,
        }
    }
}

impl HashTokenizer {
    pub fn new(vocab: usize, max_len: usize) -> Self {
        Self { vocab, max_len }
    }

    /// FNV-1a over the token's bytes, modulo the vocabulary size.
    pub fn token_id(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.vocab as u64) as usize
    }

    /// Id of the separator placed between text fields.
    pub fn newline_id(&self) -> usize {
        self.token_id("\n")
    }

    pub fn encode_str(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            if out.len() == self.max_len {
                break;
            }
            out.push(self.token_id(&tok.to_lowercase()));
        }
        out
    }

    /// Title, category, description, then reviews, with a newline token
    /// between non-empty fields.
    pub fn encode_item(&self, item: &ItemText) -> Vec<usize> {
        let mut out = Vec::new();
        for field in item.fields() {
            let ids = self.encode_str(field);
            if ids.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push(self.newline_id());
            }
            out.extend(ids);
            if out.len() >= self.max_len {
                out.truncate(self.max_len);
                break;
            }
        }
        out
    }
}
