use serde::{Deserialize, Serialize};

use crate::stable_hash;
use crate::text_phrases::normalize_words;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed;

/// Feature-hashing text embedder over word unigrams and bigrams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEmbedder {
    pub dim: usize,
    pub hash_seed: u64,
}

impl Default for TextEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_EMBED_DIM,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

impl TextEmbedder {
    pub fn new(dim: usize, hash_seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, hash_seed }
    }

    fn add(&self, v: &mut [f64], feature: &str) {
        let mut bytes = self.hash_seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(feature.as_bytes());
        let h = stable_hash(&bytes);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[((h & 0x7fff_ffff_ffff_ffff) % self.dim as u64) as usize] += sign;
    }

    /// Unit vector, or the zero vector for text without words.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let words = normalize_words(text);
        let mut v = vec![0.0; self.dim];
        for w in &words {
            self.add(&mut v, &format!("u:{w}"));
        }
        for pair in words.windows(2) {
            self.add(&mut v, &format!("b:{} {}", pair[0], pair[1]));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}
