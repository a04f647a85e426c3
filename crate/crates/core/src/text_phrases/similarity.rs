use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::stable_hash;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.94;

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Lower-case word tokens with number words rewritten as digits.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let t = t.to_lowercase();
            match NUMBER_WORDS.iter().position(|w| *w == t) {
                Some(n) => n.to_string(),
                None => t,
            }
        })
        .collect()
}

/// Word unigram and character trigram counts of the non-stop words, keyed by
/// feature hash.
fn features(text: &str, stopwords: &BTreeSet<String>) -> BTreeMap<u64, f64> {
    let words: Vec<String> = normalize_words(text)
        .into_iter()
        .filter(|w| !stopwords.contains(w))
        .collect();
    let mut out = BTreeMap::new();
    for w in &words {
        *out.entry(stable_hash(format!("w:{w}").as_bytes())).or_insert(0.0) += 1.0;
    }
    let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
    for tri in padded.windows(3) {
        let s: String = tri.iter().collect();
        *out.entry(stable_hash(format!("c:{s}").as_bytes())).or_insert(0.0) += 1.0;
    }
    out
}

/// Sparse unit vector sorted by feature id.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseVector {
    pub ids: Vec<u64>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.ids.len() && j < other.ids.len() {
            match self.ids[i].cmp(&other.ids[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }
}

/// TF-IDF embedder fitted on a set of texts; idf = ln((1+N)/(1+df)) + 1.
#[derive(Clone, Debug)]
pub struct TfIdf {
    docs: usize,
    df: HashMap<u64, usize>,
    stopwords: BTreeSet<String>,
}

impl TfIdf {
    /// Fits document frequencies, ignoring the given stop words. Duplicate
    /// texts count once.
    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(texts: I, stopwords: &BTreeSet<String>) -> Self {
        let unique: BTreeSet<&str> = texts.into_iter().collect();
        let mut df = HashMap::new();
        for t in &unique {
            for id in features(t, stopwords).keys() {
                *df.entry(*id).or_insert(0) += 1;
            }
        }
        Self {
            docs: unique.len(),
            df,
            stopwords: stopwords.clone(),
        }
    }

    pub fn idf(&self, id: u64) -> f64 {
        let df = self.df.get(&id).copied().unwrap_or(0);
        ((1.0 + self.docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn document_frequency(&self, id: u64) -> usize {
        self.df.get(&id).copied().unwrap_or(0)
    }

    /// L2-normalized TF-IDF vector; empty text gives the zero vector.
    pub fn embed(&self, text: &str) -> SparseVector {
        let mut v = SparseVector::default();
        for (id, tf) in features(text, &self.stopwords) {
            v.ids.push(id);
            v.values.push(tf * self.idf(id));
        }
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        self.embed(a).dot(&self.embed(b))
    }
}

/// All index pairs `(i, j)`, `i < j`, with cosine at least `threshold`.
///
/// Exact: features are ordered rarest first, and only a prefix of each vector
/// whose remaining norm is below the threshold is probed, since a pair sharing
/// none of those features cannot reach it.
pub fn similar_pairs(model: &TfIdf, texts: &[&str], threshold: f64) -> Result<Vec<(usize, usize, f64)>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} must lie in (0, 1]")));
    }
    let vectors: Vec<SparseVector> = texts.iter().map(|t| model.embed(t)).collect();
    let mut postings: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, v) in vectors.iter().enumerate() {
        for &id in &v.ids {
            postings.entry(id).or_default().push(i);
        }
    }
    let mut pairs = Vec::new();
    let mut seen = vec![usize::MAX; vectors.len()];
    for (i, v) in vectors.iter().enumerate() {
        let mut order: Vec<usize> = (0..v.ids.len()).collect();
        order.sort_by_key(|&f| (model.document_frequency(v.ids[f]), v.ids[f]));
        let mut suffix: f64 = v.values.iter().map(|x| x * x).sum();
        for f in order {
            if suffix.sqrt() < threshold - 1e-12 {
                break;
            }
            suffix -= v.values[f] * v.values[f];
            for &j in &postings[&v.ids[f]] {
                if j <= i || seen[j] == i {
                    continue;
                }
                seen[j] = i;
                let c = v.dot(&vectors[j]).min(1.0);
                if c >= threshold {
                    pairs.push((i, j, c));
                }
            }
        }
    }
    pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(pairs)
}
