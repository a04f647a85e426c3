use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::lexicon::{ChunkGrammar, Lexicon};
use super::phrases::{caption_phrases, phrase_sequences};
use super::similarity::{similar_pairs, TfIdf};
use crate::voxel_shapes::CorpusEntry;
use crate::{Error, Result};

/// A phrase sequence with its many-to-many shape set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sequence_text: String,
    pub phrases: Vec<String>,
    pub shape_ids: Vec<u32>,
    pub weights: Vec<f64>,
    /// Number of caption prefixes that produced this text.
    #[serde(default = "one")]
    pub occurrences: u32,
}

fn one() -> u32 {
    1
}

impl DatasetEntry {
    pub fn t(&self) -> usize {
        self.phrases.len()
    }

    /// Text of the sequence without its last phrase; empty for t = 1.
    pub fn prefix_text(&self) -> String {
        self.phrases[..self.phrases.len().saturating_sub(1)].join(" ")
    }
}

/// A sequence as produced from one caption of one shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourcedSequence {
    pub text: String,
    pub phrases: Vec<String>,
    pub shape_id: u32,
}

/// Every prefix sequence of every caption in the corpus.
pub fn corpus_sequences(corpus: &[CorpusEntry], lexicon: &Lexicon, grammar: &ChunkGrammar) -> Vec<SourcedSequence> {
    let mut out = Vec::new();
    for entry in corpus {
        for caption in &entry.captions {
            for seq in phrase_sequences(&caption_phrases(caption, lexicon, grammar)) {
                out.push(SourcedSequence {
                    text: seq.text,
                    phrases: seq.phrases,
                    shape_id: entry.id,
                });
            }
        }
    }
    out
}

/// Builds one entry per distinct sequence text, sorted by text. Shapes that
/// produced the text get weight 1.0; shapes of other texts with cosine at
/// least `threshold` get that cosine (the largest one if reached twice).
pub fn pair_shapes(sequences: &[SourcedSequence], stopwords: &BTreeSet<String>, threshold: f64) -> Result<Vec<DatasetEntry>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} must lie in (0, 1]")));
    }
    let mut by_text: BTreeMap<&str, (&[String], BTreeSet<u32>, u32)> = BTreeMap::new();
    for s in sequences {
        let slot = by_text
            .entry(&s.text)
            .or_insert_with(|| (&s.phrases, BTreeSet::new(), 0));
        slot.1.insert(s.shape_id);
        slot.2 += 1;
    }
    let texts: Vec<&str> = by_text.keys().copied().collect();
    let origins: Vec<&BTreeSet<u32>> = by_text.values().map(|v| &v.1).collect();
    let model = TfIdf::fit(texts.iter().copied(), stopwords);
    let pairs = similar_pairs(&model, &texts, threshold)?;

    let mut weights: Vec<BTreeMap<u32, f64>> = origins
        .iter()
        .map(|o| o.iter().map(|&id| (id, 1.0)).collect())
        .collect();
    for &(i, j, c) in &pairs {
        for (a, b) in [(i, j), (j, i)] {
            for &id in origins[b] {
                let w = weights[a].entry(id).or_insert(c);
                *w = w.max(c);
            }
        }
    }
    Ok(by_text
        .values()
        .zip(texts)
        .zip(weights)
        .map(|(((phrases, _, occurrences), text), w)| {
            let mut shapes: Vec<(u32, f64)> = w.into_iter().collect();
            shapes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            DatasetEntry {
                sequence_text: text.to_string(),
                phrases: phrases.to_vec(),
                shape_ids: shapes.iter().map(|s| s.0).collect(),
                weights: shapes.iter().map(|s| s.1).collect(),
                occurrences: *occurrences,
            }
        })
        .collect())
}

pub fn build_dataset(
    corpus: &[CorpusEntry],
    lexicon: &Lexicon,
    grammar: &ChunkGrammar,
    threshold: f64,
) -> Result<Vec<DatasetEntry>> {
    pair_shapes(&corpus_sequences(corpus, lexicon, grammar), lexicon.stopwords(), threshold)
}

pub fn write_dataset<W: Write>(mut w: W, entries: &[DatasetEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<DatasetEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: DatasetEntry = serde_json::from_str(&line)
            .map_err(|err| Error::Format(format!("dataset line {}: {err}", lineno + 1)))?;
        if e.phrases.is_empty() || e.shape_ids.is_empty() || e.shape_ids.len() != e.weights.len() {
            return Err(Error::Format(format!("dataset line {}: malformed entry", lineno + 1)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn save_dataset(path: &std::path::Path, entries: &[DatasetEntry]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &std::path::Path) -> Result<Vec<DatasetEntry>> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
