//! Caption fixture, golden-file comparison and the text renderings pinned by
//! the golden files.

use std::fmt::Write;
use std::path::PathBuf;

use recshape_core::text_phrases::{caption_phrases, chunk, phrase_sequences, split_sentences, ChunkGrammar, Lexicon};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn captions() -> Vec<String> {
    std::fs::read_to_string(fixture("captions.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

/// First difference from the golden file, if any. Rewrites the file instead
/// when `UPDATE_GOLDENS` is set.
pub fn golden_mismatch(name: &str, actual: &str) -> Option<String> {
    let path = fixture(&format!("golden/{name}"));
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return None;
    }
    let expected = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(e) => return Some(format!("{}: {e}", path.display())),
    };
    if expected == actual {
        return None;
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Some(format!("{name} differs from golden at line {}", line + 1))
}

pub fn check(name: &str, actual: &str) {
    if let Some(msg) = golden_mismatch(name, actual) {
        panic!("{msg}");
    }
}

pub fn render_sentences(captions: &[String]) -> String {
    let mut out = String::new();
    for (i, c) in captions.iter().enumerate() {
        for s in split_sentences(c) {
            writeln!(out, "{i}\t{s}").unwrap();
        }
    }
    out
}

pub fn render_chunks(captions: &[String], lexicon: &Lexicon, grammar: &ChunkGrammar) -> String {
    let mut out = String::new();
    for (i, c) in captions.iter().enumerate() {
        for s in split_sentences(c) {
            writeln!(out, "{i}\t{}", chunk(&s, lexicon, grammar).render()).unwrap();
        }
    }
    out
}

pub fn render_leaves(captions: &[String], lexicon: &Lexicon, grammar: &ChunkGrammar) -> String {
    let mut out = String::new();
    for (i, c) in captions.iter().enumerate() {
        for p in caption_phrases(c, lexicon, grammar) {
            writeln!(out, "{i}\t{}\t{}\t{}\t{}", p.sentence, p.ordinal, p.label, p.text()).unwrap();
        }
    }
    out
}

pub fn render_sequences(captions: &[String], lexicon: &Lexicon, grammar: &ChunkGrammar) -> String {
    let mut out = String::new();
    for (i, c) in captions.iter().enumerate() {
        for s in phrase_sequences(&caption_phrases(c, lexicon, grammar)) {
            writeln!(out, "{i}\t{}\t{}", s.t(), s.text).unwrap();
        }
    }
    out
}
