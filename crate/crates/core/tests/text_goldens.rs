//! Byte-exact golden files for the caption parsing stages. Set
//! `UPDATE_GOLDENS=1` to rewrite them after an intended change.

mod common;

use common::goldens::*;
use recshape_core::text_phrases::{caption_phrases, phrase_sequences, ChunkGrammar, Lexicon};

#[test]
fn sentences_match_golden() {
    check("sentences.txt", &render_sentences(&captions()));
}

#[test]
fn chunks_match_golden() {
    check("chunks.txt", &render_chunks(&captions(), &Lexicon::default(), &ChunkGrammar::default()));
}

#[test]
fn leaves_match_golden() {
    check("leaves.txt", &render_leaves(&captions(), &Lexicon::default(), &ChunkGrammar::default()));
}

#[test]
fn sequences_match_golden() {
    check("sequences.txt", &render_sequences(&captions(), &Lexicon::default(), &ChunkGrammar::default()));
}

#[test]
fn sequences_are_prefix_closed() {
    let (lex, gram) = (Lexicon::default(), ChunkGrammar::default());
    for c in captions() {
        let seqs = phrase_sequences(&caption_phrases(&c, &lex, &gram));
        for w in seqs.windows(2) {
            assert!(w[1].text.starts_with(&w[0].text), "{:?} / {:?}", w[0].text, w[1].text);
            assert_eq!(w[1].t(), w[0].t() + 1);
            assert_eq!(w[1].phrases[..w[0].t()], w[0].phrases[..]);
        }
    }
}
