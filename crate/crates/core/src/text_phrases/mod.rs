//! Captions to phrase sequences to weighted many-to-many shape sets.

mod chunk;
mod dataset;
mod lexicon;
mod phrases;
mod similarity;

pub use chunk::{chunk, split_sentences, tokenize, ChunkNode, ChunkTree, ABBREVIATIONS};
pub use dataset::{
    build_dataset, corpus_sequences, load_dataset, pair_shapes, read_dataset, save_dataset,
    write_dataset, DatasetEntry, SourcedSequence,
};
pub use lexicon::{ChunkGrammar, Lexicon, DEFAULT_GRAMMAR, DEFAULT_LEXICON};
pub use phrases::{caption_phrases, phrase_sequences, validate_and_leaves, Phrase, PhraseSequence};
pub use similarity::{normalize_words, similar_pairs, SparseVector, TfIdf, DEFAULT_THRESHOLD};
