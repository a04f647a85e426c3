use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::chunk::{chunk, split_sentences, ChunkNode, ChunkTree};
use super::lexicon::{ChunkGrammar, Lexicon};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub tokens: Vec<String>,
    pub label: String,
    /// Index of the source sentence within its caption.
    pub sentence: usize,
    /// 1-based position within the caption's phrase sequence.
    pub ordinal: usize,
}

impl Phrase {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn node_valid(node: &ChunkNode, valid_types: &BTreeSet<String>, stopwords: &BTreeSet<String>) -> bool {
    !node.is_token()
        && valid_types.contains(node.label())
        && node.words().iter().any(|w| !stopwords.contains(*w))
}

/// Depth-first, left-to-right leaf phrases. Descent stops at a chunk with any
/// invalid child; that chunk is kept whole if it is valid itself.
pub fn validate_and_leaves(
    tree: &ChunkTree,
    valid_types: &BTreeSet<String>,
    stopwords: &BTreeSet<String>,
) -> Vec<Phrase> {
    fn visit(
        node: &ChunkNode,
        valid_types: &BTreeSet<String>,
        stopwords: &BTreeSet<String>,
        out: &mut Vec<Phrase>,
    ) {
        let children = node.children();
        let stop_here = children.iter().all(ChunkNode::is_token)
            || children.iter().any(|c| !node_valid(c, valid_types, stopwords));
        if stop_here {
            if node_valid(node, valid_types, stopwords) {
                out.push(Phrase {
                    tokens: node.words().into_iter().map(str::to_string).collect(),
                    label: node.label().to_string(),
                    sentence: 0,
                    ordinal: 0,
                });
            }
        } else {
            children.iter().for_each(|c| visit(c, valid_types, stopwords, out));
        }
    }
    let mut out = Vec::new();
    visit(&tree.root, valid_types, stopwords, &mut out);
    if out.is_empty() {
        log::debug!("no valid phrases in {}", tree.render());
    }
    out
}

/// All phrases of a caption, numbered across its sentences.
pub fn caption_phrases(text: &str, lexicon: &Lexicon, grammar: &ChunkGrammar) -> Vec<Phrase> {
    let mut out: Vec<Phrase> = Vec::new();
    for (s, sentence) in split_sentences(text).iter().enumerate() {
        let tree = chunk(sentence, lexicon, grammar);
        for mut p in validate_and_leaves(&tree, grammar.valid_types(), lexicon.stopwords()) {
            p.sentence = s;
            p.ordinal = out.len() + 1;
            out.push(p);
        }
    }
    out
}

/// The first t phrases of a caption; `text` joins them with single spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSequence {
    pub phrases: Vec<String>,
    pub text: String,
}

impl PhraseSequence {
    pub fn t(&self) -> usize {
        self.phrases.len()
    }
}

/// Prefix sequences I_1..I_T.
pub fn phrase_sequences(phrases: &[Phrase]) -> Vec<PhraseSequence> {
    let mut out: Vec<PhraseSequence> = Vec::with_capacity(phrases.len());
    for p in phrases {
        let phrase = p.text();
        let (mut list, text) = match out.last() {
            Some(prev) => (prev.phrases.clone(), format!("{} {phrase}", prev.text)),
            None => (Vec::new(), phrase.clone()),
        };
        list.push(phrase);
        out.push(PhraseSequence { phrases: list, text });
    }
    out
}
