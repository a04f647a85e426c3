use std::fmt::Write;

use super::lexicon::{Atom, ChunkGrammar, Element, Lexicon};

/// Lower-cased tokens with punctuation removed.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Abbreviations that do not end a sentence.
pub const ABBREVIATIONS: [&str; 12] = [
    "mr", "mrs", "ms", "dr", "st", "vs", "etc", "e.g", "i.e", "approx", "cf", "fig",
];

/// Splits on `.`, `!` or `?` followed by whitespace or end of text, except
/// after a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (n, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let at_break = chars.get(n + 1).map_or(true, |&(_, next)| next.is_whitespace());
        if !at_break {
            continue;
        }
        let word = text[start..i]
            .rsplit(char::is_whitespace)
            .next()
            .unwrap_or("")
            .to_lowercase();
        if c == '.' && ABBREVIATIONS.contains(&word.as_str()) {
            continue;
        }
        let end = i + c.len_utf8();
        push_trimmed(&mut out, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChunkNode {
    Token { word: String, tag: String },
    Chunk { label: String, children: Vec<ChunkNode> },
}

impl ChunkNode {
    pub fn label(&self) -> &str {
        match self {
            ChunkNode::Token { tag, .. } => tag,
            ChunkNode::Chunk { label, .. } => label,
        }
    }

    pub fn is_token(&self) -> bool {
        matches!(self, ChunkNode::Token { .. })
    }

    pub fn children(&self) -> &[ChunkNode] {
        match self {
            ChunkNode::Token { .. } => &[],
            ChunkNode::Chunk { children, .. } => children,
        }
    }

    /// Words covered by this node, left to right.
    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ChunkNode::Token { word, .. } => out.push(word),
            ChunkNode::Chunk { children, .. } => children.iter().for_each(|c| c.collect_words(out)),
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            ChunkNode::Token { word, tag } => write!(out, "{word}/{tag}").unwrap(),
            ChunkNode::Chunk { label, children } => {
                write!(out, "({label}").unwrap();
                for c in children {
                    out.push(' ');
                    c.render(out);
                }
                out.push(')');
            }
        }
    }
}

/// Shallow constituency tree of one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkTree {
    pub root: ChunkNode,
}

impl ChunkTree {
    /// Bracketed form, e.g. `(S (NP a/det chair/noun))`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.root.render(&mut s);
        s
    }

    /// Word span `[start, end)` of every chunk, in pre-order.
    pub fn spans(&self) -> Vec<(String, usize, usize)> {
        fn walk(n: &ChunkNode, pos: &mut usize, out: &mut Vec<(String, usize, usize)>) {
            match n {
                ChunkNode::Token { .. } => *pos += 1,
                ChunkNode::Chunk { label, children } => {
                    let idx = out.len();
                    out.push((label.clone(), *pos, *pos));
                    children.iter().for_each(|c| walk(c, pos, out));
                    out[idx].2 = *pos;
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut 0, &mut out);
        out
    }
}

fn atom_matches(atom: &Atom, node: &ChunkNode) -> bool {
    match (atom, node) {
        (Atom::Tag(t), ChunkNode::Token { tag, .. }) => t == tag,
        (Atom::Chunk(l), ChunkNode::Chunk { label, .. }) => l == label,
        (Atom::Any(alts), n) => alts.iter().any(|a| atom_matches(a, n)),
        _ => false,
    }
}

/// Longest end position reachable by matching `pattern[e..]` from `pos`.
fn longest_end(pattern: &[Element], e: usize, items: &[ChunkNode], pos: usize) -> Option<usize> {
    let Some(el) = pattern.get(e) else {
        return Some(pos);
    };
    let mut count = 0;
    while count < el.max && pos + count < items.len() && atom_matches(&el.atom, &items[pos + count]) {
        count += 1;
    }
    if count < el.min {
        return None;
    }
    (el.min..=count)
        .rev()
        .filter_map(|c| longest_end(pattern, e + 1, items, pos + c))
        .max()
}

/// Tags the sentence and applies each grammar rule as one longest-match pass.
pub fn chunk(sentence: &str, lexicon: &Lexicon, grammar: &ChunkGrammar) -> ChunkTree {
    let mut items: Vec<ChunkNode> = tokenize(sentence)
        .into_iter()
        .map(|word| ChunkNode::Token {
            tag: lexicon.tag(&word).to_string(),
            word,
        })
        .collect();
    for rule in &grammar.rules {
        let mut out = Vec::with_capacity(items.len());
        let mut pos = 0;
        while pos < items.len() {
            match longest_end(&rule.pattern, 0, &items, pos) {
                Some(end) if end > pos => {
                    out.push(ChunkNode::Chunk {
                        label: rule.label.clone(),
                        children: items[pos..end].to_vec(),
                    });
                    pos = end;
                }
                _ => {
                    out.push(items[pos].clone());
                    pos += 1;
                }
            }
        }
        items = out;
    }
    ChunkTree {
        root: ChunkNode::Chunk {
            label: grammar.root().to_string(),
            children: items,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(s: &str) -> String {
        chunk(s, &Lexicon::default(), &ChunkGrammar::default()).render()
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(split_sentences("A chair. It has four legs."), vec!["A chair.", "It has four legs."]);
        assert_eq!(split_sentences("a chair with legs"), vec!["a chair with legs"]);
        assert_eq!(split_sentences("   "), Vec::<String>::new());
        assert_eq!(split_sentences("Approx. two legs! Fine?"), vec!["Approx. two legs!", "Fine?"]);
        assert_eq!(split_sentences("Size 1.5 units. Ok"), vec!["Size 1.5 units.", "Ok"]);
    }

    #[test]
    fn trees() {
        assert_eq!(tree("a black chair"), "(S (NP a/det black/adj chair/noun))");
        assert_eq!(tree("it is"), "(S it/pron (VP is/verb))");
        assert_eq!(
            tree("A chair with cross bars."),
            "(S (NP a/det chair/noun) (PP with/prep (NP cross/adj bars/noun)))"
        );
        assert_eq!(
            tree("It stands on four legs."),
            "(S it/pron (VP stands/verb (PP on/prep (NP four/num legs/noun))))"
        );
    }

    #[test]
    fn spans_cover_tokens() {
        let t = chunk("the back is short", &Lexicon::default(), &ChunkGrammar::default());
        assert_eq!(
            t.spans(),
            vec![
                ("S".to_string(), 0, 4),
                ("NP".to_string(), 0, 2),
                ("VP".to_string(), 2, 4),
                ("ADJP".to_string(), 3, 4)
            ]
        );
    }
}
