use std::collections::{BTreeMap, BTreeSet};

use crate::{Error, Result};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

/// Closed word list mapping words to coarse tags, plus the stop-word list.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    tags: BTreeMap<String, String>,
    stop: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}

impl Lexicon {
    /// Parses `tag: word word ...` lines; `stop:` lines fill the stop list.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tags = BTreeMap::new();
        let mut stop = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (tag, words) = line
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("lexicon line {}: expected `tag: words`", lineno + 1)))?;
            let tag = tag.trim();
            for word in words.split_whitespace() {
                let word = word.to_lowercase();
                if tag == "stop" {
                    stop.insert(word);
                } else if let Some(prev) = tags.insert(word.clone(), tag.to_string()) {
                    return Err(Error::Config(format!(
                        "lexicon line {}: `{word}` already tagged {prev}",
                        lineno + 1
                    )));
                }
            }
        }
        Ok(Self { tags, stop })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Listed tag, else `num` for digit strings, else `noun`.
    pub fn tag<'a>(&'a self, word: &str) -> &'a str {
        match self.tags.get(word) {
            Some(t) => t,
            None if !word.is_empty() && word.chars().all(|c| c.is_ascii_digit()) => "num",
            None => "noun",
        }
    }

    pub fn is_stop(&self, word: &str) -> bool {
        self.stop.contains(word)
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stop
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Atom {
    Tag(String),
    Chunk(String),
    Any(Vec<Atom>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Element {
    pub atom: Atom,
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Rule {
    pub label: String,
    pub pattern: Vec<Element>,
}

pub const DEFAULT_GRAMMAR: &str = include_str!("../../data/grammar.txt");

/// Ordered chunk rules, the valid phrase types and the root label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkGrammar {
    pub(crate) rules: Vec<Rule>,
    valid: BTreeSet<String>,
    root: String,
}

impl Default for ChunkGrammar {
    fn default() -> Self {
        Self::parse(DEFAULT_GRAMMAR).expect("bundled grammar parses")
    }
}

fn parse_atom(s: &str) -> Result<Atom> {
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let alts = inner.split('|').map(|a| parse_atom(a.trim())).collect::<Result<Vec<_>>>()?;
        if alts.is_empty() {
            return Err(Error::Config("empty alternation".into()));
        }
        return Ok(Atom::Any(alts));
    }
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphabetic()) {
        return Err(Error::Config(format!("bad pattern atom `{s}`")));
    }
    if s.chars().all(|c| c.is_ascii_uppercase()) {
        Ok(Atom::Chunk(s.to_string()))
    } else if s.chars().all(|c| c.is_ascii_lowercase()) {
        Ok(Atom::Tag(s.to_string()))
    } else {
        Err(Error::Config(format!("atom `{s}` mixes case")))
    }
}

fn parse_element(s: &str) -> Result<Element> {
    let (body, min, max) = match s.chars().last() {
        Some('?') => (&s[..s.len() - 1], 0, 1),
        Some('*') => (&s[..s.len() - 1], 0, usize::MAX),
        Some('+') => (&s[..s.len() - 1], 1, usize::MAX),
        _ => (s, 1, 1),
    };
    Ok(Element {
        atom: parse_atom(body)?,
        min,
        max,
    })
}

impl ChunkGrammar {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut valid = BTreeSet::new();
        let mut root = "S".to_string();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Config(format!("grammar line {}: {m}", lineno + 1));
            if let Some(types) = line.strip_prefix("valid:") {
                valid.extend(types.split_whitespace().map(str::to_string));
            } else if let Some(r) = line.strip_prefix("root:") {
                root = r.trim().to_string();
            } else if let Some((label, pattern)) = line.split_once("<-") {
                let label = label.trim();
                if label.is_empty() || !label.chars().all(|c| c.is_ascii_uppercase()) {
                    return Err(err(format!("rule label `{label}` must be uppercase")));
                }
                let pattern = pattern
                    .split_whitespace()
                    .map(parse_element)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| err(e.to_string()))?;
                if pattern.is_empty() || pattern.iter().all(|e| e.min == 0) {
                    return Err(err("pattern must require at least one item".into()));
                }
                rules.push(Rule {
                    label: label.to_string(),
                    pattern,
                });
            } else {
                return Err(err(format!("cannot parse `{line}`")));
            }
        }
        if valid.is_empty() {
            return Err(Error::Config("grammar declares no valid phrase types".into()));
        }
        Ok(Self { rules, valid, root })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn valid_types(&self) -> &BTreeSet<String> {
        &self.valid
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        let lex = Lexicon::default();
        assert_eq!(lex.tag("chair"), "noun");
        assert_eq!(lex.tag("florble"), "noun");
        assert_eq!(lex.tag("42"), "num");
        assert_eq!(lex.tag("with"), "prep");
        assert!(lex.is_stop("it") && !lex.is_stop("chair"));
        let g = ChunkGrammar::default();
        assert_eq!(g.valid_types().len(), 18);
        assert_eq!(g.root(), "S");
        assert_eq!(g.rule_count(), 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lexicon::parse("adj: red\nnoun: red").is_err());
        assert!(ChunkGrammar::parse("NP <- det?\nvalid: NP").is_err());
        assert!(ChunkGrammar::parse("NP <- noun").is_err());
        assert!(ChunkGrammar::parse("Np <- noun\nvalid: NP").is_err());
    }

    #[test]
    fn element_syntax() {
        let g = ChunkGrammar::parse("VP <- verb+ (NP|PP)? noun*\nvalid: VP").unwrap();
        let p = &g.rules[0].pattern;
        assert_eq!((p[0].min, p[0].max), (1, usize::MAX));
        assert_eq!(p[1].atom, Atom::Any(vec![Atom::Chunk("NP".into()), Atom::Chunk("PP".into())]));
        assert_eq!((p[2].min, p[2].max), (0, usize::MAX));
    }
}
