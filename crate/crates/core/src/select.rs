//! POS-driven candidate selection: every word contributes the trees its
//! lexicon entries select for each of its tags.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::Grammar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SentenceError {
    #[error("token {index} (`{token}`): {message}")]
    BadToken { index: usize, token: String, message: String },
}

/// A word with its N-best POS tags, most likely first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedWord {
    pub surface: String,
    pub tags: Vec<String>,
}

impl TaggedWord {
    pub fn new(surface: &str, tags: &[&str]) -> Self {
        let mut out: Vec<String> = Vec::new();
        for t in tags {
            if !out.iter().any(|x| x == t) {
                out.push(t.to_string());
            }
        }
        TaggedWord { surface: surface.to_string(), tags: out }
    }
}

/// Parses one line of `word/TAG` or `word/TAG1|TAG2` tokens. The last `/`
/// separates the word from its tags, so words may themselves contain `/`.
pub fn parse_tagged_line(line: &str) -> Result<Vec<TaggedWord>, SentenceError> {
    line.split_whitespace()
        .enumerate()
        .map(|(index, token)| {
            let bad = |message: &str| SentenceError::BadToken {
                index,
                token: token.to_string(),
                message: message.to_string(),
            };
            let (word, tags) = token.rsplit_once('/').ok_or_else(|| bad("missing `/TAG`"))?;
            if word.is_empty() {
                return Err(bad("empty word"));
            }
            let tags: Vec<&str> = tags.split('|').collect();
            if tags.iter().any(|t| t.is_empty()) {
                return Err(bad("empty tag"));
            }
            let mut seen = BTreeSet::new();
            if !tags.iter().all(|t| seen.insert(*t)) {
                return Err(bad("duplicate tag"));
            }
            Ok(TaggedWord::new(word, &tags))
        })
        .collect()
}

pub fn format_tagged_line(sentence: &[TaggedWord]) -> String {
    sentence.iter().map(|w| format!("{}/{}", w.surface, w.tags.join("|"))).collect::<Vec<_>>().join(" ")
}

/// Per-position candidate trees. Each candidate at position `i` is anchored
/// by word `i`; names are kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeAssignment {
    pub positions: Vec<BTreeSet<String>>,
}

impl TreeAssignment {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `(tree name, anchor index)` pairs in position order.
    pub fn candidates(&self) -> impl Iterator<Item = (&str, usize)> {
        self.positions.iter().enumerate().flat_map(|(i, set)| set.iter().map(move |t| (t.as_str(), i)))
    }

    pub fn total(&self) -> usize {
        self.positions.iter().map(BTreeSet::len).sum()
    }

    pub fn has_empty_position(&self) -> bool {
        self.positions.iter().any(BTreeSet::is_empty)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectOptions {
    /// For a word with no lexicon entry under any of its tags, take every
    /// tree whose anchor POS is one of those tags.
    pub open_class_fallback: bool,
}

fn lookup<'a>(grammar: &Grammar, surface: &'a str) -> std::borrow::Cow<'a, str> {
    if grammar.knows_word(surface) {
        return surface.into();
    }
    let lower = surface.to_lowercase();
    if lower != surface && grammar.knows_word(&lower) {
        return lower.into();
    }
    surface.into()
}

/// Candidate trees for each word, given its tags. Words are looked up as
/// written and, failing that, lowercased.
pub fn select_trees(grammar: &Grammar, sentence: &[TaggedWord]) -> TreeAssignment {
    select_trees_with(grammar, sentence, SelectOptions::default())
}

pub fn select_trees_with(grammar: &Grammar, sentence: &[TaggedWord], opts: SelectOptions) -> TreeAssignment {
    let positions = sentence
        .iter()
        .map(|w| {
            let key = lookup(grammar, &w.surface);
            let mut set = BTreeSet::new();
            for tag in &w.tags {
                set.extend(grammar.trees_for_word(&key, tag));
            }
            if set.is_empty() && opts.open_class_fallback {
                set.extend(grammar.trees().filter(|t| w.tags.contains(&t.anchor_pos)).map(|t| t.name.clone()));
            }
            set
        })
        .collect();
    TreeAssignment { positions }
}

/// Candidate trees ignoring tags: every POS the lexicon lists for each word.
pub fn select_untagged(grammar: &Grammar, words: &[&str]) -> TreeAssignment {
    let positions = words
        .iter()
        .map(|w| {
            let key = lookup(grammar, w);
            grammar.pos_for_word(&key).iter().flat_map(|p| grammar.trees_for_word(&key, p)).collect()
        })
        .collect();
    TreeAssignment { positions }
}
