//! Penn-style bracketed phrase-structure trees and Gorn addresses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bracket syntax error at byte {position}: {message}")]
pub struct BracketError {
    pub position: usize,
    pub message: String,
}

/// A labeled ordered tree with words at the leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PennTree {
    Node { label: String, children: Vec<PennTree> },
    Word(String),
}

impl PennTree {
    pub fn node(label: impl Into<String>, children: Vec<PennTree>) -> Self {
        PennTree::Node { label: label.into(), children }
    }

    pub fn word(text: impl Into<String>) -> Self {
        PennTree::Word(text.into())
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            PennTree::Node { label, .. } => Some(label),
            PennTree::Word(_) => None,
        }
    }

    pub fn children(&self) -> &[PennTree] {
        match self {
            PennTree::Node { children, .. } => children,
            PennTree::Word(_) => &[],
        }
    }

    /// Leaf words in left-to-right order.
    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PennTree::Word(w) => out.push(w),
            PennTree::Node { children, .. } => {
                for c in children {
                    c.collect_words(out);
                }
            }
        }
    }

    pub fn word_count(&self) -> usize {
        match self {
            PennTree::Word(_) => 1,
            PennTree::Node { children, .. } => children.iter().map(PennTree::word_count).sum(),
        }
    }

    /// Number of labeled (non-word) nodes.
    pub fn node_count(&self) -> usize {
        match self {
            PennTree::Word(_) => 0,
            PennTree::Node { children, .. } => 1 + children.iter().map(PennTree::node_count).sum::<usize>(),
        }
    }

    /// A node whose only child is a single word.
    pub fn is_preterminal(&self) -> bool {
        matches!(self, PennTree::Node { children, .. }
            if children.len() == 1 && matches!(children[0], PennTree::Word(_)))
    }

    /// Parses one bracketed tree. Both `( )` and `[ ]` are accepted, and a
    /// PTB-style unlabeled outer wrapper `( (S ...) )` is removed.
    pub fn parse(input: &str) -> Result<PennTree, BracketError> {
        let mut p = BracketParser { src: input, pos: 0 };
        p.skip_ws();
        let tree = p.tree()?;
        p.skip_ws();
        if p.pos != input.len() {
            return Err(p.error("trailing input after tree"));
        }
        Ok(tree)
    }
}

impl fmt::Display for PennTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PennTree::Word(w) => f.write_str(w),
            PennTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for PennTree {
    type Err = BracketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PennTree::parse(s)
    }
}

struct BracketParser<'a> {
    src: &'a str,
    pos: usize,
}

impl BracketParser<'_> {
    fn error(&self, message: &str) -> BracketError {
        BracketError { position: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']') {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn tree(&mut self) -> Result<PennTree, BracketError> {
        let close = match self.peek() {
            Some('(') => ')',
            Some('[') => ']',
            Some(_) => {
                let a = self.atom();
                if a.is_empty() {
                    return Err(self.error("unexpected closing bracket"));
                }
                return Ok(PennTree::Word(a.to_string()));
            }
            None => return Err(self.error("unexpected end of input")),
        };
        self.pos += 1;
        self.skip_ws();
        let label = self.atom().to_string();
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(c) if c == close => {
                    self.pos += 1;
                    break;
                }
                Some(')') | Some(']') => return Err(self.error("mismatched closing bracket")),
                None => return Err(self.error("unclosed bracket")),
                Some(_) => children.push(self.tree()?),
            }
        }
        if label.is_empty() {
            // `( (S ...) )` wrapper or `[ ... ]` without a label
            return match children.len() {
                1 => Ok(children.pop().unwrap()),
                _ => Err(self.error("unlabeled bracket must wrap exactly one tree")),
            };
        }
        if children.is_empty() {
            return Err(self.error("labeled bracket has no children"));
        }
        Ok(PennTree::Node { label, children })
    }
}

/// Gorn address of a node in an elementary tree: the root is `ε`, and the
/// k-th child (1-based) of the node at `p` is `p.k`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct GornAddress(Vec<u16>);

impl GornAddress {
    pub fn root() -> Self {
        GornAddress(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.push(k as u16);
        GornAddress(v)
    }

    pub fn steps(&self) -> &[u16] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for GornAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl FromStr for GornAddress {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if matches!(s, "" | "ε" | "e" | "0") {
            return Ok(GornAddress::root());
        }
        s.split('.')
            .map(|p| match p.parse::<u16>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(format!("invalid Gorn address `{s}`")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(GornAddress)
    }
}

impl From<GornAddress> for String {
    fn from(a: GornAddress) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for GornAddress {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
