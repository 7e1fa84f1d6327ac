//! Elementary trees, tree families, the lexicon and the tree-frequency table.
//!
//! A grammar file is line oriented. Blank lines and `#` comments are ignored,
//! and the optional section markers `[trees]`, `[families]` and `[lexicon]`
//! are accepted anywhere. Every other line starts with a keyword:
//!
//! ```text
//! tree Noun_with_Det initial = (NP D^ (N N@))
//! tree Adverb_Pre_VP auxiliary ADV = (VP ADV@ VP*)
//! family Intransitive = Indic_Intrans, Imperative_Intrans
//! lex dogs N -> Noun_with_Det, Noun_Phrase
//! ```
//!
//! Leaves carry a kind marker: `@` anchor, `^` substitution, `*` foot. Any node
//! may carry flat features, e.g. `NP^{case=nom}` or `(VP{mode=ind} V@)`. The
//! optional token before `=` on a `tree` line is the POS the anchor requires;
//! it defaults to the anchor node's label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tree::GornAddress;

pub type Features = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("tree `{tree}`: {message}")]
    InvalidTree { tree: String, message: String },
    #[error("family `{family}`: {message}")]
    InvalidFamily { family: String, message: String },
    #[error("lexicon entry `{word}/{pos}` references unknown tree or family `{name}`")]
    UnknownReference { word: String, pos: String, name: String },
    #[error("lexicon entry `{word}/{pos}` selects nothing")]
    EmptySelection { word: String, pos: String },
    #[error("name `{0}` is declared more than once")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Internal,
    Anchor,
    Substitution,
    Foot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: String,
    pub kind: NodeKind,
    pub children: Vec<TreeNode>,
    pub features: Features,
}

impl TreeNode {
    pub fn internal(label: &str, children: Vec<TreeNode>) -> Self {
        TreeNode { label: label.into(), kind: NodeKind::Internal, children, features: Features::new() }
    }

    pub fn leaf(label: &str, kind: NodeKind) -> Self {
        TreeNode { label: label.into(), kind, children: Vec::new(), features: Features::new() }
    }

    pub fn at(&self, address: &GornAddress) -> Option<&TreeNode> {
        let mut node = self;
        for &k in address.steps() {
            node = node.children.get(usize::from(k).checked_sub(1)?)?;
        }
        Some(node)
    }

    /// Pre-order walk yielding each node with its address.
    pub fn walk(&self) -> Vec<(GornAddress, &TreeNode)> {
        let mut out = Vec::new();
        fn go<'a>(n: &'a TreeNode, a: GornAddress, out: &mut Vec<(GornAddress, &'a TreeNode)>) {
            let kids: Vec<_> = (1..=n.children.len()).map(|k| a.child(k)).collect();
            out.push((a, n));
            for (c, ca) in n.children.iter().zip(kids) {
                go(c, ca, out);
            }
        }
        go(self, GornAddress::root(), &mut out);
        out
    }

    /// Leaf nodes (anchor, substitution, foot) in left-to-right order.
    pub fn frontier(&self) -> Vec<(GornAddress, &TreeNode)> {
        self.walk().into_iter().filter(|(_, n)| n.children.is_empty()).collect()
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let feats = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if !self.features.is_empty() {
                let parts: Vec<String> = self.features.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, "{{{}}}", parts.join(","))?;
            }
            Ok(())
        };
        match self.kind {
            NodeKind::Internal => {
                write!(f, "({}", self.label)?;
                feats(f)?;
                for c in &self.children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
            NodeKind::Anchor => {
                write!(f, "{}@", self.label)?;
                feats(f)
            }
            NodeKind::Substitution => {
                write!(f, "{}^", self.label)?;
                feats(f)
            }
            NodeKind::Foot => {
                write!(f, "{}*", self.label)?;
                feats(f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreeKind {
    Initial,
    Auxiliary,
}

impl TreeKind {
    fn keyword(self) -> &'static str {
        match self {
            TreeKind::Initial => "initial",
            TreeKind::Auxiliary => "auxiliary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementaryTree {
    pub name: String,
    pub kind: TreeKind,
    pub root: TreeNode,
    pub anchor_pos: String,
    pub anchor_address: GornAddress,
}

impl ElementaryTree {
    /// Builds and validates a tree; the anchor address is located automatically.
    pub fn new(name: &str, kind: TreeKind, root: TreeNode, anchor_pos: Option<&str>) -> Result<Self, GrammarError> {
        let bad = |message: String| GrammarError::InvalidTree { tree: name.to_string(), message };
        let nodes = root.walk();
        for (addr, n) in &nodes {
            match n.kind {
                NodeKind::Internal if n.children.is_empty() => {
                    return Err(bad(format!("internal node {} at {addr} has no children", n.label)))
                }
                NodeKind::Anchor | NodeKind::Substitution | NodeKind::Foot if !n.children.is_empty() => {
                    return Err(bad(format!("leaf node {} at {addr} has children", n.label)))
                }
                _ => {}
            }
        }
        let anchors: Vec<_> = nodes.iter().filter(|(_, n)| n.kind == NodeKind::Anchor).collect();
        if anchors.len() != 1 {
            return Err(bad(format!("expected exactly one anchor node, found {}", anchors.len())));
        }
        let anchor_address = anchors[0].0.clone();
        let anchor_label = anchors[0].1.label.clone();
        let feet: Vec<_> = nodes.iter().filter(|(_, n)| n.kind == NodeKind::Foot).collect();
        match kind {
            TreeKind::Initial if !feet.is_empty() => {
                return Err(bad("initial tree contains a foot node".into()));
            }
            TreeKind::Auxiliary if feet.len() != 1 => {
                return Err(bad(format!("auxiliary tree needs exactly one foot node, found {}", feet.len())));
            }
            TreeKind::Auxiliary if feet[0].1.label != root.label => {
                return Err(bad(format!("foot label {} does not match root label {}", feet[0].1.label, root.label)));
            }
            _ => {}
        }
        if root.kind != NodeKind::Internal {
            return Err(bad("root must be an internal node".into()));
        }
        Ok(ElementaryTree {
            name: name.to_string(),
            kind,
            root,
            anchor_pos: anchor_pos.map(str::to_string).unwrap_or(anchor_label),
            anchor_address,
        })
    }

    pub fn is_auxiliary(&self) -> bool {
        self.kind == TreeKind::Auxiliary
    }

    pub fn root_label(&self) -> &str {
        &self.root.label
    }

    pub fn node(&self, address: &GornAddress) -> Option<&TreeNode> {
        self.root.at(address)
    }

    pub fn anchor(&self) -> &TreeNode {
        self.root.at(&self.anchor_address).expect("validated anchor address")
    }

    pub fn foot_address(&self) -> Option<GornAddress> {
        self.root.walk().into_iter().find(|(_, n)| n.kind == NodeKind::Foot).map(|(a, _)| a)
    }
}

impl fmt::Display for ElementaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tree {} {}", self.name, self.kind.keyword())?;
        if self.anchor_pos != self.anchor().label {
            write!(f, " {}", self.anchor_pos)?;
        }
        write!(f, " = {}", self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeFamily {
    pub name: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub lemma: String,
    pub pos: String,
    pub selects: Vec<String>,
}

/// Unigram tree probabilities. Listed trees need not sum to one; a tree
/// missing from the table has probability 0 and ranks below every listed tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    entries: BTreeMap<String, f64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tree: &str, prob: f64) -> Result<(), GrammarError> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(GrammarError::InvalidTree {
                tree: tree.to_string(),
                message: format!("probability {prob} outside [0, 1]"),
            });
        }
        self.entries.insert(tree.to_string(), prob);
        Ok(())
    }

    pub fn prob(&self, tree: &str) -> f64 {
        self.entries.get(tree).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, tree: &str) -> bool {
        self.entries.contains_key(tree)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `tree_name<TAB>probability` lines.
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut table = FrequencyTable::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let perr = |column: usize, message: String| GrammarError::Parse { line: i + 1, column, message };
            let mut cols = line.split('\t');
            let (Some(name), Some(p), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(perr(1, "expected `tree_name<TAB>probability`".into()));
            };
            let name = name.trim();
            let prob: f64 =
                p.trim().parse().map_err(|_| perr(name.len() + 2, format!("invalid probability `{}`", p.trim())))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(perr(name.len() + 2, format!("probability {prob} outside [0, 1]")));
            }
            table.entries.insert(name.to_string(), prob);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, GrammarError> {
        Self::parse(&read(path)?)
    }

    pub fn serialize(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }
}

/// Trees, families and lexicon. Immutable once loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grammar {
    trees: BTreeMap<String, ElementaryTree>,
    families: BTreeMap<String, TreeFamily>,
    lexicon: BTreeMap<(String, String), Vec<String>>,
}

impl Grammar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tree(&mut self, tree: ElementaryTree) -> Result<(), GrammarError> {
        if self.trees.contains_key(&tree.name) || self.families.contains_key(&tree.name) {
            return Err(GrammarError::Duplicate(tree.name));
        }
        self.trees.insert(tree.name.clone(), tree);
        Ok(())
    }

    pub fn add_family(&mut self, name: &str, members: &[&str]) -> Result<(), GrammarError> {
        if self.trees.contains_key(name) || self.families.contains_key(name) {
            return Err(GrammarError::Duplicate(name.to_string()));
        }
        self.families.insert(
            name.to_string(),
            TreeFamily { name: name.to_string(), members: members.iter().map(|s| s.to_string()).collect() },
        );
        Ok(())
    }

    pub fn add_lex(&mut self, word: &str, pos: &str, selects: &[&str]) {
        let list = self.lexicon.entry((word.to_string(), pos.to_string())).or_default();
        for s in selects {
            if !list.iter().any(|x| x == s) {
                list.push(s.to_string());
            }
        }
    }

    /// Checks every cross-reference. Tree invariants are checked on construction.
    pub fn validate(&self) -> Result<(), GrammarError> {
        for fam in self.families.values() {
            if fam.members.is_empty() {
                return Err(GrammarError::InvalidFamily { family: fam.name.clone(), message: "no members".into() });
            }
            for m in &fam.members {
                if !self.trees.contains_key(m) {
                    return Err(GrammarError::InvalidFamily {
                        family: fam.name.clone(),
                        message: format!("unknown member tree `{m}`"),
                    });
                }
            }
        }
        for ((word, pos), selects) in &self.lexicon {
            if selects.is_empty() {
                return Err(GrammarError::EmptySelection { word: word.clone(), pos: pos.clone() });
            }
            for name in selects {
                if !self.trees.contains_key(name) && !self.families.contains_key(name) {
                    return Err(GrammarError::UnknownReference {
                        word: word.clone(),
                        pos: pos.clone(),
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn tree(&self, name: &str) -> Option<&ElementaryTree> {
        self.trees.get(name)
    }

    pub fn trees(&self) -> impl Iterator<Item = &ElementaryTree> {
        self.trees.values()
    }

    pub fn families(&self) -> impl Iterator<Item = &TreeFamily> {
        self.families.values()
    }

    pub fn family(&self, name: &str) -> Option<&TreeFamily> {
        self.families.get(name)
    }

    pub fn lex_entries(&self) -> impl Iterator<Item = LexEntry> + '_ {
        self.lexicon.iter().map(|((w, p), s)| LexEntry { lemma: w.clone(), pos: p.clone(), selects: s.clone() })
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn family_count(&self) -> usize {
        self.families.len()
    }

    pub fn lex_count(&self) -> usize {
        self.lexicon.len()
    }

    /// Whether the lexicon has any entry for `word`.
    pub fn knows_word(&self, word: &str) -> bool {
        self.lexicon.range((word.to_string(), String::new())..).next().is_some_and(|((w, _), _)| w == word)
    }

    /// Every tree selected, directly or through a family, by the entries for
    /// `(word, pos)`. Unknown pairs give the empty set.
    pub fn trees_for_word(&self, word: &str, pos: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(selects) = self.lexicon.get(&(word.to_string(), pos.to_string())) {
            for name in selects {
                if let Some(fam) = self.families.get(name) {
                    out.extend(fam.members.iter().cloned());
                } else if self.trees.contains_key(name) {
                    out.insert(name.clone());
                }
            }
        }
        out
    }

    /// All POS symbols the lexicon lists for `word`.
    pub fn pos_for_word(&self, word: &str) -> Vec<String> {
        self.lexicon
            .range((word.to_string(), String::new())..)
            .take_while(|((w, _), _)| w == word)
            .map(|((_, p), _)| p.clone())
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut g = Grammar::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw);
            let trimmed = line.trim();
            if trimmed.is_empty() || matches!(trimmed, "[trees]" | "[families]" | "[lexicon]") {
                continue;
            }
            let indent = line.len() - line.trim_start().len();
            let perr = |column: usize, message: String| GrammarError::Parse {
                line: line_no,
                column: indent + column + 1,
                message,
            };
            let (keyword, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            let rest_offset = trimmed.len() - rest.len();
            match keyword {
                "tree" => {
                    let Some((head, body)) = rest.split_once('=') else {
                        return Err(perr(rest_offset, "expected `tree NAME KIND [POS] = TREE`".into()));
                    };
                    let head: Vec<&str> = head.split_whitespace().collect();
                    let (name, kind, pos) = match head.as_slice() {
                        [n, k] => (*n, *k, None),
                        [n, k, p] => (*n, *k, Some(*p)),
                        _ => return Err(perr(rest_offset, "expected `tree NAME KIND [POS] = TREE`".into())),
                    };
                    let kind = match kind {
                        "initial" => TreeKind::Initial,
                        "auxiliary" => TreeKind::Auxiliary,
                        other => {
                            return Err(perr(rest_offset, format!("unknown tree kind `{other}`")));
                        }
                    };
                    let body_offset = rest_offset + head_len(rest) + 1;
                    let root = parse_tree_node(body).map_err(|(col, msg)| perr(body_offset + col, msg))?;
                    g.add_tree(ElementaryTree::new(name, kind, root, pos)?)?;
                }
                "family" => {
                    let Some((name, members)) = rest.split_once('=') else {
                        return Err(perr(rest_offset, "expected `family NAME = tree, tree, ...`".into()));
                    };
                    let members: Vec<&str> = split_list(members);
                    g.add_family(name.trim(), &members)?;
                }
                "lex" => {
                    let Some((head, selects)) = rest.split_once("->") else {
                        return Err(perr(rest_offset, "expected `lex WORD POS -> name, name, ...`".into()));
                    };
                    let head: Vec<&str> = head.split_whitespace().collect();
                    let [word, pos] = head.as_slice() else {
                        return Err(perr(rest_offset, "expected `lex WORD POS -> name, name, ...`".into()));
                    };
                    let selects = split_list(selects);
                    if selects.is_empty() {
                        return Err(GrammarError::EmptySelection { word: word.to_string(), pos: pos.to_string() });
                    }
                    g.add_lex(word, pos, &selects);
                }
                other => return Err(perr(0, format!("unknown keyword `{other}`"))),
            }
        }
        g.validate()?;
        Ok(g)
    }

    /// Writes the grammar in the file format accepted by [`Grammar::parse`].
    pub fn serialize(&self) -> String {
        let mut out = String::from("[trees]\n");
        for t in self.trees.values() {
            let _ = writeln!(out, "{t}");
        }
        out.push_str("\n[families]\n");
        for f in self.families.values() {
            let members: Vec<&str> = f.members.iter().map(String::as_str).collect();
            let _ = writeln!(out, "family {} = {}", f.name, members.join(", "));
        }
        out.push_str("\n[lexicon]\n");
        for ((w, p), s) in &self.lexicon {
            let _ = writeln!(out, "lex {w} {p} -> {}", s.join(", "));
        }
        out
    }
}

/// Reads and validates a grammar file.
pub fn load_grammar(path: &Path) -> Result<Grammar, GrammarError> {
    Grammar::parse(&read(path)?)
}

fn read(path: &Path) -> Result<String, GrammarError> {
    fs::read_to_string(path).map_err(|source| GrammarError::Io { path: path.display().to_string(), source })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn head_len(rest: &str) -> usize {
    rest.find('=').unwrap_or(rest.len())
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

type NodeParse<T> = Result<T, (usize, String)>;

fn parse_tree_node(src: &str) -> NodeParse<TreeNode> {
    let mut p = NodeParser { src, pos: 0 };
    p.ws();
    let node = p.node()?;
    p.ws();
    if p.pos != src.len() {
        return Err((p.pos, "trailing input after tree".into()));
    }
    Ok(node)
}

struct NodeParser<'a> {
    src: &'a str,
    pos: usize,
}

impl NodeParser<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn ws(&mut self) {
        while let Some(c) = self.peek().filter(|c| c.is_whitespace()) {
            self.pos += c.len_utf8();
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '\'' | '.' | '$' | ':') {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    fn features(&mut self) -> NodeParse<Features> {
        let mut feats = Features::new();
        if self.peek() != Some('{') {
            return Ok(feats);
        }
        let start = self.pos;
        let Some(end) = self.src[self.pos..].find('}') else {
            return Err((start, "unclosed feature list".into()));
        };
        let body = &self.src[self.pos + 1..self.pos + end];
        for pair in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some((k, v)) = pair.split_once('=') else {
                return Err((start, format!("feature `{pair}` is not attr=value")));
            };
            feats.insert(k.trim().to_string(), v.trim().to_string());
        }
        self.pos += end + 1;
        Ok(feats)
    }

    fn node(&mut self) -> NodeParse<TreeNode> {
        if self.peek() == Some('(') {
            self.pos += 1;
            self.ws();
            let at = self.pos;
            let label = self.ident().to_string();
            if label.is_empty() {
                return Err((at, "expected node label".into()));
            }
            let features = self.features()?;
            let mut children = Vec::new();
            loop {
                self.ws();
                match self.peek() {
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    None => return Err((self.pos, "unclosed bracket".into())),
                    Some(_) => children.push(self.node()?),
                }
            }
            if children.is_empty() {
                return Err((at, format!("internal node {label} has no children")));
            }
            return Ok(TreeNode { label, kind: NodeKind::Internal, children, features });
        }
        let at = self.pos;
        let label = self.ident().to_string();
        if label.is_empty() {
            return Err((at, format!("unexpected character {:?}", self.peek().unwrap_or(' '))));
        }
        let kind = match self.peek() {
            Some('@') => NodeKind::Anchor,
            Some('^') => NodeKind::Substitution,
            Some('*') => NodeKind::Foot,
            _ => return Err((at, format!("leaf `{label}` needs a kind marker (@ anchor, ^ substitution, * foot)"))),
        };
        self.pos += 1;
        let features = self.features()?;
        Ok(TreeNode { label, kind, children: Vec::new(), features })
    }
}
