//! Parse-ranking heuristics and their linear combination.
//!
//! Each heuristic turns a derivation into a non-negative count. A parse's
//! penalty is the dot product of its count vector with a weight vector;
//! lower penalties rank first.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{DerivationNode, Operation};
use crate::derive::{DerivedNode, DerivedTree};
use crate::grammar::Grammar;
use crate::tree::GornAddress;

pub const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.txt");

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate heuristic name `{0}`")]
    Duplicate(String),
    #[error("built-in heuristic `{0}` is missing from the registry")]
    MissingBuiltin(&'static str),
    #[error("vector length {vector} does not match weight length {weights}")]
    LengthMismatch { vector: usize, weights: usize },
    #[error("weights line {line}: expected `{expected}`, found `{found}`")]
    WeightOrder { line: usize, expected: String, found: String },
    #[error("weights file has {found} entries, registry has {expected}")]
    WeightCount { expected: usize, found: usize },
    #[error("weights line {line}: {message}")]
    BadWeight { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    LocalTreeType,
    LocalLexical,
    GlobalStructural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicId {
    pub name: String,
    pub kind: HeuristicKind,
}

/// One alternative of a tree predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeTest {
    Name(String),
    Prefix(String),
    Contains(String),
    Pos(String),
    Family(String),
}

/// Disjunction of [`TreeTest`]s over an anchored elementary tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePredicate(pub Vec<TreeTest>);

impl TreePredicate {
    pub fn parse(spec: &str) -> Result<Self, String> {
        spec.split('|')
            .map(|alt| {
                let (kind, arg) = alt.split_once(':').ok_or_else(|| format!("predicate `{alt}` lacks `kind:`"))?;
                if arg.is_empty() {
                    return Err(format!("predicate `{alt}` has an empty argument"));
                }
                let arg = arg.to_string();
                Ok(match kind {
                    "name" => TreeTest::Name(arg),
                    "prefix" => TreeTest::Prefix(arg),
                    "contains" => TreeTest::Contains(arg),
                    "pos" => TreeTest::Pos(arg),
                    "family" => TreeTest::Family(arg),
                    other => return Err(format!("unknown predicate kind `{other}`")),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TreePredicate)
    }

    pub fn matches(&self, grammar: &Grammar, tree: &str) -> bool {
        self.0.iter().any(|t| match t {
            TreeTest::Name(n) => tree == n,
            TreeTest::Prefix(p) => tree.starts_with(p.as_str()),
            TreeTest::Contains(s) => tree.contains(s.as_str()),
            TreeTest::Pos(p) => grammar.tree(tree).is_some_and(|t| &t.anchor_pos == p),
            TreeTest::Family(f) => grammar.family(f).is_some_and(|f| f.members.contains(tree)),
        })
    }
}

impl fmt::Display for TreePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|t| match t {
                TreeTest::Name(x) => format!("name:{x}"),
                TreeTest::Prefix(x) => format!("prefix:{x}"),
                TreeTest::Contains(x) => format!("contains:{x}"),
                TreeTest::Pos(x) => format!("pos:{x}"),
                TreeTest::Family(x) => format!("family:{x}"),
            })
            .collect();
        f.write_str(&parts.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    AdjunctionCount,
    PpAttachmentHeight,
    AdjAttachmentHeight,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::AdjunctionCount, Builtin::PpAttachmentHeight, Builtin::AdjAttachmentHeight];

    pub fn keyword(self) -> &'static str {
        match self {
            Builtin::AdjunctionCount => "adjunction_count",
            Builtin::PpAttachmentHeight => "pp_attachment_height",
            Builtin::AdjAttachmentHeight => "adj_attachment_height",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Builtin::ALL.into_iter().find(|b| b.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    TreeType(TreePredicate),
    Lexical {
        word: String,
        prefer: TreePredicate,
        disprefer: TreePredicate,
    },
    Global {
        builtin: Builtin,
        /// An auxiliary tree is a modifier of this class when its root, or a
        /// non-foot child of its root, carries one of these labels.
        modifier: BTreeSet<String>,
        /// Node labels that count as attachment sites.
        sites: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heuristic {
    pub id: HeuristicId,
    pub rule: Rule,
}

/// Ordered heuristics; the order fixes the layout of count and weight vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicRegistry {
    heuristics: Vec<Heuristic>,
}

impl HeuristicRegistry {
    pub fn new(heuristics: Vec<Heuristic>) -> Result<Self, HeuristicError> {
        let mut names = BTreeSet::new();
        for h in &heuristics {
            if !names.insert(h.id.name.clone()) {
                return Err(HeuristicError::Duplicate(h.id.name.clone()));
            }
        }
        for b in Builtin::ALL {
            if !heuristics.iter().any(|h| matches!(h.rule, Rule::Global { builtin, .. } if builtin == b)) {
                return Err(HeuristicError::MissingBuiltin(b.keyword()));
            }
        }
        Ok(HeuristicRegistry { heuristics })
    }

    pub fn default_registry() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("bundled registry is valid")
    }

    pub fn len(&self) -> usize {
        self.heuristics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heuristics.is_empty()
    }

    pub fn heuristics(&self) -> &[Heuristic] {
        &self.heuristics
    }

    pub fn names(&self) -> Vec<&str> {
        self.heuristics.iter().map(|h| h.id.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.heuristics.iter().position(|h| h.id.name == name)
    }

    pub fn load(path: &Path) -> Result<Self, HeuristicError> {
        let text = fs::read_to_string(path)
            .map_err(|source| HeuristicError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HeuristicError> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HeuristicError::Parse { line: i + 1, message };
            let mut fields = line.split_whitespace();
            let (Some(name), Some(kind)) = (fields.next(), fields.next()) else {
                return Err(err("expected `NAME KIND key=value ...`".into()));
            };
            let mut opts = std::collections::BTreeMap::new();
            for f in fields {
                let (k, v) = f.split_once('=').ok_or_else(|| err(format!("field `{f}` is not key=value")))?;
                opts.insert(k, v);
            }
            let get = |k: &str| opts.get(k).copied().ok_or_else(|| err(format!("missing `{k}=`")));
            let pred = |k: &str| TreePredicate::parse(get(k)?).map_err(&err);
            let labels = |k: &str, default: &[&str]| -> BTreeSet<String> {
                match opts.get(k) {
                    Some(v) => v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                    None => default.iter().map(|s| s.to_string()).collect(),
                }
            };
            let (kind, rule) = match kind {
                "tree_type" => (HeuristicKind::LocalTreeType, Rule::TreeType(pred("match")?)),
                "lexical" => (
                    HeuristicKind::LocalLexical,
                    Rule::Lexical {
                        word: get("word")?.to_lowercase(),
                        prefer: pred("prefer")?,
                        disprefer: pred("disprefer")?,
                    },
                ),
                "global" => {
                    let b = get("builtin")?;
                    let builtin = Builtin::parse(b).ok_or_else(|| err(format!("unknown builtin `{b}`")))?;
                    let (modifier, sites) = match builtin {
                        Builtin::AdjunctionCount => (BTreeSet::new(), BTreeSet::new()),
                        Builtin::PpAttachmentHeight => (labels("modifier", &["PP"]), labels("sites", &["NP", "VP"])),
                        Builtin::AdjAttachmentHeight => (labels("modifier", &["A"]), labels("sites", &["N", "NP"])),
                    };
                    (HeuristicKind::GlobalStructural, Rule::Global { builtin, modifier, sites })
                }
                other => return Err(err(format!("unknown heuristic kind `{other}`"))),
            };
            out.push(Heuristic { id: HeuristicId { name: name.to_string(), kind }, rule });
        }
        Self::new(out)
    }
}

/// Heuristic counts for one parse, aligned with the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeuristicVector(pub Vec<f64>);

/// One weight per heuristic, aligned with the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn uniform(len: usize, value: f64) -> Self {
        WeightVector(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightVector(self.0.iter().map(|w| w * c).collect())
    }

    /// Parses `name<TAB>weight` lines, which must follow registry order.
    pub fn parse(text: &str, registry: &HeuristicRegistry) -> Result<Self, HeuristicError> {
        let names = registry.names();
        let mut weights = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) =
                line.split_once('\t').or_else(|| line.split_once(char::is_whitespace)).ok_or_else(|| {
                    HeuristicError::BadWeight { line: i + 1, message: "expected `name<TAB>weight`".into() }
                })?;
            let name = name.trim();
            let expected = names.get(weights.len()).copied().unwrap_or("<end of registry>");
            if name != expected {
                return Err(HeuristicError::WeightOrder { line: i + 1, expected: expected.into(), found: name.into() });
            }
            let w: f64 = value.trim().parse().map_err(|_| HeuristicError::BadWeight {
                line: i + 1,
                message: format!("invalid weight `{}`", value.trim()),
            })?;
            if !w.is_finite() {
                return Err(HeuristicError::BadWeight { line: i + 1, message: "weight must be finite".into() });
            }
            weights.push(w);
        }
        if weights.len() != names.len() {
            return Err(HeuristicError::WeightCount { expected: names.len(), found: weights.len() });
        }
        Ok(WeightVector(weights))
    }

    pub fn load(path: &Path, registry: &HeuristicRegistry) -> Result<Self, HeuristicError> {
        let text = fs::read_to_string(path)
            .map_err(|source| HeuristicError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, registry)
    }

    pub fn serialize(&self, registry: &HeuristicRegistry) -> String {
        registry.names().iter().zip(&self.0).map(|(n, w)| format!("{n}\t{w}\n")).collect()
    }
}

/// Dot product of counts and weights: the parse's penalty.
pub fn score(v: &HeuristicVector, w: &WeightVector) -> Result<f64, HeuristicError> {
    if v.0.len() != w.0.len() {
        return Err(HeuristicError::LengthMismatch { vector: v.0.len(), weights: w.0.len() });
    }
    Ok(v.0.iter().zip(&w.0).map(|(a, b)| a * b).sum())
}

fn is_modifier(grammar: &Grammar, tree: &str, labels: &BTreeSet<String>) -> bool {
    let Some(t) = grammar.tree(tree) else { return false };
    if !t.is_auxiliary() {
        return false;
    }
    labels.contains(&t.root.label)
        || t.root.children.iter().any(|c| c.kind != crate::grammar::NodeKind::Foot && labels.contains(&c.label))
}

/// Whether the modifier material of an auxiliary tree lies right of its foot.
fn modifies_rightward(grammar: &Grammar, tree: &str) -> bool {
    let t = grammar.tree(tree).expect("known tree");
    let foot = t.foot_address().unwrap_or_else(GornAddress::root);
    foot.steps() < t.anchor_address.steps()
}

fn adjunctions(d: &DerivationNode) -> Vec<&DerivationNode> {
    let mut out = Vec::new();
    for a in &d.attachments {
        if a.operation == Operation::Adjunction {
            out.push(&a.node);
        }
        out.extend(adjunctions(&a.node));
    }
    out
}

/// Eligible sites below the site a right (or left) modifier chose: nodes on
/// the edge of the foot-filling subtree adjacent to the modifier.
fn sites_below(derived: &DerivedTree, aux: &DerivationNode, rightward: bool, sites: &BTreeSet<String>) -> usize {
    let Some(mut node) = derived.root.find(&|n| n.foot_of() == Some(aux.anchor)) else { return 0 };
    let mut count = 0;
    loop {
        let kids = node.children();
        let next = if rightward { kids.last() } else { kids.first() };
        match next {
            Some(c @ DerivedNode::Phrase { label, .. }) => {
                count += usize::from(sites.contains(label));
                node = c;
            }
            _ => return count,
        }
    }
}

/// Eligible sites above the chosen site: ancestors of the modifier's root for
/// which that root lies on the edge facing the modifier.
fn sites_above(derived: &DerivedTree, aux: &DerivationNode, rightward: bool, sites: &BTreeSet<String>) -> usize {
    let is_root = |n: &DerivedNode| {
        n.origin().is_some_and(|o| o.tree == aux.tree && o.anchor == aux.anchor && o.address.is_root())
    };
    let Some(path) = derived.root.path_to(&is_root) else { return 0 };
    let mut count = 0;
    for w in path.windows(2).rev() {
        let (parent, child) = (w[0], w[1]);
        let kids = parent.children();
        // a left modifier can move up while its site is the first child
        let edge = if rightward { kids.last() } else { kids.first() };
        if !edge.is_some_and(|e| std::ptr::eq(e, child)) {
            break;
        }
        count += usize::from(parent.label().is_some_and(|l| sites.contains(l)));
    }
    count
}

/// Heuristic counts for a derivation and its derived tree.
pub fn extract(
    registry: &HeuristicRegistry,
    grammar: &Grammar,
    d: &DerivationNode,
    derived: &DerivedTree,
) -> HeuristicVector {
    let words = derived.to_penn();
    let words: Vec<String> = words.words().into_iter().map(str::to_lowercase).collect();
    let instances = d.nodes();
    let values = registry
        .heuristics
        .iter()
        .map(|h| match &h.rule {
            Rule::TreeType(p) => instances.iter().filter(|n| p.matches(grammar, &n.tree)).count() as f64,
            Rule::Lexical { word, prefer, disprefer } => instances
                .iter()
                .filter(|n| words.get(n.anchor) == Some(word))
                .filter(|n| disprefer.matches(grammar, &n.tree) && !prefer.matches(grammar, &n.tree))
                .count() as f64,
            Rule::Global { builtin: Builtin::AdjunctionCount, .. } => d.adjunction_count() as f64,
            Rule::Global { builtin: Builtin::PpAttachmentHeight, modifier, sites } => adjunctions(d)
                .into_iter()
                .filter(|a| is_modifier(grammar, &a.tree, modifier))
                .map(|a| sites_below(derived, a, modifies_rightward(grammar, &a.tree), sites))
                .sum::<usize>()
                as f64,
            Rule::Global { builtin: Builtin::AdjAttachmentHeight, modifier, sites } => adjunctions(d)
                .into_iter()
                .filter(|a| is_modifier(grammar, &a.tree, modifier))
                .map(|a| sites_above(derived, a, modifies_rightward(grammar, &a.tree), sites))
                .sum::<usize>()
                as f64,
        })
        .collect();
    HeuristicVector(values)
}

/// Indices of `vectors` ordered by ascending penalty; equal penalties keep
/// their input order.
pub fn rank_order(vectors: &[HeuristicVector], w: &WeightVector) -> Result<Vec<usize>, HeuristicError> {
    let scores = vectors.iter().map(|v| score(v, w)).collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedParse {
    /// Position in the parser's canonical enumeration.
    pub index: usize,
    pub score: f64,
    pub vector: HeuristicVector,
}

/// Ranks one sentence's parses, best (lowest penalty) first.
pub fn rank(
    parses: &[(DerivationNode, DerivedTree)],
    registry: &HeuristicRegistry,
    grammar: &Grammar,
    w: &WeightVector,
) -> Result<Vec<RankedParse>, HeuristicError> {
    let vectors: Vec<HeuristicVector> = parses.iter().map(|(d, t)| extract(registry, grammar, d, t)).collect();
    let order = rank_order(&vectors, w)?;
    order
        .into_iter()
        .map(|i| Ok(RankedParse { index: i, score: score(&vectors[i], w)?, vector: vectors[i].clone() }))
        .collect()
}
