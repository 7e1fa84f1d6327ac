//! Turning a derivation into its derived phrase-structure tree.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{features_compatible, Attachment, DerivationNode, Operation};
use crate::grammar::{ElementaryTree, Grammar, NodeKind, TreeKind, TreeNode};
use crate::tree::{GornAddress, PennTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("unknown tree `{0}`")]
    UnknownTree(String),
    #[error("tree `{tree}` has no node at address {address}")]
    BadAddress { tree: String, address: GornAddress },
    #[error("tree `{tree}` at {address}: {message}")]
    InvalidAttachment { tree: String, address: GornAddress, message: String },
    #[error("tree `{tree}`: substitution node at {address} is not filled")]
    Unfilled { tree: String, address: GornAddress },
    #[error("tree `{tree}` at {address}: feature clash with `{other}`")]
    FeatureClash { tree: String, address: GornAddress, other: String },
    #[error("anchor index {anchor} of `{tree}` is outside the sentence")]
    AnchorOutOfRange { tree: String, anchor: usize },
    #[error("derived yield {found:?} does not match the sentence order")]
    YieldMismatch { found: Vec<usize> },
    #[error("the derivation root `{0}` is not an initial tree")]
    RootNotInitial(String),
}

/// Which elementary tree node a derived node came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub tree: String,
    pub anchor: usize,
    pub address: GornAddress,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DerivedNode {
    Phrase {
        label: String,
        origin: Origin,
        /// Set on the node that fills the foot of the auxiliary tree anchored
        /// at this word index.
        foot_of: Option<usize>,
        children: Vec<DerivedNode>,
    },
    Word {
        text: String,
        index: usize,
    },
}

impl DerivedNode {
    pub fn label(&self) -> Option<&str> {
        match self {
            DerivedNode::Phrase { label, .. } => Some(label),
            DerivedNode::Word { .. } => None,
        }
    }

    pub fn children(&self) -> &[DerivedNode] {
        match self {
            DerivedNode::Phrase { children, .. } => children,
            DerivedNode::Word { .. } => &[],
        }
    }

    pub fn origin(&self) -> Option<&Origin> {
        match self {
            DerivedNode::Phrase { origin, .. } => Some(origin),
            DerivedNode::Word { .. } => None,
        }
    }

    pub fn foot_of(&self) -> Option<usize> {
        match self {
            DerivedNode::Phrase { foot_of, .. } => *foot_of,
            DerivedNode::Word { .. } => None,
        }
    }

    /// Word-index extent `[start, end)`.
    pub fn span(&self) -> (usize, usize) {
        match self {
            DerivedNode::Word { index, .. } => (*index, *index + 1),
            DerivedNode::Phrase { children, .. } => {
                let first = children.first().expect("phrase has children").span();
                let last = children.last().expect("phrase has children").span();
                (first.0, last.1)
            }
        }
    }

    fn to_penn(&self) -> PennTree {
        match self {
            DerivedNode::Word { text, .. } => PennTree::Word(text.clone()),
            DerivedNode::Phrase { label, children, .. } => {
                PennTree::Node { label: label.clone(), children: children.iter().map(DerivedNode::to_penn).collect() }
            }
        }
    }

    fn collect_yield(&self, out: &mut Vec<usize>) {
        match self {
            DerivedNode::Word { index, .. } => out.push(*index),
            DerivedNode::Phrase { children, .. } => children.iter().for_each(|c| c.collect_yield(out)),
        }
    }

    /// Pre-order search.
    pub fn find(&self, pred: &dyn Fn(&DerivedNode) -> bool) -> Option<&DerivedNode> {
        if pred(self) {
            return Some(self);
        }
        self.children().iter().find_map(|c| c.find(pred))
    }

    /// Path of nodes from `self` down to the first node satisfying `pred`.
    pub fn path_to(&self, pred: &dyn Fn(&DerivedNode) -> bool) -> Option<Vec<&DerivedNode>> {
        if pred(self) {
            return Some(vec![self]);
        }
        for c in self.children() {
            if let Some(mut p) = c.path_to(pred) {
                p.insert(0, self);
                return Some(p);
            }
        }
        None
    }
}

/// A derived tree with provenance on every phrase node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedTree {
    pub root: DerivedNode,
}

impl DerivedTree {
    pub fn to_penn(&self) -> PennTree {
        self.root.to_penn()
    }

    pub fn yield_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.root.collect_yield(&mut out);
        out
    }
}

impl fmt::Display for DerivedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_penn())
    }
}

enum Built {
    Phrase { label: String, origin: Origin, foot_of: Option<usize>, children: Vec<Built> },
    Word { text: String, index: usize },
    Hole,
}

impl Built {
    fn plug(self, filler: &mut Option<Built>) -> Built {
        match self {
            Built::Hole => filler.take().expect("single foot"),
            Built::Phrase { label, origin, foot_of, children } => Built::Phrase {
                label,
                origin,
                foot_of,
                children: children.into_iter().map(|c| c.plug(filler)).collect(),
            },
            w => w,
        }
    }

    fn finish(self) -> DerivedNode {
        match self {
            Built::Phrase { label, origin, foot_of, children } => DerivedNode::Phrase {
                label,
                origin,
                foot_of,
                children: children.into_iter().map(Built::finish).collect(),
            },
            Built::Word { text, index } => DerivedNode::Word { text, index },
            Built::Hole => unreachable!("foot hole left in an initial tree"),
        }
    }
}

struct Deriver<'a> {
    grammar: &'a Grammar,
    words: &'a [String],
    check_features: bool,
}

impl Deriver<'_> {
    fn tree(&self, d: &DerivationNode) -> Result<&ElementaryTree, DeriveError> {
        self.grammar.tree(&d.tree).ok_or_else(|| DeriveError::UnknownTree(d.tree.clone()))
    }

    fn build(&self, d: &DerivationNode) -> Result<Built, DeriveError> {
        let tree = self.tree(d)?;
        if d.anchor >= self.words.len() {
            return Err(DeriveError::AnchorOutOfRange { tree: d.tree.clone(), anchor: d.anchor });
        }
        let mut at: HashMap<&GornAddress, &Attachment> = HashMap::new();
        for a in &d.attachments {
            let invalid = |message: &str| DeriveError::InvalidAttachment {
                tree: d.tree.clone(),
                address: a.address.clone(),
                message: message.to_string(),
            };
            let node = tree
                .node(&a.address)
                .ok_or_else(|| DeriveError::BadAddress { tree: d.tree.clone(), address: a.address.clone() })?;
            if at.insert(&a.address, a).is_some() {
                return Err(invalid("more than one operation at this address"));
            }
            let child = self.tree(&a.node)?;
            match a.operation {
                Operation::Substitution => {
                    if node.kind != NodeKind::Substitution {
                        return Err(invalid("substitution at a non-substitution node"));
                    }
                    if child.kind != TreeKind::Initial {
                        return Err(invalid("only initial trees substitute"));
                    }
                    if child.root_label() != node.label {
                        return Err(invalid(&format!("category mismatch: {} into {}", child.root_label(), node.label)));
                    }
                    if self.check_features && !features_compatible(&node.features, &child.root.features) {
                        return Err(DeriveError::FeatureClash {
                            tree: d.tree.clone(),
                            address: a.address.clone(),
                            other: child.name.clone(),
                        });
                    }
                }
                Operation::Adjunction => {
                    if node.kind != NodeKind::Internal {
                        return Err(invalid("adjunction only at internal nodes"));
                    }
                    if child.kind != TreeKind::Auxiliary {
                        return Err(invalid("only auxiliary trees adjoin"));
                    }
                    if child.root_label() != node.label {
                        return Err(invalid(&format!("category mismatch: {} onto {}", child.root_label(), node.label)));
                    }
                    let foot = child.node(&child.foot_address().expect("aux has foot")).expect("foot");
                    if self.check_features
                        && (!features_compatible(&node.features, &child.root.features)
                            || !features_compatible(&node.features, &foot.features))
                    {
                        return Err(DeriveError::FeatureClash {
                            tree: d.tree.clone(),
                            address: a.address.clone(),
                            other: child.name.clone(),
                        });
                    }
                }
            }
        }
        self.build_node(d, &tree.root, GornAddress::root(), &at)
    }

    fn build_node(
        &self,
        d: &DerivationNode,
        node: &TreeNode,
        address: GornAddress,
        at: &HashMap<&GornAddress, &Attachment>,
    ) -> Result<Built, DeriveError> {
        let origin = Origin { tree: d.tree.clone(), anchor: d.anchor, address: address.clone() };
        let inner = match node.kind {
            NodeKind::Anchor => Built::Phrase {
                label: node.label.clone(),
                origin,
                foot_of: None,
                children: vec![Built::Word { text: self.words[d.anchor].clone(), index: d.anchor }],
            },
            NodeKind::Foot => Built::Hole,
            NodeKind::Substitution => match at.get(&address) {
                Some(a) => self.build(&a.node)?,
                None => return Err(DeriveError::Unfilled { tree: d.tree.clone(), address }),
            },
            NodeKind::Internal => {
                let children = node
                    .children
                    .iter()
                    .enumerate()
                    .map(|(k, c)| self.build_node(d, c, address.child(k + 1), at))
                    .collect::<Result<Vec<_>, _>>()?;
                Built::Phrase { label: node.label.clone(), origin, foot_of: None, children }
            }
        };
        match at.get(&address) {
            Some(a) if a.operation == Operation::Adjunction => {
                let aux = self.build(&a.node)?;
                let inner = match inner {
                    Built::Phrase { label, origin, children, .. } => {
                        Built::Phrase { label, origin, foot_of: Some(a.node.anchor), children }
                    }
                    other => other,
                };
                Ok(aux.plug(&mut Some(inner)))
            }
            _ => Ok(inner),
        }
    }
}

/// Performs the substitutions and adjunctions recorded in `d`, filling each
/// anchor with `words[anchor]`. Fails if the derivation is malformed or its
/// yield is not the sentence in order.
pub fn derive(
    grammar: &Grammar,
    d: &DerivationNode,
    words: &[String],
    check_features: bool,
) -> Result<DerivedTree, DeriveError> {
    let deriver = Deriver { grammar, words, check_features };
    if deriver.tree(d)?.kind != TreeKind::Initial {
        return Err(DeriveError::RootNotInitial(d.tree.clone()));
    }
    let root = deriver.build(d)?.finish();
    let tree = DerivedTree { root };
    let found = tree.yield_indices();
    if found.len() != words.len() || found.iter().enumerate().any(|(i, &w)| i != w) {
        return Err(DeriveError::YieldMismatch { found });
    }
    Ok(tree)
}
