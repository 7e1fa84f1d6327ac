//! Bottom-up chart parsing for lexicalized TAG.
//!
//! Items are keyed by candidate tree instance (tree, anchor position), node,
//! progress through the node's children, outer span `(i, j)` and, for nodes on
//! the spine of an auxiliary tree, the foot span `(k, l)`. A `Top` item has
//! had its adjunction decision made; a `Dot(m)` item with `m` equal to the
//! child count is the node's bottom. Every way of building an item is kept as
//! a back-pointer, so the chart is a packed forest over derivations.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Features, Grammar, NodeKind, TreeKind};
use crate::select::TreeAssignment;
use crate::tree::GornAddress;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("position {position}: unknown tree `{tree}`")]
    UnknownTree { position: usize, tree: String },
    #[error("sentence of {0} words exceeds the parser limit of {max}", max = u16::MAX)]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParserConfig {
    /// Root categories accepted for a complete parse; `None` accepts any
    /// initial tree spanning the sentence.
    pub start: Option<BTreeSet<String>>,
    /// Maximum number of auxiliary trees stacked at one site (each one
    /// adjoined at the root of the previous).
    pub max_adjunction_stack: usize,
    /// Require flat features to agree at substitution and adjunction sites.
    pub check_features: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig { start: None, max_adjunction_stack: 3, check_features: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Substitution,
    Adjunction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attachment {
    pub operation: Operation,
    pub address: GornAddress,
    pub node: DerivationNode,
}

/// One elementary tree instance in a derivation and what was attached to it.
/// Attachments are kept sorted by address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DerivationNode {
    pub tree: String,
    pub anchor: usize,
    pub attachments: Vec<Attachment>,
}

impl DerivationNode {
    pub fn leaf(tree: &str, anchor: usize) -> Self {
        DerivationNode { tree: tree.to_string(), anchor, attachments: Vec::new() }
    }

    pub fn with(mut self, operation: Operation, address: &str, node: DerivationNode) -> Self {
        self.attachments.push(Attachment { operation, address: address.parse().expect("valid Gorn address"), node });
        self.attachments.sort_by(|a, b| a.address.cmp(&b.address));
        self
    }

    /// All tree instances in pre-order.
    pub fn nodes(&self) -> Vec<&DerivationNode> {
        let mut out = vec![self];
        for a in &self.attachments {
            out.extend(a.node.nodes());
        }
        out
    }

    pub fn adjunction_count(&self) -> usize {
        self.attachments
            .iter()
            .map(|a| usize::from(a.operation == Operation::Adjunction) + a.node.adjunction_count())
            .sum()
    }
}

pub(crate) fn features_compatible(a: &Features, b: &Features) -> bool {
    a.iter().all(|(k, v)| b.get(k).map_or(true, |w| w == v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnchorRel {
    Dominates,
    Left,
    Right,
}

#[derive(Debug, Clone)]
struct NodeInfo {
    address: GornAddress,
    label: u32,
    kind: NodeKind,
    children: Vec<u16>,
    parent: Option<(u16, u16)>,
    rel: AnchorRel,
    /// For a proper ancestor of the anchor, the child leading to it.
    anchor_child: Option<u16>,
    features: Features,
}

#[derive(Debug, Clone)]
struct TreeInfo {
    name: String,
    kind: TreeKind,
    nodes: Vec<NodeInfo>,
    anchor_node: u16,
    foot_node: Option<u16>,
}

impl TreeInfo {
    fn build(tree: &crate::grammar::ElementaryTree, intern: &mut Interner) -> TreeInfo {
        let walk = tree.root.walk();
        let index: HashMap<GornAddress, u16> =
            walk.iter().enumerate().map(|(i, (a, _))| (a.clone(), i as u16)).collect();
        let anchor = &tree.anchor_address;
        let mut nodes = Vec::with_capacity(walk.len());
        for (addr, n) in &walk {
            let children: Vec<u16> = (1..=n.children.len()).map(|k| index[&addr.child(k)]).collect();
            let parent = (!addr.is_root()).then(|| {
                let steps = addr.steps();
                let p = GornAddress::root();
                let p = steps[..steps.len() - 1].iter().fold(p, |p, &k| p.child(k as usize));
                (index[&p], steps[steps.len() - 1] - 1)
            });
            let rel = if anchor.steps().starts_with(addr.steps()) {
                AnchorRel::Dominates
            } else if addr.steps() < anchor.steps() {
                AnchorRel::Left
            } else {
                AnchorRel::Right
            };
            let anchor_child =
                (rel == AnchorRel::Dominates && addr != anchor).then(|| anchor.steps()[addr.depth()] - 1);
            nodes.push(NodeInfo {
                address: addr.clone(),
                label: intern.get(&n.label),
                kind: n.kind,
                children,
                parent,
                rel,
                anchor_child,
                features: n.features.clone(),
            });
        }
        let anchor_node = index[anchor];
        let foot_node = tree.foot_address().map(|a| index[&a]);
        TreeInfo { name: tree.name.clone(), kind: tree.kind, nodes, anchor_node, foot_node }
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
}

impl Interner {
    fn get(&mut self, s: &str) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(s.to_string()).or_insert(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum State {
    Dot(u16),
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    cand: u32,
    node: u16,
    state: State,
    i: u16,
    j: u16,
    foot: Option<(u16, u16)>,
    stack: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Back {
    Axiom,
    Subst { root: u32 },
    First { child: u32 },
    Next { dot: u32, child: u32 },
    NoAdjoin { bottom: u32 },
    Adjoin { aux: u32, bottom: u32 },
}

#[derive(Debug, Clone)]
struct Item {
    key: Key,
    backs: Vec<Back>,
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    tree: u32,
    anchor: u16,
}

/// The completed chart for one sentence.
#[derive(Debug, Clone)]
pub struct ParseForest {
    n: usize,
    trees: Vec<TreeInfo>,
    cands: Vec<Cand>,
    items: Vec<Item>,
    goals: Vec<u32>,
}

type Partials = Rc<Vec<Vec<Attachment>>>;

impl ParseForest {
    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Total number of derivations (saturating).
    pub fn derivation_count(&self) -> u128 {
        let mut memo = HashMap::new();
        self.goals.iter().fold(0u128, |acc, &g| acc.saturating_add(self.count(g, &mut memo)))
    }

    fn count(&self, id: u32, memo: &mut HashMap<u32, u128>) -> u128 {
        if let Some(&c) = memo.get(&id) {
            return c;
        }
        memo.insert(id, 0);
        let mut total = 0u128;
        for back in &self.items[id as usize].backs {
            let c = match *back {
                Back::Axiom => 1,
                Back::Subst { root } => self.count(root, memo),
                Back::First { child } => self.count(child, memo),
                Back::NoAdjoin { bottom } => self.count(bottom, memo),
                Back::Next { dot, child } => self.count(dot, memo).saturating_mul(self.count(child, memo)),
                Back::Adjoin { aux, bottom } => self.count(bottom, memo).saturating_mul(self.count(aux, memo)),
            };
            total = total.saturating_add(c);
        }
        memo.insert(id, total);
        total
    }

    /// Derivations in canonical order: goal items by creation, back-pointers
    /// by creation, products lexicographic. `limit = None` means all.
    pub fn enumerate(&self, limit: Option<usize>) -> Vec<DerivationNode> {
        let limit = limit.unwrap_or(usize::MAX);
        let mut memo: HashMap<u32, Partials> = HashMap::new();
        let mut busy = HashSet::new();
        let mut out = Vec::new();
        for &g in &self.goals {
            if out.len() >= limit {
                break;
            }
            let ds = self.derivations_of(g, limit - out.len(), &mut memo, &mut busy);
            out.extend(ds);
        }
        out.truncate(limit);
        out
    }

    fn derivations_of(
        &self,
        root: u32,
        limit: usize,
        memo: &mut HashMap<u32, Partials>,
        busy: &mut HashSet<u32>,
    ) -> Vec<DerivationNode> {
        let key = self.items[root as usize].key;
        let cand = self.cands[key.cand as usize];
        let name = &self.trees[cand.tree as usize].name;
        self.partials(root, limit, memo, busy)
            .iter()
            .take(limit)
            .map(|atts| {
                let mut attachments = atts.clone();
                attachments.sort_by(|a, b| a.address.cmp(&b.address));
                DerivationNode { tree: name.clone(), anchor: cand.anchor as usize, attachments }
            })
            .collect()
    }

    fn address(&self, id: u32) -> GornAddress {
        let key = self.items[id as usize].key;
        let cand = self.cands[key.cand as usize];
        self.trees[cand.tree as usize].nodes[key.node as usize].address.clone()
    }

    fn partials(&self, id: u32, limit: usize, memo: &mut HashMap<u32, Partials>, busy: &mut HashSet<u32>) -> Partials {
        if let Some(p) = memo.get(&id) {
            return p.clone();
        }
        if !busy.insert(id) {
            debug_assert!(false, "cyclic chart item {id}");
            return Rc::new(Vec::new());
        }
        let mut out: Vec<Vec<Attachment>> = Vec::new();
        for back in self.items[id as usize].backs.clone() {
            if out.len() >= limit {
                break;
            }
            let room = limit - out.len();
            match back {
                Back::Axiom => out.push(Vec::new()),
                Back::Subst { root } => {
                    let address = self.address(id);
                    for d in self.derivations_of(root, room, memo, busy) {
                        out.push(vec![Attachment {
                            operation: Operation::Substitution,
                            address: address.clone(),
                            node: d,
                        }]);
                    }
                }
                Back::First { child } | Back::NoAdjoin { bottom: child } => {
                    out.extend(self.partials(child, room, memo, busy).iter().take(room).cloned());
                }
                Back::Next { dot, child } => {
                    let left = self.partials(dot, room, memo, busy);
                    let right = self.partials(child, room, memo, busy);
                    'outer: for l in left.iter() {
                        for r in right.iter() {
                            if out.len() >= limit {
                                break 'outer;
                            }
                            let mut v = l.clone();
                            v.extend(r.iter().cloned());
                            out.push(v);
                        }
                    }
                }
                Back::Adjoin { aux, bottom } => {
                    let address = self.address(bottom);
                    let below = self.partials(bottom, room, memo, busy);
                    let auxes = self.derivations_of(aux, room, memo, busy);
                    'outer2: for b in below.iter() {
                        for d in &auxes {
                            if out.len() >= limit {
                                break 'outer2;
                            }
                            let mut v = b.clone();
                            v.push(Attachment {
                                operation: Operation::Adjunction,
                                address: address.clone(),
                                node: d.clone(),
                            });
                            out.push(v);
                        }
                    }
                }
            }
        }
        out.truncate(limit);
        busy.remove(&id);
        let rc = Rc::new(out);
        memo.insert(id, rc.clone());
        rc
    }
}

struct Chart<'a> {
    cfg: &'a ParserConfig,
    n: u16,
    trees: Vec<TreeInfo>,
    cands: Vec<Cand>,
    start_labels: Option<HashSet<u32>>,
    items: Vec<Item>,
    index: HashMap<Key, u32>,
    agenda: VecDeque<u32>,
    goals: Vec<u32>,
    // chart indexes, filled when an item is popped
    tops_by_start: HashMap<(u32, u16, u16), Vec<u32>>,
    dots_by_end: HashMap<(u32, u16, u16, u16), Vec<u32>>,
    bottoms: HashMap<(u32, u16, u16), Vec<u32>>,
    aux_tops: HashMap<(u32, u16, u16), Vec<u32>>,
    // (cand, node) substitution sites by label
    subst_sites: HashMap<u32, Vec<(u32, u16)>>,
}

impl Chart<'_> {
    fn node(&self, cand: u32, node: u16) -> &NodeInfo {
        &self.trees[self.cands[cand as usize].tree as usize].nodes[node as usize]
    }

    fn tree_of(&self, cand: u32) -> &TreeInfo {
        &self.trees[self.cands[cand as usize].tree as usize]
    }

    /// Spans must respect where the candidate's anchor sits relative to the
    /// node; a partial item must not yet cover it unless its anchor-bearing
    /// child is complete.
    fn span_ok(&self, key: &Key) -> bool {
        let a = self.cands[key.cand as usize].anchor;
        let (i, j) = (key.i, key.j);
        let info = self.node(key.cand, key.node);
        let covers = match (key.state, info.anchor_child) {
            (State::Dot(c), Some(k)) => k < c,
            _ => true,
        };
        match info.rel {
            AnchorRel::Dominates if covers => i <= a && a < j && key.foot.map_or(true, |(k, l)| a < k || a >= l),
            AnchorRel::Dominates => j <= a,
            AnchorRel::Left => j <= a,
            AnchorRel::Right => i > a,
        }
    }

    fn add(&mut self, key: Key, back: Back) {
        if !self.span_ok(&key) {
            return;
        }
        if let Some(&id) = self.index.get(&key) {
            self.items[id as usize].backs.push(back);
            return;
        }
        let id = self.items.len() as u32;
        self.items.push(Item { key, backs: vec![back] });
        self.index.insert(key, id);
        self.agenda.push_back(id);
    }

    fn seed(&mut self) {
        for c in 0..self.cands.len() as u32 {
            let cand = self.cands[c as usize];
            let info = self.tree_of(c);
            let anchor_node = info.anchor_node;
            let foot = info.foot_node;
            let a = cand.anchor;
            self.add(
                Key { cand: c, node: anchor_node, state: State::Top, i: a, j: a + 1, foot: None, stack: 0 },
                Back::Axiom,
            );
            if let Some(f) = foot {
                for k in 0..self.n {
                    for l in k + 1..=self.n {
                        self.add(
                            Key { cand: c, node: f, state: State::Top, i: k, j: l, foot: Some((k, l)), stack: 0 },
                            Back::Axiom,
                        );
                    }
                }
            }
        }
    }

    fn run(&mut self) {
        self.seed();
        while let Some(id) = self.agenda.pop_front() {
            let key = self.items[id as usize].key;
            match key.state {
                State::Top => self.pop_top(id, key),
                State::Dot(c) => self.pop_dot(id, key, c),
            }
        }
    }

    fn pop_top(&mut self, id: u32, key: Key) {
        let (parent, label) = {
            let info = self.node(key.cand, key.node);
            (info.parent, info.label)
        };
        let tree_kind = self.tree_of(key.cand).kind;
        if parent.is_none() {
            match tree_kind {
                TreeKind::Initial if key.foot.is_none() => {
                    if key.i == 0 && key.j == self.n && self.start_labels.as_ref().map_or(true, |s| s.contains(&label))
                    {
                        self.goals.push(id);
                    }
                    let sites = self.subst_sites.get(&label).cloned().unwrap_or_default();
                    for (c2, n2) in sites {
                        if c2 == key.cand {
                            continue;
                        }
                        if self.cfg.check_features
                            && !features_compatible(
                                &self.node(c2, n2).features,
                                &self.node(key.cand, key.node).features,
                            )
                        {
                            continue;
                        }
                        self.add(
                            Key { cand: c2, node: n2, state: State::Top, i: key.i, j: key.j, foot: None, stack: 0 },
                            Back::Subst { root: id },
                        );
                    }
                }
                TreeKind::Auxiliary => {
                    let (k, l) = key.foot.expect("auxiliary root spans its foot");
                    let bottoms = self.bottoms.get(&(label, k, l)).cloned().unwrap_or_default();
                    for b in bottoms {
                        self.adjoin(id, b);
                    }
                    self.aux_tops.entry((label, k, l)).or_default().push(id);
                }
                _ => {}
            }
            return;
        }
        let (parent, idx) = parent.unwrap();
        if idx == 0 {
            self.add(
                Key {
                    cand: key.cand,
                    node: parent,
                    state: State::Dot(1),
                    i: key.i,
                    j: key.j,
                    foot: key.foot,
                    stack: 0,
                },
                Back::First { child: id },
            );
        } else {
            let dots = self.dots_by_end.get(&(key.cand, parent, idx, key.i)).cloned().unwrap_or_default();
            for d in dots {
                self.combine(d, id);
            }
        }
        self.tops_by_start.entry((key.cand, key.node, key.i)).or_default().push(id);
    }

    fn pop_dot(&mut self, id: u32, key: Key, c: u16) {
        let info = self.node(key.cand, key.node);
        let (m, label, is_root) = (info.children.len() as u16, info.label, info.parent.is_none());
        if c < m {
            let child = info.children[c as usize];
            let tops = self.tops_by_start.get(&(key.cand, child, key.j)).cloned().unwrap_or_default();
            for t in tops {
                self.combine(id, t);
            }
            self.dots_by_end.entry((key.cand, key.node, c, key.j)).or_default().push(id);
            return;
        }
        let is_aux_root = is_root && self.tree_of(key.cand).kind == TreeKind::Auxiliary;
        self.add(Key { state: State::Top, stack: u8::from(is_aux_root), ..key }, Back::NoAdjoin { bottom: id });
        let auxes = self.aux_tops.get(&(label, key.i, key.j)).cloned().unwrap_or_default();
        for a in auxes {
            self.adjoin(a, id);
        }
        self.bottoms.entry((label, key.i, key.j)).or_default().push(id);
    }

    fn combine(&mut self, dot: u32, top: u32) {
        let d = self.items[dot as usize].key;
        let t = self.items[top as usize].key;
        let foot = match (d.foot, t.foot) {
            (Some(_), Some(_)) => return,
            (f, None) | (None, f) => f,
        };
        let State::Dot(c) = d.state else { unreachable!() };
        self.add(
            Key { cand: d.cand, node: d.node, state: State::Dot(c + 1), i: d.i, j: t.j, foot, stack: 0 },
            Back::Next { dot, child: top },
        );
    }

    fn adjoin(&mut self, aux: u32, bottom: u32) {
        let a = self.items[aux as usize].key;
        let b = self.items[bottom as usize].key;
        if a.cand == b.cand {
            return;
        }
        if self.cfg.check_features {
            let site = &self.node(b.cand, b.node).features;
            let aux_tree = self.tree_of(a.cand);
            let root = &aux_tree.nodes[0].features;
            let foot = &aux_tree.nodes[aux_tree.foot_node.expect("aux foot") as usize].features;
            if !features_compatible(site, root) || !features_compatible(site, foot) {
                return;
            }
        }
        let site_is_aux_root =
            self.node(b.cand, b.node).parent.is_none() && self.tree_of(b.cand).kind == TreeKind::Auxiliary;
        let stack = if site_is_aux_root { a.stack as usize + 1 } else { 0 };
        if stack > self.cfg.max_adjunction_stack || a.stack as usize > self.cfg.max_adjunction_stack {
            return;
        }
        self.add(
            Key { cand: b.cand, node: b.node, state: State::Top, i: a.i, j: a.j, foot: b.foot, stack: stack as u8 },
            Back::Adjoin { aux, bottom },
        );
    }
}

/// Builds the packed forest of all derivations over the candidate trees,
/// with each word anchoring exactly one elementary tree.
pub fn parse(grammar: &Grammar, assignment: &TreeAssignment, cfg: &ParserConfig) -> Result<ParseForest, ParseError> {
    let n = assignment.len();
    if n >= u16::MAX as usize {
        return Err(ParseError::TooLong(n));
    }
    let mut intern = Interner::default();
    let mut trees: Vec<TreeInfo> = Vec::new();
    let mut tree_ids: HashMap<&str, u32> = HashMap::new();
    let mut cands = Vec::new();
    for (position, set) in assignment.positions.iter().enumerate() {
        for name in set {
            let id = match tree_ids.get(name.as_str()) {
                Some(&id) => id,
                None => {
                    let tree =
                        grammar.tree(name).ok_or_else(|| ParseError::UnknownTree { position, tree: name.clone() })?;
                    trees.push(TreeInfo::build(tree, &mut intern));
                    let id = trees.len() as u32 - 1;
                    tree_ids.insert(name.as_str(), id);
                    id
                }
            };
            cands.push(Cand { tree: id, anchor: position as u16 });
        }
    }
    let start_labels = cfg.start.as_ref().map(|s| s.iter().map(|l| intern.get(l)).collect());
    let mut subst_sites: HashMap<u32, Vec<(u32, u16)>> = HashMap::new();
    for (c, cand) in cands.iter().enumerate() {
        for (ni, node) in trees[cand.tree as usize].nodes.iter().enumerate() {
            if node.kind == NodeKind::Substitution {
                subst_sites.entry(node.label).or_default().push((c as u32, ni as u16));
            }
        }
    }
    let mut chart = Chart {
        cfg,
        n: n as u16,
        trees,
        cands,
        start_labels,
        items: Vec::new(),
        index: HashMap::new(),
        agenda: VecDeque::new(),
        goals: Vec::new(),
        tops_by_start: HashMap::new(),
        dots_by_end: HashMap::new(),
        bottoms: HashMap::new(),
        aux_tops: HashMap::new(),
        subst_sites,
    };
    if n > 0 {
        chart.run();
    }
    let mut goals = chart.goals;
    goals.sort_unstable();
    Ok(ParseForest { n, trees: chart.trees, cands: chart.cands, items: chart.items, goals })
}
