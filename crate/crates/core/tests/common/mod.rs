//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagrank::chart::{self, ParserConfig};
use tagrank::derive::{self, DerivedNode, DerivedTree};
use tagrank::grammar::{load_grammar, Grammar, NodeKind, TreeKind, TreeNode};
use tagrank::heuristics::{rank_order, HeuristicVector, WeightVector};
use tagrank::parseval::{Bracketing, EvalConfig, Span};
use tagrank::select::{select_untagged, TreeAssignment};
use tagrank::trainer::TrainingSentence;
use tagrank::tree::{GornAddress, PennTree};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn grammar(name: &str) -> Grammar {
    load_grammar(&data_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Words grouped by identical candidate-tree sets. Classes are ordered by
/// their alphabetically first word, which serves as the representative.
#[derive(Debug, Clone)]
pub struct WordClasses {
    pub words: Vec<Vec<String>>,
    pub trees: Vec<BTreeSet<String>>,
}

impl WordClasses {
    pub fn of(g: &Grammar) -> Self {
        let words: BTreeSet<String> = g.lex_entries().map(|e| e.lemma).collect();
        let mut by_set: BTreeMap<BTreeSet<String>, Vec<String>> = BTreeMap::new();
        for w in words {
            let set = select_untagged(g, &[w.as_str()]).positions.remove(0);
            by_set.entry(set).or_default().push(w);
        }
        let mut classes: Vec<(Vec<String>, BTreeSet<String>)> = by_set.into_iter().map(|(s, w)| (w, s)).collect();
        classes.sort();
        WordClasses {
            words: classes.iter().map(|c| c.0.clone()).collect(),
            trees: classes.into_iter().map(|c| c.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn vocabulary(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn class_of(&self, word: &str) -> usize {
        self.words.iter().position(|ws| ws.iter().any(|w| w == word)).expect("known word")
    }

    pub fn assignment(&self, seq: &[usize]) -> TreeAssignment {
        TreeAssignment { positions: seq.iter().map(|&c| self.trees[c].clone()).collect() }
    }

    pub fn representatives(&self, seq: &[usize]) -> Vec<String> {
        seq.iter().map(|&c| self.words[c][0].clone()).collect()
    }
}

/// Derived tree with every phrase node tagged by its elementary tree and
/// address, and every word replaced by its class.
pub fn decorate(t: &DerivedTree, classes_at: &[usize]) -> String {
    fn go(n: &DerivedNode, classes_at: &[usize], out: &mut String) {
        match n {
            DerivedNode::Word { index, .. } => out.push_str(&format!("w{}", classes_at[*index])),
            DerivedNode::Phrase { label, origin, children, .. } => {
                out.push_str(&format!("({label}|{}|{}", origin.tree, origin.address));
                for c in children {
                    out.push(' ');
                    go(c, classes_at, out);
                }
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    go(&t.root, classes_at, &mut s);
    s
}

/// Parses a class sequence and returns the sorted decorated derived trees,
/// checking that the forest's count agrees with the enumeration.
pub fn parser_trees(
    g: &Grammar,
    assignment: &TreeAssignment,
    words: &[String],
    classes_at: &[usize],
    cfg: &ParserConfig,
) -> Vec<String> {
    let forest = chart::parse(g, assignment, cfg).expect("parse");
    let ds = forest.enumerate(None);
    assert_eq!(forest.derivation_count(), ds.len() as u128, "count vs enumeration for {words:?}");
    let mut out: Vec<String> = ds
        .iter()
        .map(|d| decorate(&derive::derive(g, d, words, cfg.check_features).expect("derivable"), classes_at))
        .collect();
    out.sort();
    out
}

/// A partial derived tree: a complete subtree, or one with a hole where an
/// auxiliary tree's foot will receive the adjunction site.
#[derive(Debug, Clone)]
struct Frag {
    pre: String,
    suf: Option<String>,
    ypre: Vec<u8>,
    ysuf: Vec<u8>,
}

impl Frag {
    fn len(&self) -> usize {
        self.ypre.len() + self.ysuf.len()
    }

    fn append(&mut self, s: &str, y: &[u8]) {
        match &mut self.suf {
            Some(suf) => {
                suf.push_str(s);
                self.ysuf.extend_from_slice(y);
            }
            None => {
                self.pre.push_str(s);
                self.ypre.extend_from_slice(y);
            }
        }
    }

    /// Concatenates `other` after `self`; at most one of them has a hole.
    fn then(&self, other: &Frag) -> Frag {
        let mut f = self.clone();
        f.append(" ", &[]);
        match &other.suf {
            None => f.append(&other.pre, &other.ypre),
            Some(osuf) => {
                assert!(f.suf.is_none(), "two holes");
                f.pre.push_str(&other.pre);
                f.ypre.extend_from_slice(&other.ypre);
                f.suf = Some(osuf.clone());
                f.ysuf = other.ysuf.clone();
            }
        }
        f
    }

    /// `aux` wrapped around `self`.
    fn inside(&self, aux: &Frag) -> Frag {
        let mut f = Frag {
            pre: aux.pre.clone() + &self.pre,
            suf: None,
            ypre: [aux.ypre.as_slice(), self.ypre.as_slice()].concat(),
            ysuf: Vec::new(),
        };
        let asuf = aux.suf.as_ref().expect("auxiliary fragment has a hole");
        match &self.suf {
            Some(s) => {
                f.suf = Some(s.clone() + asuf);
                f.ysuf = [self.ysuf.as_slice(), aux.ysuf.as_slice()].concat();
            }
            None => {
                f.pre.push_str(asuf);
                f.ypre.extend_from_slice(&aux.ysuf);
            }
        }
        f
    }
}

/// Top-down enumeration of every derivation with a bounded number of
/// anchors. Shares nothing with the chart parser beyond the grammar.
pub struct Generator<'g> {
    g: &'g Grammar,
    classes_for_tree: HashMap<String, Vec<u8>>,
    max_stack: usize,
    memo: HashMap<(bool, String, usize, usize), Rc<Vec<Frag>>>,
}

impl<'g> Generator<'g> {
    pub fn new(g: &'g Grammar, classes: &WordClasses, max_stack: usize) -> Self {
        let mut classes_for_tree: HashMap<String, Vec<u8>> = HashMap::new();
        for (c, set) in classes.trees.iter().enumerate() {
            for t in set {
                classes_for_tree.entry(t.clone()).or_default().push(c as u8);
            }
        }
        Generator { g, classes_for_tree, max_stack, memo: HashMap::new() }
    }

    fn initial(&mut self, label: &str, budget: usize) -> Rc<Vec<Frag>> {
        self.elementary(false, label, budget, 0)
    }

    /// Auxiliary fragments whose chain of root-stacked auxiliaries has at
    /// most `limit` members.
    fn auxiliary(&mut self, label: &str, budget: usize, limit: usize) -> Rc<Vec<Frag>> {
        self.elementary(true, label, budget, limit)
    }

    fn elementary(&mut self, aux: bool, label: &str, budget: usize, limit: usize) -> Rc<Vec<Frag>> {
        let key = (aux, label.to_string(), budget, limit);
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let mut out = Vec::new();
        if budget > 0 && (!aux || limit > 0) {
            let trees: Vec<_> = self
                .g
                .trees()
                .filter(|t| t.is_auxiliary() == aux && t.root.label == label)
                .map(|t| t.name.clone())
                .collect();
            for name in trees {
                let classes = self.classes_for_tree.get(&name).cloned().unwrap_or_default();
                let root = self.g.tree(&name).unwrap().root.clone();
                for c in classes {
                    let frags = self.node(&name, &root, GornAddress::root(), c, budget, limit, true);
                    out.extend(frags);
                }
            }
        }
        let rc = Rc::new(out);
        self.memo.insert(key, rc.clone());
        rc
    }

    #[allow(clippy::too_many_arguments)]
    fn node(
        &mut self,
        tree: &str,
        n: &TreeNode,
        addr: GornAddress,
        class: u8,
        budget: usize,
        limit: usize,
        is_root: bool,
    ) -> Vec<Frag> {
        match n.kind {
            NodeKind::Anchor => vec![Frag {
                pre: format!("({}|{tree}|{addr} w{class})", n.label),
                suf: None,
                ypre: vec![class],
                ysuf: vec![],
            }],
            NodeKind::Foot => vec![Frag { pre: String::new(), suf: Some(String::new()), ypre: vec![], ysuf: vec![] }],
            NodeKind::Substitution => {
                self.initial(&n.label, budget).iter().filter(|f| f.len() <= budget).cloned().collect()
            }
            NodeKind::Internal => {
                let open =
                    Frag { pre: format!("({}|{}|{}", n.label, tree, addr), suf: None, ypre: vec![], ysuf: vec![] };
                let mut partial = vec![open];
                for (k, child) in n.children.iter().enumerate() {
                    let mut next = Vec::new();
                    for p in &partial {
                        let room = budget - p.len();
                        for f in self.node(tree, child, addr.child(k + 1), class, room, limit, false) {
                            if p.len() + f.len() <= budget {
                                next.push(p.then(&f));
                            }
                        }
                    }
                    partial = next;
                }
                let mut done: Vec<Frag> = partial
                    .into_iter()
                    .map(|mut f| {
                        f.append(")", &[]);
                        f
                    })
                    .collect();
                let aux_limit = if is_root && self.g.tree(tree).unwrap().kind == TreeKind::Auxiliary {
                    limit - 1
                } else {
                    self.max_stack
                };
                let mut adjoined = Vec::new();
                for f in &done {
                    let room = budget - f.len();
                    for a in self.auxiliary(&n.label, room, aux_limit).iter() {
                        if f.len() + a.len() <= budget {
                            adjoined.push(f.inside(a));
                        }
                    }
                }
                done.extend(adjoined);
                done
            }
        }
    }

    /// Decorated derived trees grouped by class yield, for every derivation
    /// with at most `max_len` anchors rooted in `start` (or any initial tree).
    pub fn by_yield(&mut self, start: Option<&BTreeSet<String>>, max_len: usize) -> HashMap<Vec<u8>, Vec<String>> {
        let labels: BTreeSet<String> = match start {
            Some(s) => s.clone(),
            None => self.g.trees().filter(|t| !t.is_auxiliary()).map(|t| t.root.label.clone()).collect(),
        };
        let mut out: HashMap<Vec<u8>, Vec<String>> = HashMap::new();
        for l in labels {
            for f in self.initial(&l, max_len).iter() {
                out.entry(f.ypre.clone()).or_default().push(f.pre.clone());
            }
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }
}

/// All sequences over `0..k` with lengths `1..=max_len`.
pub fn sequences(k: usize, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..max_len {
        layer = layer.iter().flat_map(|s| (0..k as u8).map(move |c| [s.as_slice(), &[c]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Counts candidate spans crossing some gold span, deciding each pair by
/// word membership rather than endpoint comparisons.
pub fn brute_crossing(cand: &[(usize, usize)], gold: &[(usize, usize)], n: usize) -> usize {
    let inside = |s: (usize, usize), w: usize| s.0 <= w && w < s.1;
    let mut count = 0;
    for &c in cand {
        let mut crosses = false;
        for &g in gold {
            // c and g overlap without nesting iff each has a word the other
            // lacks and they share one
            let (mut shared, mut only_c, mut only_g) = (false, false, false);
            for w in 0..n {
                match (inside(c, w), inside(g, w)) {
                    (true, true) => shared = true,
                    (true, false) => only_c = true,
                    (false, true) => only_g = true,
                    _ => {}
                }
            }
            crosses |= shared && only_c && only_g;
        }
        count += usize::from(crosses);
    }
    count
}

/// A uniformly shaped random binary bracketing over `n` leaves, in the
/// bracket-string form `(X (X a b) c)`.
pub fn random_binary(rng: &mut impl Rng, n: usize) -> String {
    fn build(rng: &mut impl Rng, lo: usize, hi: usize) -> String {
        if hi - lo == 1 {
            return format!("w{lo}");
        }
        let mid = rng.gen_range(lo + 1..hi);
        format!("(X {} {})", build(rng, lo, mid), build(rng, mid, hi))
    }
    build(rng, 0, n)
}

/// Normalized spans as plain pairs: no single words, no whole sentence.
pub fn plain_spans(b: &Bracketing) -> Vec<(usize, usize)> {
    b.spans
        .iter()
        .map(|s: &Span| (s.start, s.end))
        .filter(|&(s, e)| e - s > 1 && !(s == 0 && e == b.length))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Default, Clone)]
pub struct ExhaustiveReport {
    pub sentences: usize,
    pub parsed: usize,
    pub derivations: usize,
    /// First disagreement between parser and generator.
    pub oracle_mismatch: Option<String>,
    /// First disagreement between filtered and unfiltered parsing.
    pub filter_mismatch: Option<String>,
    pub candidates: usize,
    pub removed_by_filter: usize,
    pub oracle_time: std::time::Duration,
    pub filter_time: std::time::Duration,
}

/// Compares parser output with the generator's trees for every class
/// sequence up to `max_len`; with `with_filter`, also compares parsing after
/// the structural filter against parsing without it.
pub fn exhaustive_run(
    g: &Grammar,
    classes: &WordClasses,
    cfg: &ParserConfig,
    max_len: usize,
    with_filter: bool,
) -> ExhaustiveReport {
    use std::time::Instant;
    let mut r = ExhaustiveReport::default();
    let t = Instant::now();
    let expected = Generator::new(g, classes, cfg.max_adjunction_stack).by_yield(cfg.start.as_ref(), max_len);
    r.oracle_time += t.elapsed();
    let mut matched = 0;
    for seq in sequences(classes.len(), max_len) {
        let seq: Vec<usize> = seq.into_iter().map(usize::from).collect();
        let assignment = classes.assignment(&seq);
        let words = classes.representatives(&seq);
        let t = Instant::now();
        let got = parser_trees(g, &assignment, &words, &seq, cfg);
        let key: Vec<u8> = seq.iter().map(|&c| c as u8).collect();
        let want = expected.get(&key).map(Vec::as_slice).unwrap_or_default();
        if got != want && r.oracle_mismatch.is_none() {
            r.oracle_mismatch = Some(format!(
                "{words:?}: parser {} trees, generator {}; parser-only {:?}, generator-only {:?}",
                got.len(),
                want.len(),
                got.iter().find(|t| !want.contains(t)),
                want.iter().find(|t| !got.contains(t)),
            ));
        }
        r.oracle_time += t.elapsed();
        if with_filter {
            let t = Instant::now();
            let filtered = tagrank::filter::structural_filter(g, &assignment);
            r.candidates += assignment.total();
            r.removed_by_filter += assignment.total() - filtered.total();
            let after = parser_trees(g, &filtered, &words, &seq, cfg);
            if after != got && r.filter_mismatch.is_none() {
                r.filter_mismatch =
                    Some(format!("{words:?}: {} parses unfiltered, {} filtered", got.len(), after.len()));
            }
            r.filter_time += t.elapsed();
        }
        r.sentences += 1;
        r.parsed += usize::from(!got.is_empty());
        r.derivations += got.len();
        matched += usize::from(!want.is_empty());
    }
    if matched != expected.len() && r.oracle_mismatch.is_none() {
        r.oracle_mismatch = Some(format!("generator produced {} yields, {} were checked", expected.len(), matched));
    }
    r
}

/// Sentences with random parse bracketings and random integer heuristic
/// vectors whose gold parse is the top parse under a hidden target weight
/// vector. Only the first `active` heuristics vary; the rest are zero.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub target: WeightVector,
    pub sentences: Vec<(Vec<HeuristicVector>, Vec<PennTree>)>,
}

impl SyntheticCorpus {
    pub fn generate(seed: u64, size: usize, dims: usize, active: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = WeightVector((0..dims).map(|d| if d < active { rng.gen_range(-0.5..2.5) } else { 1.0 }).collect());
        let mut sentences = Vec::with_capacity(size);
        while sentences.len() < size {
            let n = rng.gen_range(6..=10);
            let k = rng.gen_range(4..=8);
            let mut trees: Vec<PennTree> = Vec::new();
            while trees.len() < k {
                let t = PennTree::parse(&random_binary(&mut rng, n)).expect("generated bracketing");
                if !trees.contains(&t) {
                    trees.push(t);
                }
            }
            let vectors = (0..k)
                .map(|_| {
                    HeuristicVector(
                        (0..dims).map(|d| if d < active { f64::from(rng.gen_range(0..=3u8)) } else { 0.0 }).collect(),
                    )
                })
                .collect();
            sentences.push((vectors, trees));
        }
        SyntheticCorpus { target, sentences }
    }

    pub fn gold_index(&self, i: usize) -> usize {
        rank_order(&self.sentences[i].0, &self.target).expect("dimensions")[0]
    }

    pub fn training_sentences(&self, cfg: &EvalConfig, ids: &[usize]) -> Vec<TrainingSentence> {
        ids.iter()
            .map(|&id| {
                let (vectors, trees) = &self.sentences[id];
                let gold = &trees[self.gold_index(id)];
                TrainingSentence {
                    id,
                    vectors: vectors.clone(),
                    scores: trees.iter().map(|c| cfg.score_parse(c, gold).expect("same length")).collect(),
                }
            })
            .collect()
    }

    /// Fraction of `ids` whose top parse under `w` is the gold parse.
    pub fn agreement(&self, w: &WeightVector, ids: &[usize]) -> f64 {
        let hits =
            ids.iter().filter(|&&i| rank_order(&self.sentences[i].0, w).expect("dimensions")[0] == self.gold_index(i));
        hits.count() as f64 / ids.len() as f64
    }
}

/// Parses random sentences of concrete (not representative) words and
/// compares them with the generator's trees for their class sequence.
pub fn spot_check(
    g: &Grammar,
    classes: &WordClasses,
    cfg: &ParserConfig,
    max_len: usize,
    samples: usize,
    seed: u64,
) -> Option<String> {
    let expected = Generator::new(g, classes, cfg.max_adjunction_stack).by_yield(cfg.start.as_ref(), max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let len = rng.gen_range(1..=max_len);
        let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..classes.len())).collect();
        let words: Vec<String> =
            seq.iter().map(|&c| classes.words[c][rng.gen_range(0..classes.words[c].len())].clone()).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let got = parser_trees(g, &select_untagged(g, &refs), &words, &seq, cfg);
        let key: Vec<u8> = seq.iter().map(|&c| c as u8).collect();
        if got.as_slice() != expected.get(&key).map(Vec::as_slice).unwrap_or_default() {
            return Some(format!("{words:?}"));
        }
    }
    None
}
