//! Bracket-based parse evaluation: crossing brackets, recall and precision
//! against a gold treebank, with optional constituent flattening.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{BracketError, PennTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("candidate covers {candidate} words, gold covers {gold}")]
    LengthMismatch { candidate: usize, gold: usize },
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error("{candidates} candidate entries but {golds} gold trees")]
    Misaligned { candidates: usize, golds: usize },
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: Option<String>,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end, label: None }
    }

    pub fn labeled(start: usize, end: usize, label: &str) -> Self {
        Span { start, end, label: Some(label.to_string()) }
    }

    pub fn crosses(&self, other: &Span) -> bool {
        let (a, b, c, d) = (self.start, self.end, other.start, other.end);
        (a < c && c < b && b < d) || (c < a && a < d && d < b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracketing {
    pub length: usize,
    pub spans: BTreeSet<Span>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    pub unlabeled: bool,
    pub drop_single_word: bool,
    pub drop_whole_sentence: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions { unlabeled: true, drop_single_word: true, drop_whole_sentence: true }
    }
}

impl Bracketing {
    pub fn parse(s: &str) -> Result<Self, EvalError> {
        Ok(brackets_of(&PennTree::parse(s)?))
    }

    pub fn normalized(&self, opts: &NormalizeOptions) -> Bracketing {
        let spans = self
            .spans
            .iter()
            .filter(|s| !(opts.drop_single_word && s.end - s.start == 1))
            .filter(|s| !(opts.drop_whole_sentence && s.start == 0 && s.end == self.length))
            .map(|s| if opts.unlabeled { Span::new(s.start, s.end) } else { s.clone() })
            .collect();
        Bracketing { length: self.length, spans }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// One labeled span per internal node, before normalization.
pub fn brackets_of(t: &PennTree) -> Bracketing {
    fn walk(t: &PennTree, start: usize, out: &mut BTreeSet<Span>) -> usize {
        match t {
            PennTree::Word(_) => start + 1,
            PennTree::Node { label, children } => {
                let end = children.iter().fold(start, |pos, c| walk(c, pos, out));
                if end > start {
                    out.insert(Span::labeled(start, end, label));
                }
                end
            }
        }
    }
    let mut spans = BTreeSet::new();
    let length = walk(t, 0, &mut spans);
    Bracketing { length, spans }
}

fn check_lengths(c: &Bracketing, g: &Bracketing) -> Result<(), EvalError> {
    if c.length != g.length {
        return Err(EvalError::LengthMismatch { candidate: c.length, gold: g.length });
    }
    Ok(())
}

/// Candidate spans that cross at least one gold span, after the default
/// normalization.
pub fn crossing(candidate: &Bracketing, gold: &Bracketing) -> Result<usize, EvalError> {
    crossing_with(candidate, gold, &NormalizeOptions::default())
}

pub fn crossing_with(candidate: &Bracketing, gold: &Bracketing, opts: &NormalizeOptions) -> Result<usize, EvalError> {
    check_lengths(candidate, gold)?;
    let (c, g) = (candidate.normalized(opts), gold.normalized(opts));
    Ok(c.spans.iter().filter(|s| g.spans.iter().any(|t| s.crosses(t))).count())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    #[default]
    Standard,
    /// Candidate constituent count over gold constituent count.
    PaperLiteral,
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

/// `(recall, precision)` percentages after the default normalization.
pub fn recall_precision(candidate: &Bracketing, gold: &Bracketing, mode: RecallMode) -> Result<(f64, f64), EvalError> {
    let s = evaluate(candidate, gold, mode, &NormalizeOptions::default())?;
    Ok((s.recall_pct, s.precision_pct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub crossing_count: usize,
    pub zero_crossing: bool,
    pub recall_pct: f64,
    pub precision_pct: f64,
    pub candidate_constituents: usize,
    pub gold_constituents: usize,
    pub correct_constituents: usize,
}

pub fn evaluate(
    candidate: &Bracketing,
    gold: &Bracketing,
    mode: RecallMode,
    opts: &NormalizeOptions,
) -> Result<EvalScores, EvalError> {
    check_lengths(candidate, gold)?;
    let (c, g) = (candidate.normalized(opts), gold.normalized(opts));
    let crossing_count = c.spans.iter().filter(|s| g.spans.iter().any(|t| s.crosses(t))).count();
    let correct = c.spans.intersection(&g.spans).count();
    let (nc, ng) = (c.len(), g.len());
    let (recall_pct, precision_pct) = match (nc, ng) {
        (0, 0) => (100.0, 100.0),
        (0, _) | (_, 0) => (0.0, 0.0),
        _ => {
            let recall = match mode {
                RecallMode::Standard => pct(correct, ng),
                RecallMode::PaperLiteral => pct(nc, ng),
            };
            (recall, pct(correct, nc))
        }
    };
    Ok(EvalScores {
        crossing_count,
        zero_crossing: crossing_count == 0,
        recall_pct,
        precision_pct,
        candidate_constituents: nc,
        gold_constituents: ng,
        correct_constituents: correct,
    })
}

/// Removes internal structure below each maximal node labeled in
/// `categories`: category descendants are spliced into it and its
/// preterminal children are replaced by their words. Structure under
/// children with other labels is flattened independently.
pub fn flatten(t: &PennTree, categories: &BTreeSet<String>) -> PennTree {
    match t {
        PennTree::Word(_) => t.clone(),
        PennTree::Node { label, children } if categories.contains(label) => {
            let mut out = Vec::new();
            splice(children, categories, &mut out);
            let out = out.into_iter().map(|c| if c.is_preterminal() { c.children()[0].clone() } else { c }).collect();
            PennTree::node(label.clone(), out)
        }
        PennTree::Node { label, children } => {
            PennTree::node(label.clone(), children.iter().map(|c| flatten(c, categories)).collect())
        }
    }
}

fn splice(children: &[PennTree], categories: &BTreeSet<String>, out: &mut Vec<PennTree>) {
    for c in children {
        match c {
            PennTree::Node { label, children } if categories.contains(label) => splice(children, categories, out),
            _ => out.push(flatten(c, categories)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    First,
    BestOfK,
    #[default]
    MeanOfK,
}

/// One sentence's aggregated result. Means over several parses make the
/// crossing count and zero-crossing indicator fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub parses_evaluated: usize,
    /// `None` for a sentence without parses.
    pub crossing_count: Option<f64>,
    pub zero_crossing: f64,
    pub recall_pct: f64,
    pub precision_pct: f64,
    pub candidate_constituents: f64,
    pub gold_constituents: f64,
    pub correct_constituents: f64,
}

impl SentenceScore {
    pub fn coverage_failure(&self) -> bool {
        self.parses_evaluated == 0
    }
}

/// Aggregates the scores of a sentence's ranked parses (best first), of
/// which the caller has kept at most `top_k`.
pub fn aggregate(scores: &[EvalScores], aggregation: Aggregation) -> SentenceScore {
    let from = |s: &EvalScores| SentenceScore {
        parses_evaluated: scores.len(),
        crossing_count: Some(s.crossing_count as f64),
        zero_crossing: if s.zero_crossing { 1.0 } else { 0.0 },
        recall_pct: s.recall_pct,
        precision_pct: s.precision_pct,
        candidate_constituents: s.candidate_constituents as f64,
        gold_constituents: s.gold_constituents as f64,
        correct_constituents: s.correct_constituents as f64,
    };
    if scores.is_empty() {
        return SentenceScore {
            parses_evaluated: 0,
            crossing_count: None,
            zero_crossing: 0.0,
            recall_pct: 0.0,
            precision_pct: 0.0,
            candidate_constituents: 0.0,
            gold_constituents: 0.0,
            correct_constituents: 0.0,
        };
    }
    match aggregation {
        Aggregation::First => from(&scores[0]),
        Aggregation::BestOfK => {
            let mut best = &scores[0];
            for s in &scores[1..] {
                let better = s.crossing_count < best.crossing_count
                    || (s.crossing_count == best.crossing_count
                        && (s.recall_pct > best.recall_pct
                            || (s.recall_pct == best.recall_pct && s.precision_pct > best.precision_pct)));
                if better {
                    best = s;
                }
            }
            from(best)
        }
        Aggregation::MeanOfK => {
            let k = scores.len() as f64;
            let mean = |f: &dyn Fn(&EvalScores) -> f64| scores.iter().map(f).sum::<f64>() / k;
            SentenceScore {
                parses_evaluated: scores.len(),
                crossing_count: Some(mean(&|s| s.crossing_count as f64)),
                zero_crossing: mean(&|s| if s.zero_crossing { 1.0 } else { 0.0 }),
                recall_pct: mean(&|s| s.recall_pct),
                precision_pct: mean(&|s| s.precision_pct),
                candidate_constituents: mean(&|s| s.candidate_constituents as f64),
                gold_constituents: mean(&|s| s.gold_constituents as f64),
                correct_constituents: mean(&|s| s.correct_constituents as f64),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub sentences: usize,
    pub coverage_failures: usize,
    pub zero_crossing_pct: f64,
    /// Mean crossing count over sentences that received a parse.
    pub crossing_avg: f64,
    /// Per-sentence percentages averaged over all sentences.
    pub recall_pct: f64,
    pub precision_pct: f64,
    pub candidate_constituents_avg: f64,
    pub gold_constituents_avg: f64,
}

impl CorpusScores {
    pub fn from_sentences(scores: &[SentenceScore]) -> CorpusScores {
        let n = scores.len();
        let parsed: Vec<f64> = scores.iter().filter_map(|s| s.crossing_count).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, d: usize| if d == 0 { 0.0 } else { xs.sum::<f64>() / d as f64 };
        CorpusScores {
            sentences: n,
            coverage_failures: n - parsed.len(),
            zero_crossing_pct: 100.0 * mean(&mut scores.iter().map(|s| s.zero_crossing), n),
            crossing_avg: mean(&mut parsed.iter().copied(), parsed.len()),
            recall_pct: mean(&mut scores.iter().map(|s| s.recall_pct), n),
            precision_pct: mean(&mut scores.iter().map(|s| s.precision_pct), n),
            candidate_constituents_avg: mean(
                &mut scores.iter().filter(|s| !s.coverage_failure()).map(|s| s.candidate_constituents),
                parsed.len(),
            ),
            gold_constituents_avg: mean(&mut scores.iter().map(|s| s.gold_constituents), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub top_k: usize,
    pub aggregation: Aggregation,
    pub recall_mode: RecallMode,
    pub normalize: NormalizeOptions,
    /// Categories to flatten in both candidate and gold; empty disables.
    pub flatten: BTreeSet<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_k: 6,
            aggregation: Aggregation::MeanOfK,
            recall_mode: RecallMode::Standard,
            normalize: NormalizeOptions::default(),
            flatten: BTreeSet::new(),
        }
    }
}

impl EvalConfig {
    fn prepare(&self, t: &PennTree) -> Bracketing {
        if self.flatten.is_empty() {
            brackets_of(t)
        } else {
            brackets_of(&flatten(t, &self.flatten))
        }
    }

    /// Scores a single candidate against a gold tree.
    pub fn score_parse(&self, candidate: &PennTree, gold: &PennTree) -> Result<EvalScores, EvalError> {
        evaluate(&self.prepare(candidate), &self.prepare(gold), self.recall_mode, &self.normalize)
    }

    /// Scores the first `top_k` ranked candidates and aggregates them.
    pub fn score_sentence(&self, ranked: &[PennTree], gold: &PennTree) -> Result<SentenceScore, EvalError> {
        if self.top_k == 0 {
            return Err(EvalError::ZeroTopK);
        }
        let g = self.prepare(gold);
        let scores = ranked
            .iter()
            .take(self.top_k)
            .map(|c| evaluate(&self.prepare(c), &g, self.recall_mode, &self.normalize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut s = aggregate(&scores, self.aggregation);
        if s.coverage_failure() {
            s.gold_constituents = g.normalized(&self.normalize).len() as f64;
        }
        Ok(s)
    }
}

/// Scores a corpus of (ranked candidates, gold) pairs.
pub fn score_corpus(
    pairs: &[(Vec<PennTree>, PennTree)],
    cfg: &EvalConfig,
) -> Result<(CorpusScores, Vec<SentenceScore>), EvalError> {
    let per = pairs
        .iter()
        .enumerate()
        .map(|(index, (ranked, gold))| {
            cfg.score_sentence(ranked, gold).map_err(|e| match e {
                EvalError::ZeroTopK => e,
                other => EvalError::Sentence { index, source: Box::new(other) },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((CorpusScores::from_sentences(&per), per))
}
