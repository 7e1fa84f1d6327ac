//! Hill-climbing weight training: random single-weight perturbations are
//! kept when they improve the TRAIN objective, and HELD-OUT decides when to
//! stop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{rank_order, HeuristicError, HeuristicVector, WeightVector};
use crate::parseval::{aggregate, Aggregation, CorpusScores, EvalScores};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus has {0} sentences; at least 3 are needed to split")]
    CorpusTooSmall(usize),
    #[error("split proportions must be positive, got {0:?}")]
    BadProportions([usize; 3]),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the {0} set is empty")]
    EmptySet(&'static str),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error("train log line {line}: {message}")]
    Log { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<usize>,
    pub heldout_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_ids.len(), self.heldout_ids.len(), self.test_ids.len())
    }
}

/// Set sizes for `n` items. Proportions summing to `n` are used as is;
/// otherwise they are ratios, rounded by largest remainder (ties to the
/// earlier set).
fn split_sizes(n: usize, p: [usize; 3]) -> [usize; 3] {
    let total: usize = p.iter().sum();
    if total == n {
        return p;
    }
    let mut sizes = [0; 3];
    let mut rems = [(0usize, 0usize); 3];
    for i in 0..3 {
        sizes[i] = n * p[i] / total;
        rems[i] = ((n * p[i]) % total, i);
    }
    let mut left = n - sizes.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &rems {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Uniform random partition of sentence ids `0..n`; ids in each set sorted.
pub fn split(n: usize, proportions: [usize; 3], seed: u64) -> Result<SplitSpec, TrainError> {
    if n < 3 {
        return Err(TrainError::CorpusTooSmall(n));
    }
    if proportions.contains(&0) {
        return Err(TrainError::BadProportions(proportions));
    }
    let [a, b, _] = split_sizes(n, proportions);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: std::ops::Range<usize>| {
        let mut v = ids[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitSpec { train_ids: take(0..a), heldout_ids: take(a..a + b), test_ids: take(a + b..n), seed })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    /// Mean of zero-crossing %, recall and precision must strictly increase.
    #[default]
    MeanOfThree,
    /// Each of the three percentages must strictly increase.
    AllThree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub top_k: usize,
    pub aggregation: Aggregation,
    pub delta_scale: f64,
    pub strike_limit: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub acceptance: Acceptance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            top_k: 6,
            aggregation: Aggregation::MeanOfK,
            delta_scale: 0.5,
            strike_limit: 3,
            max_iterations: 10_000,
            seed: 0,
            acceptance: Acceptance::MeanOfThree,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.delta_scale.is_finite() && self.delta_scale > 0.0) {
            return bad("delta_scale must be positive and finite");
        }
        if self.strike_limit == 0 {
            return bad("strike_limit must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }
}

/// A sentence's cached parses in canonical order: heuristic vectors and
/// each parse's scores against the gold tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSentence {
    pub id: usize,
    pub vectors: Vec<HeuristicVector>,
    pub scores: Vec<EvalScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub value: f64,
    pub zero_crossing_pct: f64,
    pub recall_pct: f64,
    pub precision_pct: f64,
}

impl Objective {
    fn from_corpus(c: &CorpusScores) -> Self {
        Objective {
            value: (c.zero_crossing_pct + c.recall_pct + c.precision_pct) / 3.0,
            zero_crossing_pct: c.zero_crossing_pct,
            recall_pct: c.recall_pct,
            precision_pct: c.precision_pct,
        }
    }

    fn improves_on(&self, old: &Objective, mode: Acceptance) -> bool {
        match mode {
            Acceptance::MeanOfThree => self.value > old.value,
            Acceptance::AllThree => {
                self.zero_crossing_pct > old.zero_crossing_pct
                    && self.recall_pct > old.recall_pct
                    && self.precision_pct > old.precision_pct
            }
        }
    }
}

/// Corpus scores after ranking each sentence's parses with `weights`.
pub fn corpus_scores(
    sentences: &[TrainingSentence],
    weights: &WeightVector,
    top_k: usize,
    aggregation: Aggregation,
) -> Result<CorpusScores, HeuristicError> {
    let per = sentences
        .iter()
        .map(|s| {
            let order = rank_order(&s.vectors, weights)?;
            let top: Vec<EvalScores> = order.iter().take(top_k).map(|&i| s.scores[i].clone()).collect();
            Ok(aggregate(&top, aggregation))
        })
        .collect::<Result<Vec<_>, HeuristicError>>()?;
    Ok(CorpusScores::from_sentences(&per))
}

/// `(zero_crossing_pct + recall_pct + precision_pct) / 3` over `sentences`.
pub fn objective(
    sentences: &[TrainingSentence],
    weights: &WeightVector,
    cfg: &TrainConfig,
) -> Result<Objective, HeuristicError> {
    Ok(Objective::from_corpus(&corpus_scores(sentences, weights, cfg.top_k, cfg.aggregation)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub config: TrainConfig,
    pub train_ids: Vec<usize>,
    pub heldout_ids: Vec<usize>,
    pub initial_weights: WeightVector,
    pub initial_train_objective: f64,
    pub initial_heldout_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub step: usize,
    pub heuristic: usize,
    pub delta: f64,
    pub train_objective: f64,
    pub accepted: bool,
    pub heldout_objective: Option<f64>,
    pub strikes: usize,
    /// Position of the RNG stream after this attempt, in decimal.
    #[serde(with = "decimal_u128")]
    pub rng_word_pos: u128,
}

mod decimal_u128 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Strikes,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub reason: StopReason,
    pub attempted_steps: usize,
    pub accepted_steps: usize,
    pub best_heldout_objective: f64,
    pub final_weights: WeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Attempt(AttemptRecord),
    Result(ResultRecord),
}

/// Append-only record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("log records serialize") + "\n").collect()
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, TrainError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| TrainError::Log { line: i + 1, message: e.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainLog { records })
    }

    pub fn header(&self) -> Option<&LogHeader> {
        match self.records.first() {
            Some(LogRecord::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn attempts(&self) -> impl Iterator<Item = &AttemptRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Attempt(a) => Some(a),
            _ => None,
        })
    }

    pub fn result(&self) -> Option<&ResultRecord> {
        match self.records.last() {
            Some(LogRecord::Result(r)) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub weights: WeightVector,
    pub train_objective: Objective,
    pub heldout_history: Vec<f64>,
    pub best_heldout: f64,
    pub best_weights: WeightVector,
    pub consecutive_strikes: usize,
    pub accepted_steps: usize,
    pub attempted_steps: usize,
    pub rng: ChaCha8Rng,
}

pub struct Trainer<'a> {
    train: &'a [TrainingSentence],
    heldout: &'a [TrainingSentence],
    cfg: TrainConfig,
    pub state: TrainState,
    pub log: TrainLog,
}

impl<'a> Trainer<'a> {
    pub fn new(
        train: &'a [TrainingSentence],
        heldout: &'a [TrainingSentence],
        cfg: &TrainConfig,
        initial: &WeightVector,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptySet("TRAIN"));
        }
        if heldout.is_empty() {
            return Err(TrainError::EmptySet("HELD-OUT"));
        }
        let train_objective = objective(train, initial, cfg)?;
        let heldout_objective = objective(heldout, initial, cfg)?.value;
        let header = LogHeader {
            config: cfg.clone(),
            train_ids: train.iter().map(|s| s.id).collect(),
            heldout_ids: heldout.iter().map(|s| s.id).collect(),
            initial_weights: initial.clone(),
            initial_train_objective: train_objective.value,
            initial_heldout_objective: heldout_objective,
        };
        Ok(Trainer {
            train,
            heldout,
            cfg: cfg.clone(),
            state: TrainState {
                weights: initial.clone(),
                train_objective,
                heldout_history: vec![heldout_objective],
                best_heldout: heldout_objective,
                best_weights: initial.clone(),
                consecutive_strikes: 0,
                accepted_steps: 0,
                attempted_steps: 0,
                rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            },
            log: TrainLog { records: vec![LogRecord::Header(header)] },
        })
    }

    /// Rebuilds a run from a log prefix and positions the RNG after its last
    /// attempt, so that continuing reproduces the uninterrupted run.
    pub fn resume(
        train: &'a [TrainingSentence],
        heldout: &'a [TrainingSentence],
        prefix: &TrainLog,
    ) -> Result<Self, TrainError> {
        let header = prefix.header().ok_or(TrainError::Log { line: 1, message: "missing header record".into() })?;
        let ids = |s: &[TrainingSentence]| s.iter().map(|x| x.id).collect::<Vec<_>>();
        if ids(train) != header.train_ids || ids(heldout) != header.heldout_ids {
            return Err(TrainError::Log { line: 1, message: "sentence ids differ from the logged run".into() });
        }
        let mut t = Trainer::new(train, heldout, &header.config, &header.initial_weights)?;
        for (i, a) in prefix.attempts().enumerate() {
            let line = i + 2;
            if a.heuristic >= t.state.weights.len() {
                return Err(TrainError::Log { line, message: format!("heuristic index {} out of range", a.heuristic) });
            }
            let s = &mut t.state;
            s.attempted_steps += 1;
            if a.accepted {
                s.weights.0[a.heuristic] += a.delta;
                s.train_objective = objective(train, &s.weights, &t.cfg)?;
                s.accepted_steps += 1;
                let h = a
                    .heldout_objective
                    .ok_or(TrainError::Log { line, message: "accepted step lacks held-out".into() })?;
                s.heldout_history.push(h);
                if h > s.best_heldout {
                    s.best_heldout = h;
                    s.best_weights = s.weights.clone();
                }
            }
            s.consecutive_strikes = a.strikes;
            s.rng.set_word_pos(a.rng_word_pos);
            t.log.records.push(LogRecord::Attempt(a.clone()));
        }
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn finished(&self) -> Option<StopReason> {
        if self.state.consecutive_strikes >= self.cfg.strike_limit {
            Some(StopReason::Strikes)
        } else if self.state.attempted_steps >= self.cfg.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        }
    }

    /// Tries `weights[heuristic] += delta` and keeps it on strict TRAIN
    /// improvement, then consults HELD-OUT.
    pub fn attempt(&mut self, heuristic: usize, delta: f64) -> Result<AttemptRecord, TrainError> {
        let mut candidate = self.state.weights.clone();
        candidate.0[heuristic] += delta;
        let obj = objective(self.train, &candidate, &self.cfg)?;
        let s = &mut self.state;
        s.attempted_steps += 1;
        let accepted = obj.improves_on(&s.train_objective, self.cfg.acceptance);
        let mut heldout_objective = None;
        if accepted {
            s.weights = candidate;
            s.train_objective = obj;
            s.accepted_steps += 1;
            let h = objective(self.heldout, &s.weights, &self.cfg)?.value;
            let last = *s.heldout_history.last().expect("initial held-out evaluation");
            s.heldout_history.push(h);
            heldout_objective = Some(h);
            if h > last {
                s.consecutive_strikes = 0;
            } else {
                s.consecutive_strikes += 1;
            }
            if h > s.best_heldout {
                s.best_heldout = h;
                s.best_weights = s.weights.clone();
            }
        }
        let record = AttemptRecord {
            step: s.attempted_steps,
            heuristic,
            delta,
            train_objective: obj.value,
            accepted,
            heldout_objective,
            strikes: s.consecutive_strikes,
            rng_word_pos: s.rng.get_word_pos(),
        };
        self.log.records.push(LogRecord::Attempt(record.clone()));
        Ok(record)
    }

    /// One random perturbation.
    pub fn step(&mut self) -> Result<AttemptRecord, TrainError> {
        let n = self.state.weights.len();
        let heuristic = self.state.rng.gen_range(0..n);
        let d = self.cfg.delta_scale;
        let delta = self.state.rng.gen_range(-d..=d);
        self.attempt(heuristic, delta)
    }

    /// Steps until a stop condition holds; returns the best-held-out weights.
    pub fn run(mut self) -> Result<(WeightVector, TrainLog), TrainError> {
        let reason = loop {
            if let Some(r) = self.finished() {
                break r;
            }
            self.step()?;
        };
        self.log.records.push(LogRecord::Result(ResultRecord {
            reason,
            attempted_steps: self.state.attempted_steps,
            accepted_steps: self.state.accepted_steps,
            best_heldout_objective: self.state.best_heldout,
            final_weights: self.state.best_weights.clone(),
        }));
        Ok((self.state.best_weights, self.log))
    }
}

/// Trains from `initial` weights on cached TRAIN and HELD-OUT sentences.
pub fn train(
    train: &[TrainingSentence],
    heldout: &[TrainingSentence],
    cfg: &TrainConfig,
    initial: &WeightVector,
) -> Result<(WeightVector, TrainLog), TrainError> {
    Trainer::new(train, heldout, cfg, initial)?.run()
}
