mod common;

use common::SyntheticCorpus;
use tagrank::heuristics::WeightVector;
use tagrank::parseval::{Aggregation, EvalConfig};
use tagrank::trainer::{objective, split, train, LogRecord, StopReason, TrainConfig, TrainLog, Trainer};

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig { top_k: 1, aggregation: Aggregation::First, max_iterations: 400, seed, ..TrainConfig::default() }
}

struct Setup {
    corpus: SyntheticCorpus,
    train: Vec<tagrank::trainer::TrainingSentence>,
    heldout: Vec<tagrank::trainer::TrainingSentence>,
    test_ids: Vec<usize>,
}

fn setup() -> Setup {
    let corpus = SyntheticCorpus::generate(4, 240, 6, 3);
    let sp = split(240, [120, 80, 40], 2).unwrap();
    let eval = EvalConfig::default();
    let train = corpus.training_sentences(&eval, &sp.train_ids);
    let heldout = corpus.training_sentences(&eval, &sp.heldout_ids);
    Setup { corpus, train, heldout, test_ids: sp.test_ids }
}

#[test]
fn recovers_a_hidden_preference_on_unseen_sentences() {
    let s = setup();
    let start = WeightVector::uniform(6, 1.0);
    let (w, _) = train(&s.train, &s.heldout, &cfg(1), &start).unwrap();
    let (before, after) = (s.corpus.agreement(&start, &s.test_ids), s.corpus.agreement(&w, &s.test_ids));
    assert!(after > before, "{before} -> {after}");
}

#[test]
fn returns_the_best_held_out_checkpoint() {
    let s = setup();
    let c = cfg(7);
    let (w, log) = train(&s.train, &s.heldout, &c, &WeightVector::uniform(6, 1.0)).unwrap();
    let header = log.header().unwrap();
    let seen = log.attempts().filter_map(|a| a.heldout_objective).fold(header.initial_heldout_objective, f64::max);
    let result = log.result().unwrap();
    assert_eq!(result.best_heldout_objective, seen);
    assert_eq!(result.final_weights, w);
    assert_eq!(objective(&s.heldout, &w, &c).unwrap().value, seen);
}

#[test]
fn strikes_follow_the_previous_evaluation() {
    let s = setup();
    let (_, log) = train(&s.train, &s.heldout, &cfg(3), &WeightVector::uniform(6, 1.0)).unwrap();
    let mut last = log.header().unwrap().initial_heldout_objective;
    let mut strikes = 0;
    for a in log.attempts() {
        if let Some(h) = a.heldout_objective {
            strikes = if h > last { 0 } else { strikes + 1 };
            last = h;
        }
        assert_eq!(a.strikes, strikes, "step {}", a.step);
    }
    if log.result().unwrap().reason == StopReason::Strikes {
        assert_eq!(strikes, 3);
    }
}

#[test]
fn resuming_from_any_prefix_reproduces_the_run() {
    let s = setup();
    let (w, log) = train(&s.train, &s.heldout, &cfg(5), &WeightVector::uniform(6, 1.0)).unwrap();
    let text = log.to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    let attempts = lines.len() - 2;
    for cut in [0, 1, attempts / 3, attempts / 2, attempts] {
        let prefix = TrainLog::parse_jsonl(&(lines[..1 + cut].join("\n") + "\n")).unwrap();
        let (rw, rlog) = Trainer::resume(&s.train, &s.heldout, &prefix).unwrap().run().unwrap();
        assert_eq!(rw, w, "cut {cut}");
        assert_eq!(rlog.to_jsonl(), text, "cut {cut}");
    }
    assert!(matches!(log.records.last(), Some(LogRecord::Result(_))));
}
