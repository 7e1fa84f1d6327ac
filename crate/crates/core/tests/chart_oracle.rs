mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{exhaustive_run, grammar, WordClasses};
use tagrank::chart::ParserConfig;

fn start(labels: &[&str]) -> Option<BTreeSet<String>> {
    Some(labels.iter().map(|s| s.to_string()).collect())
}

fn check(name: &str, cfg: ParserConfig, max_len: usize) {
    let g = grammar(name);
    let classes = WordClasses::of(&g);
    let t = Instant::now();
    let r = exhaustive_run(&g, &classes, &cfg, max_len, true);
    eprintln!("{name} ≤{max_len}: {} parsed, {} derivations in {:?}", r.parsed, r.derivations, t.elapsed());
    assert_eq!(r.oracle_mismatch, None);
    assert_eq!(r.filter_mismatch, None);
    assert!(r.parsed > 0);
}

#[test]
fn clauses_match_generator() {
    check("clauses.gram", ParserConfig::default(), 5);
}

#[test]
fn pp_match_generator() {
    check("pp.gram", ParserConfig { start: start(&["S"]), ..ParserConfig::default() }, 5);
}

#[test]
fn complements_match_generator() {
    check("comp.gram", ParserConfig { start: start(&["S"]), ..ParserConfig::default() }, 5);
}

#[test]
fn stack_limit_is_respected() {
    for limit in 1..=3 {
        check(
            "comp.gram",
            ParserConfig { start: start(&["S"]), max_adjunction_stack: limit, check_features: false },
            5,
        );
    }
}

#[test]
fn figure_grammar_matches_generator() {
    check("figure.gram", ParserConfig::default(), 5);
}
