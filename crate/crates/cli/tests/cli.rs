use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tagrank::grammar::{load_grammar, FrequencyTable};
use tagrank::select::parse_tagged_line;
use tagrank::{parse_sentence, PipelineConfig};
use tempfile::TempDir;

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagrank")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn of_type<'a>(records: &'a [Value], t: &str) -> Vec<&'a Value> {
    records.iter().filter(|r| r["type"] == t).collect()
}

#[test]
fn check_valid_grammar() {
    let o = run(&["check", "--grammar", s(&sample("toy.gram")), "--freq", s(&sample("toy.freq"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("7 initial trees, 4 auxiliary trees, 5 families"), "{out}");
}

#[test]
fn check_rejects_auxiliary_without_foot() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("bad.gram");
    std::fs::write(&g, "tree Good initial = (NP N@)\ntree Footless auxiliary = (VP ADV@ NP^)\n").unwrap();
    let o = run(&["check", "--grammar", s(&g)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Footless"), "{}", stderr(&o));
}

#[test]
fn check_missing_file_names_path() {
    let o = run(&["check", "--grammar", "/nonexistent/toy.gram"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/toy.gram"), "{}", stderr(&o));
}

const TEN: &str = "the/D man/N saw/V the/D dog/N
the/D man/N saw/V the/D dog/N with/P the/D telescope/N
a/D dog/N left/V
the/D old/A man/N put/V the/D book/N on/P the/D table/N
man/N watched/V the/D dog/N in/P the/D park/N
the/D man/N saw/V the/D book/N of/P the/D dog/N
the/D dog/N left/V the/D park/N with/P the/D man/N
the/D big/A dog/N saw/V a/D man/N
saw/V the/D dog/N
the/D dog/N the/D man/N
";

#[test]
fn parse_reports_coverage_and_counts() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("ten.txt");
    std::fs::write(&input, TEN).unwrap();
    let report = dir.path().join("parse.jsonl");
    let o = run(&[
        "parse",
        "--grammar",
        s(&sample("toy.gram")),
        "--start",
        "S",
        "--input",
        s(&input),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("80.00%"), "{}", stdout(&o));

    // counts straight from the library pipeline
    let g = load_grammar(&sample("toy.gram")).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.parser.start = Some(["S".to_string()].into());
    let want: Vec<u64> = TEN
        .lines()
        .map(|l| {
            parse_sentence(&g, &FrequencyTable::new(), &parse_tagged_line(l).unwrap(), &cfg).unwrap().derivation_count
                as u64
        })
        .collect();
    let records = jsonl(&report);
    assert_eq!(records[0]["type"], "config");
    assert_eq!(records[0]["args"]["top_k"], 6);
    let got: Vec<u64> = of_type(&records, "sentence").iter().map(|r| r["derivation_count"].as_u64().unwrap()).collect();
    assert_eq!(got, want);
    assert_eq!(want.iter().filter(|&&c| c > 0).count(), 8);
    let summary = of_type(&records, "summary")[0];
    assert_eq!(summary["parsed_pct"], 80.0);
}

#[test]
fn parse_empty_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("empty.txt");
    std::fs::write(&input, "").unwrap();
    let report = dir.path().join("r.jsonl");
    let o = run(&["parse", "--grammar", s(&sample("toy.gram")), "--input", s(&input), "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&report);
    assert!(of_type(&records, "sentence").is_empty());
    assert_eq!(of_type(&records, "summary")[0]["sentences"], 0);
}

#[test]
fn unknown_word_is_a_coverage_failure() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "the/D zebra/N left/V\n").unwrap();
    let report = dir.path().join("r.jsonl");
    let o = run(&["parse", "--grammar", s(&sample("toy.gram")), "--input", s(&input), "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&report);
    let sentence = of_type(&records, "sentence")[0];
    assert_eq!(sentence["parsed"], false);
    assert_eq!(sentence["filter"]["positions"][1]["before"], 0);
    assert_eq!(of_type(&records, "summary")[0]["parsed"], 0);
}

fn eval_corpus(dir: &TempDir, parses: &str, gold: &str) -> (Output, PathBuf) {
    let p = dir.path().join("parses.txt");
    let g = dir.path().join("gold.txt");
    let r = dir.path().join("eval.jsonl");
    std::fs::write(&p, parses).unwrap();
    std::fs::write(&g, gold).unwrap();
    (run(&["eval", "--parses", s(&p), "--gold", s(&g), "--report", s(&r)]), r)
}

#[test]
fn eval_identical_parses_score_perfectly() {
    let dir = TempDir::new().unwrap();
    let trees = "(S (NP the man) (VP saw (NP the dog)))\n(S (NP a dog) (VP left (NP the park)))\n";
    let (o, r) = eval_corpus(&dir, trees, trees);
    assert!(o.status.success(), "{}", stderr(&o));
    let corpus = of_type(&jsonl(&r), "corpus")[0].clone();
    assert_eq!(corpus["zero_crossing_pct"], 100.0);
    assert_eq!(corpus["crossing_avg"], 0.0);
    assert_eq!(corpus["recall_pct"], 100.0);
    assert_eq!(corpus["precision_pct"], 100.0);
}

#[test]
fn eval_single_crossing_pair() {
    let dir = TempDir::new().unwrap();
    let (o, r) = eval_corpus(&dir, "(X (X a b) c)\n", "(X a (X b c))\n");
    assert!(o.status.success(), "{}", stderr(&o));
    let corpus = of_type(&jsonl(&r), "corpus")[0].clone();
    assert_eq!(corpus["zero_crossing_pct"], 0.0);
    assert_eq!(corpus["crossing_avg"], 1.0);
    assert!(stdout(&o).contains("Zero Crossing Bracket %"));
}

#[test]
fn eval_misaligned_files_fail() {
    let dir = TempDir::new().unwrap();
    let (o, _) = eval_corpus(&dir, "(X a b)\n(X c d)\n", "(X a b)\n");
    assert!(!o.status.success());
    let (o, _) = eval_corpus(&dir, "(X a b)\n(X c d)\n", "(X a b)\n(X c e)\n");
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sentence 2"), "{}", stderr(&o));
}

#[test]
fn eval_reads_parse_reports() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("parse.jsonl");
    let o = run(&[
        "parse",
        "--grammar",
        s(&sample("toy.gram")),
        "--start",
        "S",
        "--input",
        s(&sample("sentences.txt")),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "eval",
        "--parses",
        s(&report),
        "--gold",
        s(&sample("gold.txt")),
        "--top-k",
        "1",
        "--aggregation",
        "first",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 sentences without parses"), "{}", stdout(&o));
}

#[test]
fn split_sizes() {
    let o = run(&["split", "--size", "931", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().split_whitespace().eq(["626", "205", "100", "4"]));
}

fn train_args(extra: &[&str], dir: &Path, gold: &Path) -> Vec<String> {
    let mut args: Vec<String> = [
        "train",
        "--grammar",
        s(&sample("toy.gram")),
        "--start",
        "S",
        "--corpus",
        s(&sample("sentences.txt")),
        "--gold",
        s(gold),
        "--proportions",
        "7,3,3",
        "--top-k",
        "1",
        "--aggregation",
        "first",
        "--report",
        s(&dir.join("report.jsonl")),
        "--log",
        s(&dir.join("log.jsonl")),
        "--weights-out",
        s(&dir.join("weights.txt")),
    ]
    .iter()
    .map(|a| a.to_string())
    .collect();
    args.extend(extra.iter().map(|a| a.to_string()));
    args
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

fn objective(scores: &Value) -> f64 {
    (scores["zero_crossing_pct"].as_f64().unwrap()
        + scores["recall_pct"].as_f64().unwrap()
        + scores["precision_pct"].as_f64().unwrap())
        / 3.0
}

#[test]
fn train_report_orders_experiments() {
    let dir = TempDir::new().unwrap();
    let o = run_owned(&train_args(&["--seed", "2", "--max-iterations", "300"], dir.path(), &sample("gold.txt")));
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&dir.path().join("report.jsonl"));
    for group in ["HELD-OUT", "TEST"] {
        let get = |e: &str| {
            let r =
                records.iter().find(|r| r["type"] == "scores" && r["group"] == group && r["experiment"] == e).unwrap();
            objective(&r["scores"])
        };
        let (none, equal, trained) = (get("No heuristics"), get("No preference"), get("Preferences Trained"));
        assert!(equal >= none, "{group}: {equal} < {none}");
        if group == "HELD-OUT" {
            assert!(trained >= equal, "{group}: {trained} < {equal}");
        }
    }
    let weights = std::fs::read_to_string(dir.path().join("weights.txt")).unwrap();
    assert_eq!(weights.lines().count(), 11);
    assert!(stdout(&o).contains("Preferences Trained"));
}

#[test]
fn train_is_deterministic_and_resumable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(run_owned(&train_args(&["--seed", "9", "--max-iterations", "300"], a.path(), &sample("gold.txt")))
        .status
        .success());
    assert!(run_owned(&train_args(&["--seed", "9", "--max-iterations", "300"], b.path(), &sample("gold.txt")))
        .status
        .success());
    let log = std::fs::read_to_string(a.path().join("log.jsonl")).unwrap();
    assert_eq!(log, std::fs::read_to_string(b.path().join("log.jsonl")).unwrap());

    let c = TempDir::new().unwrap();
    let prefix = c.path().join("prefix.jsonl");
    std::fs::write(&prefix, log.lines().take(120).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let o = run_owned(&train_args(&["--resume", s(&prefix)], c.path(), &sample("gold.txt")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(c.path().join("log.jsonl")).unwrap(), log);

    // the split comes from the log even when other proportions are given
    let d = TempDir::new().unwrap();
    let mut args = train_args(&["--resume", s(&prefix)], d.path(), &sample("gold.txt"));
    let at = args.iter().position(|x| x == "7,3,3").unwrap();
    args[at] = "5,5,3".into();
    let o = run_owned(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(d.path().join("log.jsonl")).unwrap(), log);
}

#[test]
fn strike_limit_one_stops_after_first_accepted_step() {
    let dir = TempDir::new().unwrap();
    // PP height starts low enough for one step to flip attachments on TRAIN
    let weights = dir.path().join("start.txt");
    let names = tagrank::heuristics::HeuristicRegistry::default_registry();
    let w: String = names
        .names()
        .iter()
        .map(|n| format!("{n}\t{}\n", if *n == "pp_attachment_height" { 0.2 } else { 1.0 }))
        .collect();
    std::fs::write(&weights, w).unwrap();
    // TRAIN golds adjoin their last PP at VP; HELD-OUT sentences have one parse each
    let gold = dir.path().join("gold.txt");
    let mut lines: Vec<String> =
        std::fs::read_to_string(sample("gold.txt")).unwrap().lines().map(String::from).collect();
    lines[1] = "(S (NP the man) (VP (VP saw (NP the dog)) (PP with (NP the telescope))))".into();
    lines[4] = "(S (NP the man) (VP (VP watched (NP the dog)) (PP in (NP the park))))".into();
    lines[8] = "(S (NP the man) (VP (VP put (NP the telescope) (PP on (NP the table))) (PP in (NP the park))))".into();
    std::fs::write(&gold, lines.join("\n") + "\n").unwrap();
    let split = dir.path().join("split.json");
    std::fs::write(&split, r#"{"train_ids":[1,4,8],"heldout_ids":[0,2,7],"test_ids":[3],"seed":0}"#).unwrap();
    let args = train_args(
        &[
            "--weights",
            s(&weights),
            "--split",
            s(&split),
            "--strike-limit",
            "1",
            "--max-iterations",
            "5000",
            "--seed",
            "3",
        ],
        dir.path(),
        &gold,
    );
    let o = run_owned(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = jsonl(&dir.path().join("log.jsonl"));
    let attempts = of_type(&log, "attempt");
    let accepted: Vec<_> = attempts.iter().filter(|a| a["accepted"] == true).collect();
    assert_eq!(accepted.len(), 1);
    assert_eq!(attempts.last().unwrap()["accepted"], true);
    assert_eq!(accepted[0]["strikes"], 1);
    assert_eq!(of_type(&log, "result")[0]["reason"], "strikes");
}
