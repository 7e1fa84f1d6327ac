//! `tagrank`: grammar checking, parsing, ranking, evaluation, corpus
//! splitting and weight training from the command line.

mod io;
mod table;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use tagrank::chart::ParserConfig;
use tagrank::grammar::{load_grammar, FrequencyTable, Grammar, TreeKind};
use tagrank::heuristics::{rank, HeuristicRegistry, RankedParse, WeightVector};
use tagrank::parseval::{score_corpus, Aggregation, CorpusScores, EvalConfig, RecallMode};
use tagrank::select::{SelectOptions, TaggedWord};
use tagrank::trainer::{self, corpus_scores, Acceptance, SplitSpec, TrainConfig, TrainLog, Trainer, TrainingSentence};
use tagrank::tree::PennTree;
use tagrank::{parse_sentence, PipelineConfig, SentenceParses};

use io::Report;

// stdout writes ignore errors so that a closed pipe (`| head`) is not a panic
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! say_raw {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "tagrank", version, about = "LTAG parsing with heuristic parse ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a grammar, and optionally a frequency table and registry.
    Check(CheckArgs),
    /// Parse tagged sentences; report coverage and the top-ranked parses.
    Parse(ParseArgs),
    /// Parse tagged sentences and list every ranked parse with its heuristic counts.
    Rank(ParseArgs),
    /// Score ranked parses against a gold treebank.
    Eval(EvalArgs),
    /// Split a corpus into TRAIN, HELD-OUT and TEST.
    Split(SplitArgs),
    /// Train heuristic weights against a gold treebank.
    Train(TrainArgs),
}

#[derive(Args, Serialize)]
struct CheckArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    freq: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct GrammarArgs {
    #[arg(long)]
    grammar: PathBuf,
    /// Tree frequency table (`tree<TAB>probability`).
    #[arg(long)]
    freq: Option<PathBuf>,
    /// Candidates kept per word by frequency; 0 disables frequency filtering.
    #[arg(long, default_value_t = 3)]
    filter_k: usize,
    /// Comma-separated root categories a complete parse may have.
    #[arg(long, value_delimiter = ',')]
    start: Vec<String>,
    #[arg(long, default_value_t = 3)]
    max_adjunction_stack: usize,
    #[arg(long)]
    check_features: bool,
    /// Give unknown words every tree anchored by one of their tags.
    #[arg(long)]
    open_class_fallback: bool,
    /// Cap on enumerated parses per sentence.
    #[arg(long)]
    max_parses: Option<usize>,
}

impl GrammarArgs {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            select: SelectOptions { open_class_fallback: self.open_class_fallback },
            filter_k: (self.filter_k > 0).then_some(self.filter_k),
            parser: ParserConfig {
                start: (!self.start.is_empty()).then(|| self.start.iter().cloned().collect()),
                max_adjunction_stack: self.max_adjunction_stack,
                check_features: self.check_features,
            },
            max_parses: self.max_parses,
        }
    }

    fn load(&self) -> Result<(Grammar, FrequencyTable)> {
        let g = load_grammar(&self.grammar).with_context(|| format!("grammar {}", self.grammar.display()))?;
        let freq = match &self.freq {
            Some(p) => FrequencyTable::load(p).with_context(|| format!("frequency table {}", p.display()))?,
            None => FrequencyTable::new(),
        };
        Ok((g, freq))
    }
}

#[derive(Args, Serialize, Clone)]
struct WeightArgs {
    /// Heuristic registry; the built-in registry by default.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Weights file (`name<TAB>weight`); all ones by default.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl WeightArgs {
    fn load(&self) -> Result<(HeuristicRegistry, WeightVector)> {
        let registry = match &self.registry {
            Some(p) => HeuristicRegistry::load(p).with_context(|| format!("registry {}", p.display()))?,
            None => HeuristicRegistry::default_registry(),
        };
        let weights = match &self.weights {
            Some(p) => WeightVector::load(p, &registry).with_context(|| format!("weights {}", p.display()))?,
            None => WeightVector::uniform(registry.len(), 1.0),
        };
        Ok((registry, weights))
    }
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AggregationArg {
    First,
    #[value(name = "best_of_k")]
    BestOfK,
    #[value(name = "mean_of_k")]
    MeanOfK,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::First => Aggregation::First,
            AggregationArg::BestOfK => Aggregation::BestOfK,
            AggregationArg::MeanOfK => Aggregation::MeanOfK,
        }
    }
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RecallModeArg {
    Standard,
    #[value(name = "paper_literal")]
    PaperLiteral,
}

#[derive(Args, Serialize, Clone)]
struct ScoringArgs {
    /// Ranked parses scored per sentence.
    #[arg(long, default_value_t = 6)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = AggregationArg::MeanOfK)]
    aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = RecallModeArg::Standard)]
    recall_mode: RecallModeArg,
    /// Comma-separated categories whose internal structure is removed before scoring.
    #[arg(long, value_delimiter = ',')]
    flatten: Vec<String>,
}

impl ScoringArgs {
    fn eval_config(&self) -> Result<EvalConfig> {
        ensure!(self.top_k >= 1, "--top-k must be at least 1");
        Ok(EvalConfig {
            top_k: self.top_k,
            aggregation: self.aggregation.into(),
            recall_mode: match self.recall_mode {
                RecallModeArg::Standard => RecallMode::Standard,
                RecallModeArg::PaperLiteral => RecallMode::PaperLiteral,
            },
            flatten: self.flatten.iter().cloned().collect::<BTreeSet<_>>(),
            ..EvalConfig::default()
        })
    }
}

#[derive(Args, Serialize)]
struct ParseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    #[serde(flatten)]
    weights: WeightArgs,
    /// Tagged sentences, one per line (`word/TAG word/TAG1|TAG2 ...`).
    #[arg(long)]
    input: PathBuf,
    /// Ranked parses listed per sentence.
    #[arg(long, default_value_t = 6)]
    top_k: usize,
    /// JSONL report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Ranked parses: a `parse` report, or one tab-separated line per sentence.
    #[arg(long)]
    parses: PathBuf,
    /// Gold trees, one per line.
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Number of items to split.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    size: Option<usize>,
    /// Split the sentences of this tagged corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// TRAIN,HELD-OUT,TEST proportions.
    #[arg(long, value_parser = parse_proportions, default_value = "626,205,100")]
    proportions: [usize; 3],
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the split as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AcceptanceArg {
    #[value(name = "mean_of_three")]
    MeanOfThree,
    #[value(name = "all_three")]
    AllThree,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    #[serde(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    #[serde(flatten)]
    scoring: ScoringArgs,
    /// Tagged sentences, one per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Gold trees aligned with the corpus.
    #[arg(long)]
    gold: PathBuf,
    /// A split written by `tagrank split`; otherwise `--proportions` and `--split-seed` are used.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_parser = parse_proportions, default_value = "626,205,100")]
    proportions: [usize; 3],
    /// Split seed; defaults to `--seed`.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Training RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    delta_scale: f64,
    #[arg(long, default_value_t = 3)]
    strike_limit: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value_t = AcceptanceArg::MeanOfThree)]
    acceptance: AcceptanceArg,
    /// Continue the run recorded in this training log.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Where to write the trained weights.
    #[arg(long)]
    weights_out: Option<PathBuf>,
    /// Where to write the training log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => check(a),
        Command::Parse(a) => parse(a, false),
        Command::Rank(a) => parse(a, true),
        Command::Eval(a) => eval(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check(a: &CheckArgs) -> Result<()> {
    let g = load_grammar(&a.grammar).with_context(|| format!("grammar {}", a.grammar.display()))?;
    let initial = g.trees().filter(|t| t.kind == TreeKind::Initial).count();
    let auxiliary = g.trees().count() - initial;
    let entries = g.lex_entries().count();
    let words: BTreeSet<String> = g.lex_entries().map(|e| e.lemma).collect();
    say!(
        "{}: {initial} initial trees, {auxiliary} auxiliary trees, {} families, {entries} lexicon entries, {} words",
        a.grammar.display(),
        g.families().count(),
        words.len()
    );
    if let Some(p) = &a.freq {
        let freq = FrequencyTable::load(p).with_context(|| format!("frequency table {}", p.display()))?;
        let unknown: Vec<&str> = freq.iter().map(|(t, _)| t).filter(|t| g.tree(t).is_none()).collect();
        say!("{}: {} trees", p.display(), freq.len());
        if !unknown.is_empty() {
            say!("warning: trees not in the grammar: {}", unknown.join(", "));
        }
    }
    if let Some(p) = &a.registry {
        let r = HeuristicRegistry::load(p).with_context(|| format!("registry {}", p.display()))?;
        say!("{}: {} heuristics", p.display(), r.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct ParseRecord {
    tree: String,
    rank: usize,
    index: usize,
    score: f64,
    /// Non-zero heuristic counts by name.
    heuristics: serde_json::Map<String, serde_json::Value>,
}

fn parse_records(
    out: &SentenceParses,
    ranked: &[RankedParse],
    registry: &HeuristicRegistry,
    k: usize,
) -> Vec<ParseRecord> {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, p)| ParseRecord {
            tree: out.parses[p.index].1.to_penn().to_string(),
            rank: r + 1,
            index: p.index,
            score: p.score,
            heuristics: registry
                .names()
                .iter()
                .zip(&p.vector.0)
                .filter(|(_, v)| **v != 0.0)
                .map(|(n, v)| (n.to_string(), json!(v)))
                .collect(),
        })
        .collect()
}

fn sentence_text(s: &[TaggedWord]) -> String {
    s.iter().map(|w| w.surface.as_str()).collect::<Vec<_>>().join(" ")
}

fn parse(a: &ParseArgs, verbose: bool) -> Result<()> {
    ensure!(a.top_k >= 1, "--top-k must be at least 1");
    let (g, freq) = a.grammar.load()?;
    let (registry, weights) = a.weights.load()?;
    let sentences = io::read_tagged(&a.input)?;
    let cfg = a.grammar.pipeline();
    let mut report = Report::create(a.report.as_deref())?;
    report.record("config", &json!({ "command": if verbose { "rank" } else { "parse" }, "args": a, "heuristics": registry.names(), "weights": weights }))?;
    let (mut parsed, mut parse_total) = (0usize, 0u128);
    for (index, s) in sentences.iter().enumerate() {
        let out = parse_sentence(&g, &freq, s, &cfg).with_context(|| format!("sentence {}", index + 1))?;
        let ranked = rank(&out.parses, &registry, &g, &weights)?;
        if !out.parses.is_empty() {
            parsed += 1;
            parse_total += out.derivation_count;
        }
        let k = if verbose { ranked.len() } else { a.top_k };
        let records = parse_records(&out, &ranked, &registry, k);
        if verbose {
            say!("{}: {}", index + 1, sentence_text(s));
            if records.is_empty() {
                say!("  no parse");
            }
            for r in &records {
                let counts: Vec<String> =
                    r.heuristics.iter().map(|(n, v)| format!("{n}={}", v.as_f64().unwrap_or_default())).collect();
                say!("  #{} score {} [{}] {}", r.rank, r.score, counts.join(" "), r.tree);
            }
        }
        report.record(
            "sentence",
            &json!({
                "index": index,
                "words": out.words,
                "parsed": !out.parses.is_empty(),
                "derivation_count": out.derivation_count,
                "filter": out.report,
                "parses": records,
            }),
        )?;
    }
    let n = sentences.len();
    let pct = if n == 0 { 0.0 } else { 100.0 * parsed as f64 / n as f64 };
    let avg = if parsed == 0 { 0.0 } else { parse_total as f64 / parsed as f64 };
    report.record("summary", &json!({ "sentences": n, "parsed": parsed, "parsed_pct": pct, "avg_parses": avg }))?;
    report.finish()?;
    let name = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    say_raw!(
        "{}",
        table::render(
            &["Corpus", "# of Sentences", "% Parsed", "Av. # of Parses/Sent"],
            &[vec![name, n.to_string(), format!("{pct:.2}%"), format!("{avg:.2}")]],
        )
    );
    Ok(())
}

/// Checks that each sentence's candidates cover the gold words.
fn check_alignment(candidates: &[Vec<PennTree>], gold: &[PennTree]) -> Result<()> {
    ensure!(candidates.len() == gold.len(), "{} candidate sentences but {} gold trees", candidates.len(), gold.len());
    for (i, (c, g)) in candidates.iter().zip(gold).enumerate() {
        let want = g.words();
        if let Some(t) = c.iter().find(|t| t.words() != want) {
            bail!(
                "sentence {}: candidate words `{}` do not match gold `{}`",
                i + 1,
                t.words().join(" "),
                want.join(" ")
            );
        }
    }
    Ok(())
}

fn scores_row(label: &str, c: &CorpusScores) -> Vec<String> {
    vec![
        label.to_string(),
        c.sentences.to_string(),
        format!("{:.2}", c.zero_crossing_pct),
        format!("{:.2}", c.crossing_avg),
        format!("{:.2}", c.recall_pct),
        format!("{:.2}", c.precision_pct),
    ]
}

const SCORE_HEADERS: [&str; 6] =
    ["", "# of sentences", "Zero Crossing Bracket %", "Crossing Bracket Average", "Recall %", "Precision %"];

fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.scoring.eval_config()?;
    let candidates = io::read_candidates(&a.parses)?;
    let gold = io::read_trees(&a.gold)?;
    check_alignment(&candidates, &gold)?;
    let pairs: Vec<(Vec<PennTree>, PennTree)> = candidates.into_iter().zip(gold).collect();
    let (corpus, per) = score_corpus(&pairs, &cfg)?;
    let mut report = Report::create(a.report.as_deref())?;
    report.record("config", &json!({ "command": "eval", "args": a }))?;
    for (index, s) in per.iter().enumerate() {
        report.record("sentence", &json!({ "index": index, "scores": s }))?;
    }
    report.record("corpus", &corpus)?;
    report.finish()?;
    say_raw!("{}", table::render(&SCORE_HEADERS, &[scores_row("Parses", &corpus)]));
    if corpus.coverage_failures > 0 {
        say!("{} sentences without parses", corpus.coverage_failures);
    }
    Ok(())
}

fn parse_proportions(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{p}` is not a count")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected TRAIN,HELD-OUT,TEST".to_string())
}

fn split(a: &SplitArgs) -> Result<()> {
    let n = match (&a.corpus, a.size) {
        (Some(p), _) => io::read_tagged(p)?.len(),
        (None, Some(n)) => n,
        (None, None) => bail!("give --size or --corpus"),
    };
    let s = trainer::split(n, a.proportions, a.seed)?;
    if let Some(p) = &a.output {
        io::write(p, &(serde_json::to_string_pretty(&s)? + "\n"))?;
    }
    let (tr, h, te) = s.sizes();
    say_raw!(
        "{}",
        table::render(
            &["TRAIN", "HELD-OUT", "TEST", "seed"],
            &[vec![tr.to_string(), h.to_string(), te.to_string(), a.seed.to_string()]]
        )
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let (g, freq) = a.grammar.load()?;
    let (registry, initial) = a.weights.load()?;
    let eval_cfg = a.scoring.eval_config()?;
    let corpus = io::read_tagged(&a.corpus)?;
    let gold = io::read_trees(&a.gold)?;
    ensure!(corpus.len() == gold.len(), "{} corpus sentences but {} gold trees", corpus.len(), gold.len());
    let resumed = match &a.resume {
        Some(p) => Some(TrainLog::parse_jsonl(&io::read(p)?).with_context(|| format!("training log {}", p.display()))?),
        None => None,
    };
    let logged = resumed.as_ref().and_then(TrainLog::header);
    let spec: SplitSpec = match (&a.split, logged) {
        (Some(p), _) => serde_json::from_str(&io::read(p)?).with_context(|| format!("split {}", p.display()))?,
        // a resumed run keeps its logged sets; the rest of the corpus is TEST
        (None, Some(h)) => SplitSpec {
            train_ids: h.train_ids.clone(),
            heldout_ids: h.heldout_ids.clone(),
            test_ids: (0..corpus.len()).filter(|i| !h.train_ids.contains(i) && !h.heldout_ids.contains(i)).collect(),
            seed: a.split_seed.unwrap_or(h.config.seed),
        },
        (None, None) => trainer::split(corpus.len(), a.proportions, a.split_seed.unwrap_or(a.seed))?,
    };
    let ids: Vec<usize> = spec.train_ids.iter().chain(&spec.heldout_ids).chain(&spec.test_ids).copied().collect();
    ensure!(ids.iter().all(|&i| i < corpus.len()), "split refers to sentences beyond the corpus");

    // forests are parsed and scored once; training only re-ranks
    let cfg = a.grammar.pipeline();
    let mut sentences: Vec<Option<TrainingSentence>> = vec![None; corpus.len()];
    for &id in &ids {
        let out = parse_sentence(&g, &freq, &corpus[id], &cfg).with_context(|| format!("sentence {}", id + 1))?;
        let vectors = out.parses.iter().map(|(d, t)| tagrank::heuristics::extract(&registry, &g, d, t)).collect();
        let scores = out
            .parses
            .iter()
            .map(|(_, t)| eval_cfg.score_parse(&t.to_penn(), &gold[id]))
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("sentence {}", id + 1))?;
        sentences[id] = Some(TrainingSentence { id, vectors, scores });
    }
    let pick = |set: &[usize]| -> Vec<TrainingSentence> {
        set.iter().map(|&i| sentences[i].clone().expect("parsed")).collect()
    };
    let (train_set, heldout, test) = (pick(&spec.train_ids), pick(&spec.heldout_ids), pick(&spec.test_ids));

    let trainer = match &resumed {
        Some(log) => Trainer::resume(&train_set, &heldout, log)?,
        None => {
            let tc = TrainConfig {
                top_k: a.scoring.top_k,
                aggregation: a.scoring.aggregation.into(),
                delta_scale: a.delta_scale,
                strike_limit: a.strike_limit,
                max_iterations: a.max_iterations,
                seed: a.seed,
                acceptance: match a.acceptance {
                    AcceptanceArg::MeanOfThree => Acceptance::MeanOfThree,
                    AcceptanceArg::AllThree => Acceptance::AllThree,
                },
            };
            Trainer::new(&train_set, &heldout, &tc, &initial)?
        }
    };
    let tc = trainer.config().clone();
    let start = trainer.log.header().map(|h| h.initial_weights.clone()).unwrap_or(initial);
    let (trained, log) = trainer.run()?;
    if let Some(p) = &a.log {
        io::write(p, &log.to_jsonl())?;
    }
    if let Some(p) = &a.weights_out {
        io::write(p, &trained.serialize(&registry))?;
    }

    let zero = WeightVector::uniform(registry.len(), 0.0);
    let rows_for = |set: &[TrainingSentence]| -> Result<Vec<(&str, CorpusScores)>> {
        Ok(vec![
            ("No heuristics", corpus_scores(set, &zero, tc.top_k, tc.aggregation)?),
            ("No preference", corpus_scores(set, &start, tc.top_k, tc.aggregation)?),
            ("Preferences Trained", corpus_scores(set, &trained, tc.top_k, tc.aggregation)?),
        ])
    };
    let mut report = Report::create(a.report.as_deref())?;
    report.record(
        "config",
        &json!({ "command": "train", "args": a, "train_config": tc, "split": spec, "heuristics": registry.names() }),
    )?;
    let mut rows = Vec::new();
    for (group, set) in [("HELD-OUT", &heldout), ("TEST", &test)] {
        if set.is_empty() {
            continue;
        }
        for (experiment, scores) in rows_for(set)? {
            report.record("scores", &json!({ "group": group, "experiment": experiment, "scores": scores }))?;
            let mut row = scores_row(experiment, &scores);
            row.insert(0, group.to_string());
            rows.push(row);
        }
    }
    let result = log.result().expect("finished run");
    report.record("result", &json!({ "weights": trained, "result": result }))?;
    report.finish()?;

    let mut headers = vec!["Sentence Group", "Experiment"];
    headers.extend(&SCORE_HEADERS[1..]);
    say_raw!("{}", table::render(&headers, &rows));
    say!(
        "{} attempted steps, {} accepted, stopped by {:?}; best HELD-OUT objective {:.2}",
        result.attempted_steps,
        result.accepted_steps,
        result.reason,
        result.best_heldout_objective
    );
    for (n, w) in registry.names().iter().zip(&trained.0) {
        say!("{n}\t{w}");
    }
    Ok(())
}
