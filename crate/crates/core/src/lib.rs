//! Lexicalized tree adjoining grammar parsing with heuristic parse ranking.
//!
//! The pipeline runs per sentence: POS-driven tree selection, candidate
//! filtering, chart parsing, derived-tree construction and ranking. The
//! [`parseval`] and [`trainer`] modules score ranked parses against a gold
//! treebank and fit the ranking weights.

pub mod chart;
pub mod derive;
pub mod filter;
pub mod grammar;
pub mod heuristics;
pub mod parseval;
pub mod select;
pub mod trainer;
pub mod tree;

use thiserror::Error;

use chart::{DerivationNode, ParseError, ParseForest, ParserConfig};
use derive::{DeriveError, DerivedTree};
use filter::{FilterReport, PositionReport};
use grammar::{FrequencyTable, Grammar};
use select::{SelectOptions, TaggedWord, TreeAssignment};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub select: SelectOptions,
    /// Top-k frequency filtering with fallback; `None` applies only the
    /// structural filter.
    pub filter_k: Option<usize>,
    pub parser: ParserConfig,
    /// Cap on enumerated derivations per sentence.
    pub max_parses: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            select: SelectOptions::default(),
            filter_k: Some(3),
            parser: ParserConfig::default(),
            max_parses: None,
        }
    }
}

/// A sentence's parses in canonical enumeration order.
#[derive(Debug, Clone)]
pub struct SentenceParses {
    pub words: Vec<String>,
    pub report: FilterReport,
    /// Total derivations in the forest, which may exceed `parses.len()`.
    pub derivation_count: u128,
    pub parses: Vec<(DerivationNode, DerivedTree)>,
}

/// Selects, filters, parses and derives one tagged sentence.
pub fn parse_sentence(
    grammar: &Grammar,
    freq: &FrequencyTable,
    sentence: &[TaggedWord],
    cfg: &PipelineConfig,
) -> Result<SentenceParses, PipelineError> {
    let words: Vec<String> = sentence.iter().map(|w| w.surface.clone()).collect();
    let assignment = select::select_trees_with(grammar, sentence, cfg.select);
    let run = |a: &TreeAssignment| chart::parse(grammar, a, &cfg.parser);
    let (forest, report) = match cfg.filter_k {
        Some(k) => filter::filter_with_fallback(grammar, &assignment, freq, k, run, ParseForest::is_empty)?,
        None => {
            let s = filter::structural_filter(grammar, &assignment);
            let report = FilterReport {
                positions: assignment
                    .positions
                    .iter()
                    .zip(&s.positions)
                    .map(|(b, a)| PositionReport {
                        before: b.len(),
                        removed_by_structure: b.len() - a.len(),
                        removed_by_frequency: 0,
                        survivors: a.len(),
                    })
                    .collect(),
                fallback_triggered: false,
            };
            (run(&s)?, report)
        }
    };
    let parses = forest
        .enumerate(cfg.max_parses)
        .into_iter()
        .map(|d| {
            let t = derive::derive(grammar, &d, &words, cfg.parser.check_features)?;
            Ok((d, t))
        })
        .collect::<Result<Vec<_>, DeriveError>>()?;
    Ok(SentenceParses { words, report, derivation_count: forest.derivation_count(), parses })
}
