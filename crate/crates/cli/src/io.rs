//! Input files and report output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use tagrank::select::{parse_tagged_line, TaggedWord};
use tagrank::tree::PennTree;

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// One tagged sentence per line; blank lines and `#` comments are skipped.
pub fn read_tagged(path: &Path) -> Result<Vec<Vec<TaggedWord>>> {
    let text = read(path)?;
    content_lines(&text).map(|(n, l)| parse_tagged_line(l).with_context(|| format!("{}:{n}", path.display()))).collect()
}

/// One bracketed tree per line.
pub fn read_trees(path: &Path) -> Result<Vec<PennTree>> {
    let text = read(path)?;
    content_lines(&text).map(|(n, l)| PennTree::parse(l).with_context(|| format!("{}:{n}", path.display()))).collect()
}

/// Ranked candidates per sentence, read from a `parse`/`rank` report or
/// from text with one sentence per line, trees separated by tabs and `-`
/// marking a sentence without parses.
pub fn read_candidates(path: &Path) -> Result<Vec<Vec<PennTree>>> {
    let text = read(path)?;
    let mut out = Vec::new();
    let json = text.trim_start().starts_with('{');
    for (n, line) in content_lines(&text) {
        let at = || format!("{}:{n}", path.display());
        if json {
            let v: Value = serde_json::from_str(line).with_context(at)?;
            if v["type"] != "sentence" {
                continue;
            }
            let Some(parses) = v["parses"].as_array() else { bail!("{}: sentence record without parses", at()) };
            let trees = parses
                .iter()
                .map(|p| {
                    let s = p["tree"].as_str().with_context(|| format!("{}: parse without tree", at()))?;
                    PennTree::parse(s).with_context(at)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(trees);
        } else if line == "-" {
            out.push(Vec::new());
        } else {
            out.push(line.split('\t').map(|s| PennTree::parse(s.trim()).with_context(at)).collect::<Result<_>>()?);
        }
    }
    Ok(out)
}

/// JSONL report sink; a no-op without a path.
pub struct Report {
    out: Option<(PathBuf, BufWriter<File>)>,
}

impl Report {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
                Some((p.to_path_buf(), BufWriter::new(f)))
            }
            None => None,
        };
        Ok(Report { out })
    }

    /// Writes `record` with a leading `type` field.
    pub fn record<T: Serialize>(&mut self, kind: &str, record: &T) -> Result<()> {
        let Some((path, w)) = &mut self.out else { return Ok(()) };
        let mut v = serde_json::Map::new();
        v.insert("type".into(), kind.into());
        match serde_json::to_value(record)? {
            Value::Object(m) => v.extend(m),
            other => {
                v.insert("value".into(), other);
            }
        }
        serde_json::to_writer(&mut *w, &v)?;
        writeln!(w).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn finish(self) -> Result<()> {
        if let Some((path, mut w)) = self.out {
            w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}
