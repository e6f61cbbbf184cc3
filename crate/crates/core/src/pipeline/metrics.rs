use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ConceptId, Role};
use crate::refine::Partition;

/// Cross-ontology pairs that share a class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: BTreeSet<(ConceptId, ConceptId)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("line {line}: expected `source<TAB>target`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("baseline call count must be positive")]
    ZeroBaseline,
    #[error("method used {method} calls, more than the baseline {baseline}")]
    AboveBaseline { baseline: u64, method: u64 },
}

fn parse_id(s: &str, role: Role) -> ConceptId {
    match s.parse::<ConceptId>() {
        Ok(id) if id.role() == role => id,
        _ => ConceptId::new(role, s),
    }
}

impl Alignment {
    pub fn new(pairs: impl IntoIterator<Item = (ConceptId, ConceptId)>) -> Self {
        Alignment {
            pairs: pairs.into_iter().collect(),
        }
    }

    /// Every (source, target) pair inside each class.
    pub fn from_partition(p: &Partition) -> Self {
        let mut pairs = BTreeSet::new();
        for c in &p.classes {
            let (src, tgt): (Vec<&ConceptId>, Vec<&ConceptId>) = c.members.iter().partition(|m| m.role() == Role::Source);
            for s in &src {
                for t in &tgt {
                    pairs.insert(((*s).clone(), (*t).clone()));
                }
            }
        }
        Alignment { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, s: &ConceptId, t: &ConceptId) -> bool {
        self.pairs.contains(&(s.clone(), t.clone()))
    }

    /// `source<TAB>target` per line, bare IRIs. Blank lines and `#` comments
    /// are skipped; `src:`/`tgt:` prefixes are accepted.
    pub fn from_tsv(text: &str) -> Result<Self, MetricsError> {
        let mut pairs = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut cols = t.split('\t');
            match (cols.next(), cols.next()) {
                (Some(s), Some(g)) if !s.is_empty() && !g.trim().is_empty() => {
                    pairs.insert((parse_id(s.trim(), Role::Source), parse_id(g.trim(), Role::Target)));
                }
                _ => {
                    return Err(MetricsError::BadLine {
                        line: i + 1,
                        text: line.to_string(),
                    })
                }
            }
        }
        Ok(Alignment { pairs })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, t) in &self.pairs {
            writeln!(out, "{}\t{}", s.iri(), t.iri()).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Present when a gold alignment was supplied.
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    pub llm_calls_made: u64,
    pub llm_calls_baseline: u64,
    /// Absent when the baseline is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction_pct: Option<f64>,
}

/// Precision, recall and F1. An empty prediction has precision 1 and an
/// empty gold set has recall 1.
pub fn evaluate(predicted: &Alignment, gold: &Alignment) -> Scores {
    let hit = predicted.pairs.intersection(&gold.pairs).count() as f64;
    let precision = if predicted.is_empty() {
        1.0
    } else {
        hit / predicted.len() as f64
    };
    let recall = if gold.is_empty() { 1.0 } else { hit / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores { precision, recall, f1 }
}

/// Percentage of baseline calls saved.
pub fn call_reduction(n_baseline: u64, n_method: u64) -> Result<f64, MetricsError> {
    if n_baseline == 0 {
        return Err(MetricsError::ZeroBaseline);
    }
    if n_method > n_baseline {
        return Err(MetricsError::AboveBaseline {
            baseline: n_baseline,
            method: n_method,
        });
    }
    Ok((1.0 - n_method as f64 / n_baseline as f64) * 100.0)
}
