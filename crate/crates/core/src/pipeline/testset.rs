//! Evaluation sets: sources with a fixed number of candidate targets each,
//! half of them with a gold match among the candidates.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::Alignment;
use crate::embed::{cosine, EmbeddingVector};
use crate::ontology::{ConceptId, Role, UnionGraph};
use crate::util::normalize_tokens;

pub const MATCHED_SOURCES: usize = 20;
pub const UNMATCHED_SOURCES: usize = 20;
pub const CANDIDATES: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub source: ConceptId,
    /// Sorted by descending cosine, ties by id; contains `gold` if any.
    pub candidates: Vec<ConceptId>,
    pub gold: Option<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    pub seed: u64,
    pub entries: Vec<TestEntry>,
}

impl TestSet {
    pub fn pair_count(&self) -> usize {
        self.entries.iter().map(|e| e.candidates.len()).sum()
    }

    /// All (source, candidate) pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&ConceptId, &ConceptId)> {
        self.entries.iter().flat_map(|e| e.candidates.iter().map(move |c| (&e.source, c)))
    }

    pub fn gold(&self) -> Alignment {
        Alignment::new(self.entries.iter().filter_map(|e| e.gold.clone().map(|g| (e.source.clone(), g))))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TestSetError {
    #[error("need at least {need} usable gold pairs, found {found}")]
    InsufficientGold { need: usize, found: usize },
    #[error("need at least {need} target concepts, found {found}")]
    InsufficientTargets { need: usize, found: usize },
    #[error("need at least {need} sources without a gold match, found {found}")]
    InsufficientSources { need: usize, found: usize },
    #[error("no embedding for {0}")]
    MissingEmbedding(ConceptId),
}

fn same_label(g: &UnionGraph, a: &ConceptId, b: &ConceptId) -> bool {
    let labels = |id: &ConceptId| -> BTreeSet<Vec<String>> {
        g.concept_by_id(id)
            .map(|c| c.labels.iter().map(|l| normalize_tokens(l)).collect())
            .unwrap_or_default()
    };
    !labels(a).is_disjoint(&labels(b))
}

/// Samples matched and unmatched sources with a seeded generator and picks
/// each source's candidates by cosine. With `exclude_shared_label`, gold
/// pairs and candidates whose labels coincide after normalization are left
/// out.
pub fn generate_test_set(
    gold: &Alignment,
    g: &UnionGraph,
    embeddings: &BTreeMap<ConceptId, EmbeddingVector>,
    seed: u64,
    exclude_shared_label: bool,
) -> Result<TestSet, TestSetError> {
    let targets: Vec<&ConceptId> = g.nodes_with_role(Role::Target).map(|v| g.id(v)).collect();
    if targets.len() < CANDIDATES {
        return Err(TestSetError::InsufficientTargets {
            need: CANDIDATES,
            found: targets.len(),
        });
    }
    let usable: Vec<&(ConceptId, ConceptId)> = gold
        .pairs
        .iter()
        .filter(|(s, t)| g.contains(s) && g.contains(t))
        .filter(|(s, t)| !(exclude_shared_label && same_label(g, s, t)))
        .collect();
    // one gold pair per source keeps the entries well defined
    let mut by_source: BTreeMap<&ConceptId, &ConceptId> = BTreeMap::new();
    for (s, t) in &usable {
        by_source.entry(s).or_insert(t);
    }
    if by_source.len() < MATCHED_SOURCES {
        return Err(TestSetError::InsufficientGold {
            need: MATCHED_SOURCES,
            found: by_source.len(),
        });
    }
    let gold_sources: BTreeSet<&ConceptId> = gold.pairs.iter().map(|(s, _)| s).collect();
    let free: Vec<&ConceptId> = g
        .nodes_with_role(Role::Source)
        .map(|v| g.id(v))
        .filter(|s| !gold_sources.contains(s))
        .collect();
    if free.len() < UNMATCHED_SOURCES {
        return Err(TestSetError::InsufficientSources {
            need: UNMATCHED_SOURCES,
            found: free.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matched: Vec<(&ConceptId, &ConceptId)> = by_source.into_iter().collect();
    let mut matched: Vec<_> = matched.choose_multiple(&mut rng, MATCHED_SOURCES).copied().collect();
    matched.sort();
    let mut unmatched: Vec<&ConceptId> = free.choose_multiple(&mut rng, UNMATCHED_SOURCES).copied().collect();
    unmatched.sort();

    let emb = |id: &ConceptId| embeddings.get(id).ok_or_else(|| TestSetError::MissingEmbedding(id.clone()));
    let ranked = |s: &ConceptId, skip: Option<&ConceptId>, n: usize| -> Result<Vec<(f64, ConceptId)>, TestSetError> {
        let zs = emb(s)?;
        let mut scored = Vec::with_capacity(targets.len());
        for &t in &targets {
            if Some(t) == skip || (exclude_shared_label && same_label(g, s, t)) {
                continue;
            }
            scored.push((cosine(zs, emb(t)?).unwrap_or(0.0), t.clone()));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        scored.truncate(n);
        Ok(scored)
    };

    let mut entries = Vec::with_capacity(MATCHED_SOURCES + UNMATCHED_SOURCES);
    for (s, t) in matched {
        let mut scored = ranked(s, Some(t), CANDIDATES - 1)?;
        if scored.len() < CANDIDATES - 1 {
            return Err(TestSetError::InsufficientTargets {
                need: CANDIDATES,
                found: scored.len() + 1,
            });
        }
        scored.push((cosine(emb(s)?, emb(t)?).unwrap_or(0.0), t.clone()));
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        entries.push(TestEntry {
            source: s.clone(),
            candidates: scored.into_iter().map(|(_, t)| t).collect(),
            gold: Some(t.clone()),
        });
    }
    for s in unmatched {
        let scored = ranked(s, None, CANDIDATES)?;
        if scored.len() < CANDIDATES {
            return Err(TestSetError::InsufficientTargets {
                need: CANDIDATES,
                found: scored.len(),
            });
        }
        entries.push(TestEntry {
            source: s.clone(),
            candidates: scored.into_iter().map(|(_, t)| t).collect(),
            gold: None,
        });
    }
    Ok(TestSet { seed, entries })
}
