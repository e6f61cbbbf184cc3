//! Partition refinement of the union graph into bisimilarity classes.
//!
//! Two concepts share a class when they are similar (through the transitive
//! closure of pairwise `Similar` decisions), have the same rank, and their
//! parents and children fall into the same classes. [`RefinementState`]
//! computes the coarsest such partition, keeps it up to date as edge batches
//! arrive, and tracks pairs that need a human decision.

mod brute;
mod document;
mod online;
mod quotient;
mod queue;
mod state;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ConceptId, UnionGraph};
use crate::oracle::Decision;

pub use brute::brute_force_bisim;
pub use document::{ClassRecord, ConstraintsRecord, DecisionRecord, GraphDocument, DOCUMENT_VERSION};
pub use online::{DeltaBatch, DeltaEdge, DeltaReport};
pub use quotient::{init_concept_graph, quotient, ConceptGraph, QuotientEdge};
pub use queue::{ItemContext, ItemStatus, QueueReason, Resolution, ValidationItem, ValidationQueue};
pub use state::{Constraints, RefinementState, ResolveReport};

/// Pairwise similarity judgments consumed by refinement.
pub trait SimilarityOracle {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision;

    /// Concepts with different keys are never similar, so they are never
    /// compared. The default puts everything in one block.
    fn block_key(&self, _c: &ConceptId) -> u64 {
        0
    }

    /// When `Some`, only these concepts are ever compared with `c`. Used by
    /// the pipeline to restrict judgments to embedding candidates.
    fn partners(&self, _c: &ConceptId) -> Option<Vec<ConceptId>> {
        None
    }
}

impl<T: SimilarityOracle + ?Sized> SimilarityOracle for &T {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        (**self).judge(a, b)
    }

    fn block_key(&self, c: &ConceptId) -> u64 {
        (**self).block_key(c)
    }

    fn partners(&self, c: &ConceptId) -> Option<Vec<ConceptId>> {
        (**self).partners(c)
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F>(pub F);

impl<F: Fn(&ConceptId, &ConceptId) -> bool> SimilarityOracle for FnOracle<F> {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        if (self.0)(a, b) {
            Decision::similar()
        } else {
            Decision::dissimilar()
        }
    }
}

/// Similar exactly when two concepts map to the same key. Transitive by
/// construction and constant-time.
pub struct KeyOracle<F>(pub F);

impl<F: Fn(&ConceptId) -> u64> SimilarityOracle for KeyOracle<F> {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        if (self.0)(a) == (self.0)(b) {
            Decision::similar()
        } else {
            Decision::dissimilar()
        }
    }

    fn block_key(&self, c: &ConceptId) -> u64 {
        (self.0)(c)
    }
}

/// Never similar; refinement yields singletons.
pub struct NothingSimilar;

impl SimilarityOracle for NothingSimilar {
    fn judge(&self, _a: &ConceptId, _b: &ConceptId) -> Decision {
        Decision::dissimilar()
    }
}

/// Replays stored decisions; unknown pairs are dissimilar and never
/// compared.
#[derive(Debug, Clone, Default)]
pub struct ReplayOracle {
    decisions: BTreeMap<(ConceptId, ConceptId), Decision>,
    partners: BTreeMap<ConceptId, Vec<ConceptId>>,
}

impl ReplayOracle {
    pub fn new(decisions: impl IntoIterator<Item = (ConceptId, ConceptId, Decision)>) -> Self {
        let decisions: BTreeMap<_, _> = decisions.into_iter().map(|(a, b, d)| (ordered(a, b), d)).collect();
        let mut partners: BTreeMap<ConceptId, Vec<ConceptId>> = BTreeMap::new();
        for (a, b) in decisions.keys() {
            partners.entry(a.clone()).or_default().push(b.clone());
            partners.entry(b.clone()).or_default().push(a.clone());
        }
        ReplayOracle { decisions, partners }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

impl SimilarityOracle for ReplayOracle {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        self.decisions
            .get(&ordered(a.clone(), b.clone()))
            .cloned()
            .unwrap_or_else(Decision::dissimilar)
    }

    fn partners(&self, c: &ConceptId) -> Option<Vec<ConceptId>> {
        Some(self.partners.get(c).cloned().unwrap_or_default())
    }
}

/// The pair in ascending id order.
pub fn ordered(a: ConceptId, b: ConceptId) -> (ConceptId, ConceptId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EquivalenceClass {
    /// The smallest member id.
    pub id: ConceptId,
    pub rank: u32,
    /// Sorted, non-empty.
    pub members: Vec<ConceptId>,
}

/// Canonical partition: classes sorted by their sorted member lists.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub classes: Vec<EquivalenceClass>,
}

impl Partition {
    /// Builds the canonical form from member groups of `g`'s nodes.
    pub fn from_groups(g: &UnionGraph, groups: impl IntoIterator<Item = Vec<u32>>) -> Self {
        let mut classes: Vec<EquivalenceClass> = groups
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|m| {
                let rank = g.rank(m[0]);
                let mut members: Vec<ConceptId> = m.iter().map(|&v| g.id(v).clone()).collect();
                members.sort();
                EquivalenceClass {
                    id: members[0].clone(),
                    rank,
                    members,
                }
            })
            .collect();
        classes.sort_by(|a, b| a.members.cmp(&b.members));
        Partition { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_of(&self, c: &ConceptId) -> Option<&EquivalenceClass> {
        self.classes.iter().find(|k| k.members.binary_search(c).is_ok())
    }

    pub fn same_class(&self, a: &ConceptId, b: &ConceptId) -> bool {
        self.class_of(a).is_some_and(|k| k.members.binary_search(b).is_ok())
    }

    /// Classes grouped by rank.
    pub fn buckets(&self) -> BTreeMap<u32, Vec<&EquivalenceClass>> {
        let mut out: BTreeMap<u32, Vec<&EquivalenceClass>> = BTreeMap::new();
        for c in &self.classes {
            out.entry(c.rank).or_default().push(c);
        }
        out
    }

    /// Member lists only, for comparisons.
    pub fn member_sets(&self) -> Vec<Vec<ConceptId>> {
        self.classes.iter().map(|c| c.members.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error("batch would create a cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("unknown validation item {0}")]
    UnknownItem(u64),
    #[error("validation item {0} is not pending")]
    NotPending(u64),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("invalid graph document: {0}")]
    Document(String),
}

/// One-shot offline refinement of a union graph.
pub fn offline_refine(g: &UnionGraph, oracle: &dyn SimilarityOracle) -> (ConceptGraph, ValidationQueue) {
    let state = RefinementState::offline(g.clone(), oracle, Constraints::default());
    (state.concept_graph(), state.queue().clone())
}
