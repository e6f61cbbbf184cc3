//! Versioned JSON snapshot of a refinement state.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::queue::{ValidationItem, ValidationQueue};
use super::state::{Constraints, RefinementState};
use super::{ordered, QuotientEdge, RefineError, SimilarityOracle};
use crate::ontology::{Concept, ConceptId, Edge, OntologyError, UnionGraph};
use crate::oracle::Decision;

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub id: ConceptId,
    pub rank: u32,
    pub members: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintsRecord {
    pub negative_pairs: Vec<(ConceptId, ConceptId)>,
    #[serde(default)]
    pub positive_pairs: Vec<(ConceptId, ConceptId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub a: ConceptId,
    pub b: ConceptId,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub format_version: u32,
    /// Bumped on every mutation of the state.
    pub version: u64,
    pub classes: Vec<ClassRecord>,
    pub edges: Vec<QuotientEdge>,
    pub constraints: ConstraintsRecord,
    pub queue: Vec<ValidationItem>,
    pub concepts: Vec<Concept>,
    pub concept_edges: Vec<Edge>,
    pub decisions: Vec<DecisionRecord>,
}

impl GraphDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RefineError> {
        let doc: GraphDocument = serde_json::from_str(s).map_err(|e| RefineError::Document(e.to_string()))?;
        if doc.format_version != DOCUMENT_VERSION {
            return Err(RefineError::Document(format!(
                "format version {} is not supported (expected {DOCUMENT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    /// Decisions as (a, b, decision) triples, e.g. for a replay oracle.
    pub fn decision_triples(&self) -> impl Iterator<Item = (ConceptId, ConceptId, Decision)> + '_ {
        self.decisions.iter().map(|d| (d.a.clone(), d.b.clone(), d.decision.clone()))
    }
}

impl RefinementState {
    pub fn to_document(&self) -> GraphDocument {
        let g = &self.graph;
        let mut concepts: Vec<Concept> = g.concepts().cloned().collect();
        concepts.sort_by(|a, b| a.id.cmp(&b.id));
        let mut concept_edges: Vec<Edge> = g
            .edges()
            .map(|(c, p, r)| Edge::new(g.id(c).clone(), g.id(p).clone(), r))
            .collect();
        concept_edges.sort();
        let cg = self.concept_graph();
        GraphDocument {
            format_version: DOCUMENT_VERSION,
            version: self.version,
            concepts,
            concept_edges,
            classes: cg
                .classes
                .iter()
                .map(|c| ClassRecord {
                    id: c.id.clone(),
                    rank: c.rank,
                    members: c.members.clone(),
                })
                .collect(),
            edges: cg.edges,
            constraints: ConstraintsRecord {
                negative_pairs: self.constraints.negative_pairs.iter().cloned().collect(),
                positive_pairs: self.constraints.positive_pairs.iter().cloned().collect(),
            },
            queue: self.queue.items().to_vec(),
            decisions: self
                .decisions()
                .into_iter()
                .map(|(a, b, decision)| DecisionRecord { a, b, decision })
                .collect(),
        }
    }

    /// Restores a state exactly as saved; the partition is taken from the
    /// document, not recomputed.
    pub fn from_document(doc: &GraphDocument, oracle: &dyn SimilarityOracle) -> Result<Self, RefineError> {
        let bad = |m: String| RefineError::Document(m);
        let graph = UnionGraph::from_concepts(doc.concepts.iter().cloned(), doc.concept_edges.iter().cloned()).map_err(|e| match e {
            OntologyError::Cycle(path) => RefineError::Cycle(path),
            other => bad(other.to_string()),
        })?;

        let mut placed = vec![false; graph.len()];
        let mut groups: Vec<Vec<u32>> = Vec::with_capacity(doc.classes.len());
        for class in &doc.classes {
            let mut group = Vec::with_capacity(class.members.len());
            for m in &class.members {
                let v = graph
                    .index_of(m)
                    .ok_or_else(|| bad(format!("class member {m} is not a listed concept")))?;
                if std::mem::replace(&mut placed[v as usize], true) {
                    return Err(bad(format!("{m} belongs to two classes")));
                }
                if graph.rank(v) != graph.rank(graph.index_of(&class.members[0]).unwrap()) {
                    return Err(bad(format!("class {} mixes ranks", class.id)));
                }
                group.push(v);
            }
            groups.push(group);
        }
        for (v, ok) in placed.iter().enumerate() {
            if !ok {
                groups.push(vec![v as u32]);
            }
        }

        let mut constraints = Constraints::default();
        for (a, b) in &doc.constraints.negative_pairs {
            constraints.add_negative(a.clone(), b.clone());
        }
        for (a, b) in &doc.constraints.positive_pairs {
            constraints.add_positive(a.clone(), b.clone());
        }
        let mut memo = HashMap::new();
        for d in &doc.decisions {
            let (a, b) = ordered(d.a.clone(), d.b.clone());
            if let (Some(x), Some(y)) = (graph.index_of(&a), graph.index_of(&b)) {
                memo.insert((x.min(y), x.max(y)), d.decision.clone());
            }
        }
        let queue = ValidationQueue::from_items(doc.queue.clone());
        Ok(RefinementState::from_parts(graph, groups, constraints, memo, queue, doc.version, oracle))
    }
}
