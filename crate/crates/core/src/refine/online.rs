//! Streaming updates: a batch of new concepts and edges is applied to a
//! refined state and only the affected part of the partition is revisited.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::queue::{ItemContext, QueueReason};
use super::state::RefinementState;
use super::{RefineError, SimilarityOracle};
use crate::ontology::{find_cycle, Concept, ConceptId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaEdge {
    pub child: ConceptId,
    pub parent: ConceptId,
    #[serde(default = "default_relation")]
    pub relation: String,
}

fn default_relation() -> String {
    "is_a".to_string()
}

impl DeltaEdge {
    pub fn new(child: ConceptId, parent: ConceptId, relation: impl Into<String>) -> Self {
        DeltaEdge {
            child,
            parent,
            relation: relation.into(),
        }
    }
}

/// New concepts may be listed explicitly (to carry labels); endpoints that
/// are neither known nor listed are created with a default label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaBatch {
    #[serde(default)]
    pub concepts: Vec<Concept>,
    #[serde(default)]
    pub edges: Vec<DeltaEdge>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaReport {
    pub new_concepts: Vec<ConceptId>,
    pub applied: usize,
    /// Queue items raised for edges that would raise an existing rank.
    pub deferred: Vec<u64>,
    pub duplicates: usize,
    pub version: u64,
}

impl RefinementState {
    /// Applies a batch atomically: if any edge closes a cycle nothing
    /// changes. Existing ranks never change; an edge that would raise its
    /// parent's rank is held back as a validation item instead.
    pub fn apply_delta(&mut self, batch: &DeltaBatch, oracle: &dyn SimilarityOracle) -> Result<DeltaReport, RefineError> {
        let n = self.graph.len();
        // new concepts get indices n.. in first-mention order
        let mut fresh: Vec<Concept> = Vec::new();
        let mut fresh_ix: HashMap<ConceptId, usize> = HashMap::new();
        let mut note = |c: Concept, fresh: &mut Vec<Concept>| {
            if !self.graph.contains(&c.id) && !fresh_ix.contains_key(&c.id) {
                fresh_ix.insert(c.id.clone(), n + fresh.len());
                fresh.push(c);
            }
        };
        for c in &batch.concepts {
            note(c.clone(), &mut fresh);
        }
        for e in &batch.edges {
            note(Concept::new(e.child.clone(), vec![]), &mut fresh);
            note(Concept::new(e.parent.clone(), vec![]), &mut fresh);
        }
        let ix = |id: &ConceptId| -> usize {
            self.graph
                .index_of(id)
                .map(|v| v as usize)
                .unwrap_or_else(|| fresh_ix[id])
        };
        let edges: Vec<(usize, usize, &str)> = batch
            .edges
            .iter()
            .map(|e| (ix(&e.child), ix(&e.parent), e.relation.as_str()))
            .collect();

        self.check_acyclic(&edges, n, &fresh)?;

        // ranks of new nodes, from the batch edges into new parents
        let total = n + fresh.len();
        let mut new_children: Vec<Vec<usize>> = vec![Vec::new(); fresh.len()];
        for &(c, p, _) in &edges {
            if p >= n {
                new_children[p - n].push(c);
            }
        }
        let mut fresh_rank: Vec<Option<u32>> = vec![None; fresh.len()];
        let known = |v: usize, fresh_rank: &[Option<u32>]| {
            if v < n {
                Some(self.graph.rank(v as u32))
            } else {
                fresh_rank[v - n]
            }
        };
        for start in n..total {
            let mut stack = vec![(start, false)];
            while let Some((v, expanded)) = stack.pop() {
                if known(v, &fresh_rank).is_some() {
                    continue;
                }
                let kids = &new_children[v - n];
                if expanded {
                    let r = kids.iter().map(|&k| known(k, &fresh_rank).unwrap() + 1).max().unwrap_or(0);
                    fresh_rank[v - n] = Some(r);
                } else {
                    stack.push((v, true));
                    stack.extend(kids.iter().filter(|&&k| known(k, &fresh_rank).is_none()).map(|&k| (k, false)));
                }
            }
        }

        let mut report = DeltaReport::default();
        for (i, c) in fresh.into_iter().enumerate() {
            report.new_concepts.push(c.id.clone());
            let v = self.graph.push_node(c);
            debug_assert_eq!(v as usize, n + i);
            self.graph.set_rank(v, fresh_rank[i].unwrap());
            self.register_node(v, oracle);
        }

        let mut affected: BTreeSet<u32> = (n as u32..total as u32).collect();
        for (e, &(c, p, rel)) in batch.edges.iter().zip(&edges) {
            let (rc, rp) = (self.graph.rank(c as u32), self.graph.rank(p as u32));
            if p < n && rc + 1 > rp {
                let id = self.queue.push(
                    (e.child.clone(), e.parent.clone()),
                    QueueReason::RankConflict,
                    0.0,
                    ItemContext {
                        decision: None,
                        relation: Some(rel.to_string()),
                        note: Some(format!("edge would raise the rank of {} from {rp} to {}", e.parent, rc + 1)),
                    },
                );
                report.deferred.push(id);
                continue;
            }
            if self.graph.push_edge(c as u32, p as u32, rel.to_string()) {
                report.applied += 1;
                affected.insert(c as u32);
                affected.insert(p as u32);
            } else {
                report.duplicates += 1;
            }
        }
        self.repair(affected, oracle);
        self.version += 1;
        report.version = self.version;
        Ok(report)
    }

    /// Looks for a cycle through the batch edges. Every such cycle lies in
    /// the upward closure of the batch parents, so only that part is built.
    fn check_acyclic(&self, edges: &[(usize, usize, &str)], n: usize, fresh: &[Concept]) -> Result<(), RefineError> {
        let mut up: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(c, p, _) in edges {
            up.entry(c).or_default().push(p);
        }
        let parents_of = |v: usize| -> Vec<usize> {
            let mut out: Vec<usize> = if v < n {
                self.graph.parents(v as u32).iter().map(|&p| p as usize).collect()
            } else {
                Vec::new()
            };
            if let Some(extra) = up.get(&v) {
                out.extend(extra);
            }
            out
        };
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut seen: HashSet<usize> = HashSet::new();
        let mut stack: Vec<usize> = edges.iter().map(|&(_, p, _)| p).collect();
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            local.insert(v, order.len());
            order.push(v);
            stack.extend(parents_of(v));
        }
        let adj: Vec<Vec<usize>> = order
            .iter()
            .map(|&v| parents_of(v).into_iter().filter_map(|p| local.get(&p).copied()).collect())
            .collect();
        match find_cycle(&adj) {
            None => Ok(()),
            Some(cycle) => Err(RefineError::Cycle(
                cycle
                    .into_iter()
                    .map(|i| {
                        let v = order[i];
                        if v < n {
                            self.graph.id(v as u32).to_string()
                        } else {
                            fresh[v - n].id.to_string()
                        }
                    })
                    .collect(),
            )),
        }
    }
}
