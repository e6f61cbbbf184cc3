//! Ontologies as DAGs of concepts: identifiers, validation, ranks and the
//! union graph of a source/target pair.
//!
//! Edges run child to parent (specific to general). A `subClassOf` triple
//! `(a, p, b)` therefore yields the edge `a -> b`, and rank-0 concepts are the
//! most specific ones.

mod parse;
pub mod triples;
mod union;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use parse::{parse_ontology, Format};
pub use triples::SyntaxError;
pub use union::{union_graph, UnionGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Source => "src",
            Role::Target => "tgt",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" | "src" => Ok(Role::Source),
            "target" | "tgt" => Ok(Role::Target),
            other => Err(format!("unknown ontology role `{other}`")),
        }
    }
}

/// Concept identifier: the IRI as written in the input, tagged with the
/// ontology it was loaded from. Rendered as `src:<iri>` or `tgt:<iri>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId {
    role: Role,
    iri: String,
}

impl ConceptId {
    pub fn new(role: Role, iri: impl Into<String>) -> Self {
        ConceptId { role, iri: iri.into() }
    }

    pub fn source(iri: impl Into<String>) -> Self {
        Self::new(Role::Source, iri)
    }

    pub fn target(iri: impl Into<String>) -> Self {
        Self::new(Role::Target, iri)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn iri(&self) -> &str {
        &self.iri
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.role.prefix(), self.iri)
    }
}

impl FromStr for ConceptId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(iri) = s.strip_prefix("src:") {
            Ok(ConceptId::source(iri))
        } else if let Some(iri) = s.strip_prefix("tgt:") {
            Ok(ConceptId::target(iri))
        } else {
            Err(format!("concept id `{s}` lacks a src:/tgt: prefix"))
        }
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    /// The first label is canonical for display.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    #[serde(default)]
    pub ground_set: BTreeSet<String>,
}

impl Concept {
    pub fn new(id: ConceptId, labels: Vec<String>) -> Self {
        let labels = if labels.is_empty() {
            vec![default_label(id.iri())]
        } else {
            labels
        };
        Concept {
            id,
            labels,
            definition: None,
            ground_set: BTreeSet::new(),
        }
    }

    pub fn with_definition(mut self, definition: impl Into<String>) -> Self {
        self.definition = Some(definition.into());
        self
    }

    pub fn label(&self) -> &str {
        &self.labels[0]
    }
}

/// Label derived from an IRI when none is declared: its local name with
/// underscores turned into spaces.
pub fn default_label(iri: &str) -> String {
    triples::local_name(iri).replace('_', " ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub child: ConceptId,
    pub parent: ConceptId,
    pub relation: String,
}

impl Edge {
    pub fn new(child: ConceptId, parent: ConceptId, relation: impl Into<String>) -> Self {
        Edge {
            child,
            parent,
            relation: relation.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("malformed JSON ontology: {0}")]
    Json(String),
    #[error("edge {child} -> {parent} references an undeclared concept")]
    DanglingEdge { child: String, parent: String },
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("concept {0} declared twice")]
    DuplicateConcept(String),
    #[error("concept {id} has role {found:?}, expected {expected:?}")]
    RoleMismatch { id: String, expected: Role, found: Role },
    #[error("source and target ontologies share concept id {0}")]
    DuplicateAcrossRoles(String),
}

/// A validated ontology: declared concepts plus an acyclic edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    role: Role,
    concepts: BTreeMap<ConceptId, Concept>,
    edges: BTreeSet<Edge>,
}

impl Ontology {
    pub fn empty(role: Role) -> Self {
        Ontology {
            role,
            concepts: BTreeMap::new(),
            edges: BTreeSet::new(),
        }
    }

    /// Builds and validates an ontology. Fails on dangling endpoints, role
    /// mismatches, duplicate declarations and cycles (self-loops included).
    pub fn new(
        role: Role,
        concepts: impl IntoIterator<Item = Concept>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, OntologyError> {
        let mut map = BTreeMap::new();
        for c in concepts {
            if c.id.role() != role {
                return Err(OntologyError::RoleMismatch {
                    id: c.id.to_string(),
                    expected: role,
                    found: c.id.role(),
                });
            }
            if map.contains_key(&c.id) {
                return Err(OntologyError::DuplicateConcept(c.id.to_string()));
            }
            map.insert(c.id.clone(), c);
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        for e in &edges {
            if !map.contains_key(&e.child) || !map.contains_key(&e.parent) {
                return Err(OntologyError::DanglingEdge {
                    child: e.child.to_string(),
                    parent: e.parent.to_string(),
                });
            }
        }
        let o = Ontology {
            role,
            concepts: map,
            edges,
        };
        if let Some(cycle) = o.find_cycle() {
            return Err(OntologyError::Cycle(cycle.iter().map(|c| c.to_string()).collect()));
        }
        Ok(o)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concept_mut(&mut self, id: &ConceptId) -> Option<&mut Concept> {
        self.concepts.get_mut(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn find_cycle(&self) -> Option<Vec<ConceptId>> {
        let ids: Vec<&ConceptId> = self.concepts.keys().collect();
        let index: BTreeMap<&ConceptId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut parents = vec![Vec::new(); ids.len()];
        for e in &self.edges {
            parents[index[&e.child]].push(index[&e.parent]);
        }
        find_cycle(&parents).map(|cyc| cyc.into_iter().map(|i| ids[i].clone()).collect())
    }

    /// Ranks of every concept. The ontology is a DAG, so this always succeeds.
    pub fn ranks(&self) -> RankMap {
        compute_ranks(self)
    }
}

/// Finds one directed cycle in an adjacency list, returned as the node
/// sequence along the cycle.
pub(crate) fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = adj.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Active;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                match mark[w] {
                    Mark::New => {
                        mark[w] = Mark::Active;
                        stack.push((w, 0));
                    }
                    Mark::Active => {
                        let start = stack.iter().position(|(u, _)| *u == w).unwrap();
                        return Some(stack[start..].iter().map(|(u, _)| *u).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Rank of each concept: 0 without children, else one more than the highest
/// ranked child.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankMap(BTreeMap<ConceptId, u32>);

impl RankMap {
    pub fn get(&self, id: &ConceptId) -> Option<u32> {
        self.0.get(id).copied()
    }

    pub fn max_rank(&self) -> Option<u32> {
        self.0.values().copied().max()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConceptId, u32)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_ranks(o: &Ontology) -> RankMap {
    let ids: Vec<&ConceptId> = o.concepts.keys().collect();
    let index: BTreeMap<&ConceptId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut children = vec![Vec::new(); ids.len()];
    for e in &o.edges {
        children[index[&e.parent]].push(index[&e.child] as u32);
    }
    let ranks = ranks_from_children(&children);
    RankMap(ids.into_iter().cloned().zip(ranks).collect())
}

/// Reverse-topological rank pass over a child adjacency list (acyclic).
pub(crate) fn ranks_from_children(children: &[Vec<u32>]) -> Vec<u32> {
    let n = children.len();
    let mut parents: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut pending: Vec<usize> = vec![0; n];
    for (p, cs) in children.iter().enumerate() {
        pending[p] = cs.len();
        for &c in cs {
            parents[c as usize].push(p as u32);
        }
    }
    let mut rank = vec![0u32; n];
    let mut ready: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).collect();
    while let Some(v) = ready.pop() {
        for &p in &parents[v] {
            let p = p as usize;
            rank[p] = rank[p].max(rank[v] + 1);
            pending[p] -= 1;
            if pending[p] == 0 {
                ready.push(p);
            }
        }
    }
    rank
}
