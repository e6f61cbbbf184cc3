//! Ground-set enrichment from a knowledge graph.
//!
//! For every concept we take its two-hop neighborhood in the union graph,
//! turn the edges incident to the concept into star-shaped queries whose
//! terminals are the neighbors' labels, run those against an in-memory triple
//! store and fold the matching entities (and their label/definition literals)
//! into the concept's ground set.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ontology::triples::{local_name, parse_triples, SyntaxError, Term};
use crate::ontology::{Concept, ConceptId, Edge, UnionGraph};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

/// Set of triples with subject, predicate and (predicate, object) indexes.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    present: BTreeSet<Triple>,
    by_subject: HashMap<String, Vec<usize>>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_pred_object: HashMap<(String, String), Vec<usize>>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads the same line-oriented triple format used for ontologies.
    pub fn parse(input: &str) -> Result<Self, SyntaxError> {
        let mut store = TripleStore::new();
        store.extend_from_text(input)?;
        Ok(store)
    }

    pub fn extend_from_text(&mut self, input: &str) -> Result<(), SyntaxError> {
        for t in parse_triples(input)? {
            self.insert(Triple {
                subject: t.subject.as_str().to_string(),
                predicate: t.predicate.as_str().to_string(),
                object: t.object,
            });
        }
        Ok(())
    }

    /// Inserts a triple; returns false if it was already present. Triples
    /// with an empty field are rejected the same way.
    pub fn insert(&mut self, t: Triple) -> bool {
        if t.subject.is_empty() || t.predicate.is_empty() || t.object.as_str().is_empty() {
            return false;
        }
        if !self.present.insert(t.clone()) {
            return false;
        }
        let i = self.triples.len();
        self.by_subject.entry(t.subject.clone()).or_default().push(i);
        self.by_predicate.entry(t.predicate.clone()).or_default().push(i);
        self.by_pred_object
            .entry((t.predicate.clone(), t.object.as_str().to_string()))
            .or_default()
            .push(i);
        self.triples.push(t);
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    fn collect(&self, idx: Option<&Vec<usize>>) -> Vec<&Triple> {
        idx.map(|v| v.iter().map(|&i| &self.triples[i]).collect()).unwrap_or_default()
    }

    pub fn with_subject(&self, s: &str) -> Vec<&Triple> {
        self.collect(self.by_subject.get(s))
    }

    pub fn with_predicate(&self, p: &str) -> Vec<&Triple> {
        self.collect(self.by_predicate.get(p))
    }

    pub fn with_predicate_object(&self, p: &str, o: &str) -> Vec<&Triple> {
        self.collect(self.by_pred_object.get(&(p.to_string(), o.to_string())))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terminal {
    Var(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    pub predicate: String,
    pub terminal: Terminal,
}

/// A query whose patterns all share one subject variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarQuery {
    pub center: String,
    pub patterns: Vec<Pattern>,
    pub provenance: ConceptId,
}

impl StarQuery {
    /// SPARQL SELECT rendering, used by the remote adapter and for debugging.
    pub fn to_sparql(&self) -> String {
        let mut vars = vec![format!("?{}", self.center)];
        for p in &self.patterns {
            if let Terminal::Var(v) = &p.terminal {
                let v = format!("?{v}");
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
        let mut out = format!("SELECT {} WHERE {{ ", vars.join(" "));
        for p in &self.patterns {
            let term = match &p.terminal {
                Terminal::Var(v) => format!("?{v}"),
                Terminal::Const(c) if c.contains("://") => format!("<{c}>"),
                Terminal::Const(c) => format!("{c:?}"),
            };
            write!(out, "?{} <{}> {} . ", self.center, p.predicate, term).unwrap();
        }
        out.push('}');
        out
    }
}

/// Node-induced subgraph within two undirected hops of `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSubgraph {
    pub center: ConceptId,
    pub nodes: BTreeSet<ConceptId>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Hard cap on neighborhood size (excluding the center), nearest first.
    pub neighbor_cap: usize,
    /// Predicates whose literal objects are copied from matched entities into
    /// the ground set.
    pub literal_predicates: Vec<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            neighbor_cap: 64,
            literal_predicates: ["label", "prefLabel", "altLabel", "definition", "IAO_0000115"]
                .map(String::from)
                .to_vec(),
        }
    }
}

pub type Binding = BTreeMap<String, String>;

/// Exhaustive bounded traversal: every node within two undirected hops,
/// capped at `cap` neighbors ordered by (hop, id).
pub fn sample_neighborhood(g: &UnionGraph, center: &ConceptId, cap: usize) -> Option<NeighborhoodSubgraph> {
    let c = g.index_of(center)?;
    let mut hop: BTreeMap<u32, u32> = BTreeMap::new();
    hop.insert(c, 0);
    let mut queue = VecDeque::from([c]);
    while let Some(v) = queue.pop_front() {
        let h = hop[&v];
        if h == 2 {
            continue;
        }
        for &w in g.parents(v).iter().chain(g.children(v)) {
            if let std::collections::btree_map::Entry::Vacant(e) = hop.entry(w) {
                e.insert(h + 1);
                queue.push_back(w);
            }
        }
    }
    let mut ranked: Vec<(u32, &ConceptId, u32)> =
        hop.iter().filter(|(v, _)| **v != c).map(|(v, h)| (*h, g.id(*v), *v)).collect();
    ranked.sort();
    ranked.truncate(cap);
    let mut keep: BTreeSet<u32> = ranked.iter().map(|(_, _, v)| *v).collect();
    keep.insert(c);
    let mut edges: Vec<Edge> = g
        .edges()
        .filter(|(ch, p, _)| keep.contains(ch) && keep.contains(p))
        .map(|(ch, p, r)| Edge::new(g.id(ch).clone(), g.id(p).clone(), r))
        .collect();
    edges.sort();
    Some(NeighborhoodSubgraph {
        center: center.clone(),
        nodes: keep.into_iter().map(|v| g.id(v).clone()).collect(),
        edges,
    })
}

/// Turns the edges incident to the center into star queries. The center is
/// replaced by the variable `?s`; the far endpoint is instantiated with its
/// canonical label:
///
/// * `(center, r, parent)` asks for entities that are `r` the parent,
/// * `(child, r, center)` asks for entities that are `r` the center itself.
///
/// Identical queries are emitted once; output is sorted by (predicate,
/// terminal).
pub fn parameterize(sub: &NeighborhoodSubgraph, g: &UnionGraph) -> Vec<StarQuery> {
    let label = |id: &ConceptId| {
        g.concept_by_id(id)
            .map(|c| c.label().to_string())
            .unwrap_or_else(|| id.iri().to_string())
    };
    let mut patterns: BTreeSet<Pattern> = BTreeSet::new();
    for e in &sub.edges {
        if e.child == sub.center {
            patterns.insert(Pattern {
                predicate: e.relation.clone(),
                terminal: Terminal::Const(label(&e.parent)),
            });
        } else if e.parent == sub.center {
            patterns.insert(Pattern {
                predicate: e.relation.clone(),
                terminal: Terminal::Const(label(&sub.center)),
            });
        }
    }
    patterns
        .into_iter()
        .map(|p| StarQuery {
            center: "s".to_string(),
            patterns: vec![p],
            provenance: sub.center.clone(),
        })
        .collect()
}

/// All subjects satisfying every pattern, with variable terminals bound.
/// Predicates match either exactly or by local name, so a query for `is_a`
/// also hits `<http://…#is_a>`.
pub fn execute_star_query(q: &StarQuery, kg: &TripleStore) -> Vec<Binding> {
    if q.patterns.is_empty() {
        return Vec::new();
    }
    let predicate_matches = |stored: &str, wanted: &str| stored == wanted || local_name(stored) == local_name(wanted);
    // candidate subjects from the most selective pattern
    let mut subjects: BTreeSet<&str> = BTreeSet::new();
    let first = &q.patterns[0];
    let seed: Vec<&Triple> = match &first.terminal {
        Terminal::Const(c) => {
            let exact = kg.with_predicate_object(&first.predicate, c);
            if exact.is_empty() {
                kg.iter()
                    .filter(|t| t.object.as_str() == c && predicate_matches(&t.predicate, &first.predicate))
                    .collect()
            } else {
                exact
            }
        }
        Terminal::Var(_) => {
            let exact = kg.with_predicate(&first.predicate);
            if exact.is_empty() {
                kg.iter().filter(|t| predicate_matches(&t.predicate, &first.predicate)).collect()
            } else {
                exact
            }
        }
    };
    for t in seed {
        subjects.insert(&t.subject);
    }
    let mut out = Vec::new();
    for s in subjects {
        let triples = kg.with_subject(s);
        let mut partial: Vec<Binding> = vec![Binding::from([(q.center.clone(), s.to_string())])];
        for p in &q.patterns {
            let matches: BTreeSet<&str> = triples
                .iter()
                .filter(|t| predicate_matches(&t.predicate, &p.predicate))
                .filter(|t| match &p.terminal {
                    Terminal::Const(c) => t.object.as_str() == c,
                    Terminal::Var(_) => true,
                })
                .map(|t| t.object.as_str())
                .collect();
            if matches.is_empty() {
                partial.clear();
                break;
            }
            if let Terminal::Var(v) = &p.terminal {
                let mut next = Vec::new();
                for b in &partial {
                    for m in &matches {
                        match b.get(v) {
                            Some(bound) if bound != m => {}
                            _ => {
                                let mut nb = b.clone();
                                nb.insert(v.clone(), m.to_string());
                                next.push(nb);
                            }
                        }
                    }
                }
                partial = next;
            }
        }
        out.extend(partial);
    }
    out.sort();
    out.dedup();
    out
}

/// Adds bound entities and their allow-listed literal values to the ground
/// set. Monotone and idempotent.
pub fn curate_ground_set(mut c: Concept, bindings: &[Binding], center_var: &str, kg: &TripleStore, cfg: &RetrievalConfig) -> Concept {
    for b in bindings {
        let Some(entity) = b.get(center_var) else { continue };
        c.ground_set.insert(entity.clone());
        for t in kg.with_subject(entity) {
            if t.object.is_literal() && cfg.literal_predicates.iter().any(|p| p == local_name(&t.predicate)) {
                c.ground_set.insert(t.object.as_str().to_string());
            }
        }
    }
    c
}

/// Runs neighborhood sampling, parameterization, query execution and
/// curation for every concept of the graph.
pub fn enrich_ground_sets(g: &mut UnionGraph, kg: &TripleStore, cfg: &RetrievalConfig) {
    for v in 0..g.len() as u32 {
        let id = g.id(v).clone();
        let sub = sample_neighborhood(g, &id, cfg.neighbor_cap).expect("node exists");
        let queries = parameterize(&sub, g);
        let mut concept = g.concept(v).clone();
        for q in &queries {
            let bindings = execute_star_query(q, kg);
            concept = curate_ground_set(concept, &bindings, &q.center, kg, cfg);
        }
        *g.concept_mut(v) = concept;
    }
}
