use std::collections::{HashMap, HashSet};

use super::{ranks_from_children, Concept, ConceptId, Edge, Ontology, OntologyError, RankMap, Role};

/// Index-based union of the source and target ontologies.
///
/// Nodes built by [`UnionGraph::new`] are numbered in `ConceptId` order, so the
/// numbering does not depend on input order. Nodes added later (streamed
/// updates) are appended.
#[derive(Debug, Clone, Default)]
pub struct UnionGraph {
    concepts: Vec<Concept>,
    index: HashMap<ConceptId, u32>,
    edges: Vec<(u32, u32, String)>,
    edge_set: HashSet<(u32, u32, String)>,
    parents: Vec<Vec<u32>>,
    children: Vec<Vec<u32>>,
    ranks: Vec<u32>,
}

impl UnionGraph {
    /// Union of a source and a target ontology; ranks are recomputed on the
    /// union.
    pub fn new(os: &Ontology, ot: &Ontology) -> Result<Self, OntologyError> {
        let mut all: Vec<Concept> = os.concepts().chain(ot.concepts()).cloned().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        for w in all.windows(2) {
            if w[0].id == w[1].id {
                return Err(OntologyError::DuplicateAcrossRoles(w[0].id.to_string()));
            }
        }
        let mut edges: Vec<&Edge> = os.edges().chain(ot.edges()).collect();
        edges.sort();
        Ok(Self::from_parts(all, edges.into_iter().cloned()))
    }

    /// Builds a graph from concepts and edges that are already known to form
    /// a DAG over those concepts.
    pub(crate) fn from_parts(concepts: Vec<Concept>, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut g = UnionGraph::default();
        for c in concepts {
            g.push_node(c);
        }
        for e in edges {
            let (c, p) = (g.index[&e.child], g.index[&e.parent]);
            g.push_edge(c, p, e.relation);
        }
        g.recompute_ranks();
        g
    }

    /// Validated graph over arbitrary concepts (roles may mix) and edges.
    /// Nodes are numbered in `ConceptId` order.
    pub fn from_concepts(
        concepts: impl IntoIterator<Item = Concept>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, OntologyError> {
        let mut all: Vec<Concept> = concepts.into_iter().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        for w in all.windows(2) {
            if w[0].id == w[1].id {
                return Err(OntologyError::DuplicateConcept(w[0].id.to_string()));
            }
        }
        let index: HashMap<&ConceptId, usize> = all.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort();
        edges.dedup();
        let mut adj = vec![Vec::new(); all.len()];
        for e in &edges {
            match (index.get(&e.child), index.get(&e.parent)) {
                (Some(&c), Some(&p)) => adj[c].push(p),
                _ => {
                    return Err(OntologyError::DanglingEdge {
                        child: e.child.to_string(),
                        parent: e.parent.to_string(),
                    })
                }
            }
        }
        if let Some(cycle) = super::find_cycle(&adj) {
            return Err(OntologyError::Cycle(cycle.into_iter().map(|i| all[i].id.to_string()).collect()));
        }
        Ok(Self::from_parts(all, edges))
    }

    /// Convenience constructor for a single ontology role set.
    pub fn from_ontology(o: &Ontology) -> Self {
        let empty = Ontology::empty(match o.role() {
            Role::Source => Role::Target,
            Role::Target => Role::Source,
        });
        Self::new(o, &empty).expect("a single ontology has no cross-role duplicates")
    }

    pub(crate) fn push_node(&mut self, c: Concept) -> u32 {
        let idx = self.concepts.len() as u32;
        self.index.insert(c.id.clone(), idx);
        self.concepts.push(c);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        self.ranks.push(0);
        idx
    }

    /// Adds an edge; returns false when the exact edge already exists.
    pub(crate) fn push_edge(&mut self, child: u32, parent: u32, relation: String) -> bool {
        let key = (child, parent, relation);
        if self.edge_set.contains(&key) {
            return false;
        }
        if !self.parents[child as usize].contains(&parent) {
            self.parents[child as usize].push(parent);
            self.children[parent as usize].push(child);
        }
        self.edges.push(key.clone());
        self.edge_set.insert(key);
        true
    }

    pub(crate) fn set_rank(&mut self, v: u32, rank: u32) {
        self.ranks[v as usize] = rank;
    }

    pub(crate) fn recompute_ranks(&mut self) {
        self.ranks = ranks_from_children(&self.children);
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

    pub fn index_of(&self, id: &ConceptId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.index.contains_key(id)
    }

    pub fn id(&self, v: u32) -> &ConceptId {
        &self.concepts[v as usize].id
    }

    pub fn concept(&self, v: u32) -> &Concept {
        &self.concepts[v as usize]
    }

    pub fn concept_by_id(&self, id: &ConceptId) -> Option<&Concept> {
        self.index_of(id).map(|v| self.concept(v))
    }

    pub fn concept_mut(&mut self, v: u32) -> &mut Concept {
        &mut self.concepts[v as usize]
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.iter()
    }

    /// Distinct parent nodes of `v`.
    pub fn parents(&self, v: u32) -> &[u32] {
        &self.parents[v as usize]
    }

    /// Distinct child nodes of `v`.
    pub fn children(&self, v: u32) -> &[u32] {
        &self.children[v as usize]
    }

    pub fn rank(&self, v: u32) -> u32 {
        self.ranks[v as usize]
    }

    pub fn max_rank(&self) -> Option<u32> {
        self.ranks.iter().copied().max()
    }

    /// Edges as `(child, parent, relation)` triples of node indices.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, &str)> {
        self.edges.iter().map(|(c, p, r)| (*c, *p, r.as_str()))
    }

    pub fn has_edge(&self, child: u32, parent: u32, relation: &str) -> bool {
        self.edge_set.contains(&(child, parent, relation.to_string()))
    }

    pub fn rank_map(&self) -> RankMap {
        RankMap(self.concepts.iter().map(|c| c.id.clone()).zip(self.ranks.iter().copied()).collect())
    }

    /// All nodes whose concept belongs to `role`.
    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = u32> + '_ {
        (0..self.len() as u32).filter(move |&v| self.id(v).role() == role)
    }

    /// Is `target` reachable from `from` by following parent links?
    pub fn reaches_upward(&self, from: u32, target: u32) -> bool {
        if from == target {
            return true;
        }
        let mut seen = HashSet::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for &p in self.parents(v) {
                if p == target {
                    return true;
                }
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        false
    }
}

/// Union of two ontologies with ranks recomputed on the union.
pub fn union_graph(os: &Ontology, ot: &Ontology) -> Result<UnionGraph, OntologyError> {
    UnionGraph::new(os, ot)
}
