use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EquivalenceClass, Partition};
use crate::ontology::{ConceptId, Ontology, OntologyError, UnionGraph};

/// Edge between two classes, with the concept-level edges behind it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuotientEdge {
    /// Id of the child class.
    pub from: ConceptId,
    /// Id of the parent class.
    pub to: ConceptId,
    pub relation: String,
    /// (child, parent) concept pairs, sorted.
    pub provenance: Vec<(ConceptId, ConceptId)>,
}

/// The union graph collapsed by a partition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConceptGraph {
    pub classes: Vec<EquivalenceClass>,
    pub edges: Vec<QuotientEdge>,
}

impl ConceptGraph {
    pub fn partition(&self) -> Partition {
        Partition {
            classes: self.classes.clone(),
        }
    }

    pub fn class(&self, id: &ConceptId) -> Option<&EquivalenceClass> {
        self.classes.iter().find(|c| &c.id == id)
    }

    /// Classes holding at least one source and one target concept.
    pub fn matched_classes(&self) -> impl Iterator<Item = &EquivalenceClass> {
        use crate::ontology::Role;
        self.classes.iter().filter(|c| {
            c.members.iter().any(|m| m.role() == Role::Source) && c.members.iter().any(|m| m.role() == Role::Target)
        })
    }
}

pub fn quotient(g: &UnionGraph, p: &Partition) -> ConceptGraph {
    let mut class_id: BTreeMap<&ConceptId, &ConceptId> = BTreeMap::new();
    for c in &p.classes {
        for m in &c.members {
            class_id.insert(m, &c.id);
        }
    }
    let mut edges: BTreeMap<(ConceptId, ConceptId, String), Vec<(ConceptId, ConceptId)>> = BTreeMap::new();
    for (c, par, rel) in g.edges() {
        let (ci, pi) = (g.id(c), g.id(par));
        let (Some(&from), Some(&to)) = (class_id.get(ci), class_id.get(pi)) else {
            continue;
        };
        edges
            .entry((from.clone(), to.clone(), rel.to_string()))
            .or_default()
            .push((ci.clone(), pi.clone()));
    }
    ConceptGraph {
        classes: p.classes.clone(),
        edges: edges
            .into_iter()
            .map(|((from, to, relation), mut provenance)| {
                provenance.sort();
                QuotientEdge {
                    from,
                    to,
                    relation,
                    provenance,
                }
            })
            .collect(),
    }
}

/// The concept graph before any matching: one class per concept.
pub fn init_concept_graph(os: &Ontology, ot: &Ontology) -> Result<ConceptGraph, OntologyError> {
    let g = UnionGraph::new(os, ot)?;
    let p = Partition::from_groups(&g, (0..g.len() as u32).map(|v| vec![v]));
    Ok(quotient(&g, &p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{parse_ontology, Format, Role};

    #[test]
    fn singletons_mirror_the_union() {
        let os = parse_ontology("a is_a b .\nc is_a b .\n", Format::NTriples, Role::Source).unwrap();
        let ot = parse_ontology("x part_of y .\n", Format::NTriples, Role::Target).unwrap();
        let cg = init_concept_graph(&os, &ot).unwrap();
        assert_eq!(cg.classes.len(), 5);
        assert_eq!(cg.edges.len(), 3);
        assert!(cg.edges.iter().all(|e| e.provenance.len() == 1));
        assert_eq!(cg.matched_classes().count(), 0);
    }

    #[test]
    fn merged_edges_keep_provenance() {
        let os = parse_ontology("a is_a b .\n", Format::NTriples, Role::Source).unwrap();
        let ot = parse_ontology("a is_a b .\n", Format::NTriples, Role::Target).unwrap();
        let g = UnionGraph::new(&os, &ot).unwrap();
        let ix = |c: ConceptId| g.index_of(&c).unwrap();
        let p = Partition::from_groups(
            &g,
            vec![
                vec![ix(ConceptId::source("a")), ix(ConceptId::target("a"))],
                vec![ix(ConceptId::source("b")), ix(ConceptId::target("b"))],
            ],
        );
        let cg = quotient(&g, &p);
        assert_eq!(cg.edges.len(), 1);
        assert_eq!(cg.edges[0].provenance.len(), 2);
        assert_eq!(cg.matched_classes().count(), 2);
    }
}
