use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::triples::{self, local_name, parse_triples, Term};
use super::{Concept, ConceptId, Edge, Ontology, OntologyError, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `{concepts: [...], edges: [...]}` document.
    EdgeJson,
    /// Line-oriented `subject predicate object .` subset.
    NTriples,
}

impl Format {
    /// Picks a format from a file extension, defaulting to triples.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::EdgeJson,
            _ => Format::NTriples,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" | "edge-json" => Ok(Format::EdgeJson),
            "nt" | "ntriples" | "ntriples-subset" => Ok(Format::NTriples),
            other => Err(format!("unknown ontology format `{other}`")),
        }
    }
}

pub(crate) fn is_label_predicate(pred: &str) -> bool {
    matches!(
        local_name(pred),
        "label" | "prefLabel" | "altLabel" | "hasExactSynonym" | "hasRelatedSynonym" | "synonym"
    )
}

pub(crate) fn is_definition_predicate(pred: &str) -> bool {
    matches!(local_name(pred), "definition" | "IAO_0000115" | "comment")
}

fn is_type_predicate(pred: &str) -> bool {
    pred == "a" || local_name(pred) == "type"
}

pub fn parse_ontology(input: &str, format: Format, role: Role) -> Result<Ontology, OntologyError> {
    match format {
        Format::EdgeJson => parse_json(input, role),
        Format::NTriples => parse_nt(input, role),
    }
}

#[derive(Serialize, Deserialize)]
struct JsonConcept {
    id: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    definition: Option<String>,
}

fn default_relation() -> String {
    "is_a".to_string()
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    child: String,
    parent: String,
    #[serde(default = "default_relation")]
    relation: String,
}

#[derive(Serialize, Deserialize)]
struct JsonOntology {
    concepts: Vec<JsonConcept>,
    #[serde(default)]
    edges: Vec<JsonEdge>,
}

fn parse_json(input: &str, role: Role) -> Result<Ontology, OntologyError> {
    let doc: JsonOntology = serde_json::from_str(input).map_err(|e| OntologyError::Json(e.to_string()))?;
    let concepts = doc.concepts.into_iter().map(|c| {
        let mut concept = Concept::new(ConceptId::new(role, c.id), c.labels);
        concept.definition = c.definition;
        concept
    });
    let edges = doc
        .edges
        .into_iter()
        .map(|e| Edge::new(ConceptId::new(role, e.child), ConceptId::new(role, e.parent), e.relation));
    Ontology::new(role, concepts, edges)
}

#[derive(Default)]
struct Draft {
    labels: Vec<String>,
    definition: Option<String>,
}

fn parse_nt(input: &str, role: Role) -> Result<Ontology, OntologyError> {
    let triples = parse_triples(input)?;
    let mut drafts: BTreeMap<String, Draft> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for t in triples {
        let subject = t.subject.as_str().to_string();
        let pred = t.predicate.as_str();
        match &t.object {
            Term::Literal(text) if is_label_predicate(pred) => {
                let d = drafts.entry(subject).or_default();
                if !d.labels.contains(text) {
                    d.labels.push(text.clone());
                }
            }
            Term::Literal(text) if is_definition_predicate(pred) => {
                let d = drafts.entry(subject).or_default();
                d.definition.get_or_insert_with(|| text.clone());
            }
            Term::Literal(_) => {}
            Term::Iri(obj) if is_type_predicate(pred) => {
                if local_name(obj) == "Class" {
                    drafts.entry(subject).or_default();
                }
            }
            Term::Iri(obj) => {
                drafts.entry(subject.clone()).or_default();
                drafts.entry(obj.clone()).or_default();
                edges.insert(Edge::new(
                    ConceptId::new(role, subject),
                    ConceptId::new(role, obj.clone()),
                    local_name(pred).to_string(),
                ));
            }
        }
    }
    let concepts = drafts.into_iter().map(|(iri, d)| {
        let mut c = Concept::new(ConceptId::new(role, iri), d.labels);
        c.definition = d.definition;
        c
    });
    Ontology::new(role, concepts, edges)
}

/// Serializes to the JSON document form.
pub fn to_json(o: &Ontology) -> String {
    let doc = JsonOntology {
        concepts: o
            .concepts()
            .map(|c| JsonConcept {
                id: c.id.iri().to_string(),
                labels: c.labels.clone(),
                definition: c.definition.clone(),
            })
            .collect(),
        edges: o
            .edges()
            .map(|e| JsonEdge {
                child: e.child.iri().to_string(),
                parent: e.parent.iri().to_string(),
                relation: e.relation.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("ontology document serializes")
}

/// Serializes to the triple form. Every concept gets its label triples, so
/// isolated concepts survive a round trip.
pub fn to_ntriples(o: &Ontology) -> String {
    let mut out = String::new();
    for c in o.concepts() {
        for label in &c.labels {
            triples::write_iri(&mut out, c.id.iri()).unwrap();
            out.push_str(" label ");
            triples::write_literal(&mut out, label).unwrap();
            out.push_str(" .\n");
        }
        if let Some(def) = &c.definition {
            triples::write_iri(&mut out, c.id.iri()).unwrap();
            out.push_str(" definition ");
            triples::write_literal(&mut out, def).unwrap();
            out.push_str(" .\n");
        }
    }
    for e in o.edges() {
        triples::write_iri(&mut out, e.child.iri()).unwrap();
        out.push(' ');
        triples::write_iri(&mut out, &e.relation).unwrap();
        out.push(' ');
        triples::write_iri(&mut out, e.parent.iri()).unwrap();
        writeln!(out, " .").unwrap();
    }
    out
}

impl Ontology {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn to_ntriples(&self) -> String {
        to_ntriples(self)
    }
}
