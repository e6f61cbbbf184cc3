//! Ontology matching engine.
//!
//! Two ontologies are merged into one DAG, each concept is enriched with
//! entities retrieved from a knowledge graph, candidate pairs are scored with
//! blended structural/text embeddings and double-checked by an LLM oracle, and
//! the resulting concept-similarity decisions drive a bisimulation refinement
//! that yields the smallest concept graph over both ontologies.

pub mod embed;
pub mod ontology;
pub mod oracle;
pub mod pipeline;
pub mod refine;
pub mod retrieval;
pub mod service;
pub mod util;
