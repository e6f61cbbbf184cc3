//! Prompt construction for pairwise concept questions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::UnionGraph;

/// Everything the prompt says about one concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptContext {
    pub id: String,
    pub labels: Vec<String>,
    pub definition: Option<String>,
    pub parents: Vec<String>,
    pub children: Vec<String>,
    pub ground_set: Vec<String>,
}

impl ConceptContext {
    /// Labels, definition, 1-hop neighbor labels and ground set of node `v`.
    pub fn from_graph(g: &UnionGraph, v: u32) -> Self {
        let c = g.concept(v);
        let mut parents: Vec<String> = g.parents(v).iter().map(|&p| g.concept(p).label().to_string()).collect();
        let mut children: Vec<String> = g.children(v).iter().map(|&p| g.concept(p).label().to_string()).collect();
        parents.sort();
        children.sort();
        ConceptContext {
            id: c.id.to_string(),
            labels: c.labels.clone(),
            definition: c.definition.clone(),
            parents,
            children,
            ground_set: c.ground_set.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptConfig {
    /// Character budget for the context section.
    pub context_budget: usize,
    pub examples: Vec<PromptExample>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            context_budget: 4096,
            examples: vec![
                PromptExample {
                    input: "Concept A: \"heart muscle\" (parent: muscle tissue). Concept B: \"myocardium\" (parent: muscle tissue).".into(),
                    output: "Yes. Confidence: 9".into(),
                },
                PromptExample {
                    input: "Concept A: \"femur\" (parent: long bone). Concept B: \"skull\" (parent: bone of head).".into(),
                    output: "No. Confidence: 9".into(),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptQuery {
    pub task: String,
    pub examples: Vec<PromptExample>,
    pub context: String,
    pub output_spec: String,
    pub self_eval_spec: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt context is {len} characters after truncating ground sets, budget is {budget}")]
    OverBudget { len: usize, budget: usize },
    #[error("prompt needs at least one positive and one negative example")]
    MissingExamples,
}

pub const TASK: &str = "You compare two concepts taken from two different ontologies. \
Decide whether they denote the same kind of thing, using their labels, definitions, \
neighbors in their own hierarchy and the instances listed for them.";

pub const OUTPUT_SPEC: &str = "Reply with Yes or No, followed by `Confidence: N` where N is an integer from 0 to 10.";

pub const SELF_EVAL_SPEC: &str = "Before replying, check that your verdict agrees with the parents, children and \
instances given above. Lower the confidence when that evidence is thin or conflicting.";

const NO_INSTANCES: &str = "no known instances";

fn render_concept(out: &mut String, name: &str, c: &ConceptContext, ground: &[String]) {
    let list = |xs: &[String]| if xs.is_empty() { "none".to_string() } else { xs.join("; ") };
    writeln!(out, "{name} [{}]", c.id).unwrap();
    writeln!(out, "  labels: {}", list(&c.labels)).unwrap();
    if let Some(d) = &c.definition {
        writeln!(out, "  definition: {d}").unwrap();
    }
    writeln!(out, "  parents: {}", list(&c.parents)).unwrap();
    writeln!(out, "  children: {}", list(&c.children)).unwrap();
    if ground.is_empty() {
        writeln!(out, "  instances: {NO_INSTANCES}").unwrap();
    } else {
        writeln!(out, "  instances: {}", ground.join("; ")).unwrap();
    }
}

fn render_context(a: &ConceptContext, ga: &[String], b: &ConceptContext, gb: &[String]) -> String {
    let mut out = String::new();
    render_concept(&mut out, "Concept A", a, ga);
    render_concept(&mut out, "Concept B", b, gb);
    out
}

fn is_positive(e: &PromptExample) -> bool {
    e.output.trim_start().to_ascii_lowercase().starts_with("yes")
}

/// Builds the five-part prompt. Ground-set entries are dropped from the end,
/// always from the currently longer list, until the context fits.
pub fn build_prompt(a: &ConceptContext, b: &ConceptContext, cfg: &PromptConfig) -> Result<PromptQuery, PromptError> {
    if !cfg.examples.iter().any(is_positive) || cfg.examples.iter().all(is_positive) {
        return Err(PromptError::MissingExamples);
    }
    let mut ga: &[String] = &a.ground_set;
    let mut gb: &[String] = &b.ground_set;
    let mut context = render_context(a, ga, b, gb);
    while context.chars().count() > cfg.context_budget {
        if ga.is_empty() && gb.is_empty() {
            return Err(PromptError::OverBudget {
                len: context.chars().count(),
                budget: cfg.context_budget,
            });
        }
        if gb.len() >= ga.len() {
            gb = &gb[..gb.len() - 1];
        } else {
            ga = &ga[..ga.len() - 1];
        }
        context = render_context(a, ga, b, gb);
    }
    Ok(PromptQuery {
        task: TASK.to_string(),
        examples: cfg.examples.clone(),
        context,
        output_spec: OUTPUT_SPEC.to_string(),
        self_eval_spec: SELF_EVAL_SPEC.to_string(),
    })
}

impl PromptQuery {
    /// The five sections in fixed order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "## Task\n{}\n", self.task).unwrap();
        out.push_str("## Examples\n");
        for e in &self.examples {
            writeln!(out, "Input: {}\nOutput: {}", e.input, e.output).unwrap();
        }
        writeln!(out, "\n## Context\n{}", self.context).unwrap();
        writeln!(out, "## Output format\n{}\n", self.output_spec).unwrap();
        write!(out, "## Self-evaluation\n{}\n", self.self_eval_spec).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(id: &str, label: &str, ground: &[&str]) -> ConceptContext {
        ConceptContext {
            id: id.into(),
            labels: vec![label.into()],
            definition: None,
            parents: vec![],
            children: vec![],
            ground_set: ground.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn sections_in_order() {
        let p = build_prompt(&ctx("src:a", "a", &[]), &ctx("tgt:b", "b", &[]), &PromptConfig::default()).unwrap();
        let text = p.render();
        let pos: Vec<usize> = ["## Task", "## Examples", "## Context", "## Output format", "## Self-evaluation"]
            .iter()
            .map(|h| text.find(h).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.matches("no known instances").count(), 2);
    }

    #[test]
    fn examples_need_both_polarities() {
        let mut cfg = PromptConfig::default();
        cfg.examples.truncate(1);
        assert_eq!(build_prompt(&ctx("a", "a", &[]), &ctx("b", "b", &[]), &cfg), Err(PromptError::MissingExamples));
    }

    #[test]
    fn truncates_ground_sets_then_fails() {
        let many: Vec<String> = (0..200).map(|i| format!("instance number {i}")).collect();
        let refs: Vec<&str> = many.iter().map(|s| s.as_str()).collect();
        let cfg = PromptConfig {
            context_budget: 600,
            ..Default::default()
        };
        let p = build_prompt(&ctx("a", "a", &refs), &ctx("b", "b", &refs[..3]), &cfg).unwrap();
        assert!(p.context.chars().count() <= 600);
        assert!(p.context.contains("instance number 0"));
        assert!(!p.context.contains("instance number 199"));
        let tiny = PromptConfig {
            context_budget: 10,
            ..Default::default()
        };
        assert!(matches!(
            build_prompt(&ctx("a", "a", &[]), &ctx("b", "b", &[]), &tiny),
            Err(PromptError::OverBudget { .. })
        ));
    }
}
