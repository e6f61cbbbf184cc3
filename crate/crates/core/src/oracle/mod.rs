//! LLM oracle: prompts, providers, response cache, answer parsing and the
//! combined similarity decision.

pub mod answer;
pub mod client;
pub mod debate;
pub mod decision;
pub mod prompt;
pub mod provider;

use thiserror::Error;

pub use answer::{parse_answer, Malformed, OracleAnswer, Verdict};
pub use client::{LlmClient, OracleConfig, Query, ResponseCache};
pub use debate::{debate, DebateOutcome};
pub use decision::{concept_similarity, rescale_cosine, Combine, Decision, DecisionKind};
pub use prompt::{build_prompt, ConceptContext, PromptConfig, PromptError, PromptQuery};
pub use provider::{FixedProvider, FnProvider, GoldProvider, HttpProvider, LlmProvider, ProviderError};

use crate::ontology::ConceptId;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle provider failed after {attempts} attempt(s): {source}")]
    Provider {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("response cache: {0}")]
    Cache(#[source] std::io::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("malformed oracle answer: {0}")]
    Malformed(#[from] Malformed),
}

impl OracleError {
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            OracleError::Provider {
                source: ProviderError::Transport(_),
                ..
            }
        )
    }
}

const REPAIR_SUFFIX: &str = "\nYour reply must start with Yes or No and contain `Confidence: N` with N an integer from 0 to 10.\n";

/// Asks the oracle about one pair and combines the reply with `sim_score`.
/// A reply that does not parse is retried once with a stricter reminder;
/// if that fails too the decision is uncertain.
pub fn judge_pair(
    client: &LlmClient,
    prompt: &PromptQuery,
    pair: (&ConceptId, &ConceptId),
    sim_score: f64,
    p: Combine,
) -> Result<Decision, OracleError> {
    let text = prompt.render();
    let model = client.config().model_id.clone();
    let first = client.query(&text, Some(pair))?;
    let parsed = match parse_answer(&first, &model) {
        Ok(a) => Ok(a),
        Err(_) => {
            let retry = client.query(&format!("{text}{REPAIR_SUFFIX}"), Some(pair))?;
            parse_answer(&retry, &model)
        }
    };
    Ok(match parsed {
        Ok(answer) => concept_similarity(sim_score, &answer, p),
        Err(e) => {
            let mut d = Decision::uncertain(0.0).with_note(format!("malformed answer: {e}"));
            d.sim_score = sim_score;
            d.f_score = p.gamma * sim_score;
            d
        }
    })
}
