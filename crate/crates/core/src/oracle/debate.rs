//! Multi-agent debate over one prompt.
//!
//! Every round each agent sees the question plus the latest reply of every
//! agent from the previous round; older turns are dropped. The final verdict
//! is the majority of the last round, ties going to "no".

use std::fmt::Write as _;

use super::answer::{parse_answer, OracleAnswer, Verdict};
use super::client::LlmClient;
use super::OracleError;
use crate::ontology::ConceptId;

#[derive(Debug, Clone, PartialEq)]
pub struct DebateOutcome {
    pub answer: OracleAnswer,
    /// Queries issued, `agents × rounds`.
    pub queries: usize,
    /// The history block shown in the last round.
    pub last_history: Vec<String>,
}

fn agent_prompt(base: &str, agent: usize, agents: usize, round: usize, rounds: usize, history: &[String]) -> String {
    let mut p = String::from(base);
    write!(p, "\n## Debate\nYou are agent {} of {agents}, round {} of {rounds}.\n", agent + 1, round + 1).unwrap();
    if !history.is_empty() {
        p.push_str("Latest replies from the previous round:\n");
        for (i, h) in history.iter().enumerate() {
            writeln!(p, "Agent {}: {h}", i + 1).unwrap();
        }
        p.push_str("Reconsider your verdict in light of these replies.\n");
    }
    p
}

pub fn debate(
    client: &LlmClient,
    base_prompt: &str,
    pair: Option<(&ConceptId, &ConceptId)>,
    agents: usize,
    rounds: usize,
) -> Result<DebateOutcome, OracleError> {
    assert!(agents > 0 && rounds > 0, "debate needs at least one agent and one round");
    let mut history: Vec<String> = Vec::new();
    let mut shown = Vec::new();
    let mut queries = 0;
    for round in 0..rounds {
        shown = history.clone();
        let mut replies = Vec::with_capacity(agents);
        for agent in 0..agents {
            let prompt = agent_prompt(base_prompt, agent, agents, round, rounds, &history);
            replies.push(client.query(&prompt, pair)?);
            queries += 1;
        }
        history = replies;
    }
    let model = &client.config().model_id;
    let votes: Vec<OracleAnswer> = history.iter().filter_map(|r| parse_answer(r, model).ok()).collect();
    if votes.is_empty() {
        return Err(OracleError::Malformed(super::answer::Malformed::NoVerdict));
    }
    let yes = votes.iter().filter(|a| a.verdict == Verdict::Yes).count();
    let verdict = if 2 * yes > votes.len() { Verdict::Yes } else { Verdict::No };
    let total: u32 = votes.iter().map(|a| u32::from(a.confidence)).sum();
    let confidence = (total / votes.len() as u32) as u8;
    Ok(DebateOutcome {
        answer: OracleAnswer {
            verdict,
            confidence,
            raw: history.join("\n"),
            model_id: model.clone(),
        },
        queries,
        last_history: shown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::client::{OracleConfig, ResponseCache};
    use crate::oracle::provider::{ChatRequest, FixedProvider, FnProvider};

    fn client(p: impl crate::oracle::provider::LlmProvider + 'static) -> LlmClient {
        LlmClient::new(Box::new(p), OracleConfig::default(), ResponseCache::in_memory())
    }

    fn agent_of(prompt: &str) -> usize {
        let i = prompt.find("You are agent ").unwrap() + "You are agent ".len();
        prompt[i..].split(' ').next().unwrap().parse().unwrap()
    }

    #[test]
    fn unanimous_two_agents_three_rounds() {
        let c = client(FixedProvider::always_yes(9));
        let out = debate(&c, "q", None, 2, 3).unwrap();
        assert_eq!((out.answer.verdict, out.answer.confidence), (Verdict::Yes, 9));
        assert_eq!(out.queries, 6);
        assert_eq!(c.calls_made(), 6);
        assert_eq!(out.last_history.len(), 2);
    }

    #[test]
    fn split_vote_goes_to_no() {
        // agents 1 and 2 say yes with 9 and 8, agents 3 and 4 say no with 6 and 10
        let c = client(FnProvider(|r: &ChatRequest<'_>| {
            Ok(match agent_of(r.prompt) {
                1 => "Yes. Confidence: 9",
                2 => "Yes. Confidence: 8",
                3 => "No. Confidence: 6",
                _ => "No. Confidence: 10",
            }
            .to_string())
        }));
        let out = debate(&c, "q", None, 4, 5).unwrap();
        assert_eq!(out.answer.verdict, Verdict::No);
        assert_eq!(out.answer.confidence, (9 + 8 + 6 + 10) / 4);
        assert_eq!(out.queries, 20);
    }

    #[test]
    fn history_holds_latest_reply_per_agent() {
        let c = client(FnProvider(|r: &ChatRequest<'_>| {
            let round = r.prompt.matches("Agent ").count();
            Ok(format!("Yes. Confidence: 9 (saw {round})"))
        }));
        let out = debate(&c, "q", None, 2, 3).unwrap();
        assert_eq!(out.last_history.len(), 2);
        assert!(out.last_history.iter().all(|h| h.ends_with("(saw 2)")));
    }

    #[test]
    fn all_abstaining_is_malformed() {
        let c = client(FnProvider(|_: &ChatRequest<'_>| Ok("Hard to say.".to_string())));
        assert!(matches!(debate(&c, "q", None, 2, 3), Err(OracleError::Malformed(_))));
    }
}
