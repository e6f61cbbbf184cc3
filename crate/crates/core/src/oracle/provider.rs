//! Chat-completion providers: an HTTP client and in-tree mocks.

use std::collections::HashSet;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use super::answer::{OracleAnswer, Verdict};
use crate::ontology::ConceptId;
use crate::util::{fnv1a_parts, unit_interval};

#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub seed: u64,
    /// The concept pair being judged, for providers that answer from ids.
    pub pair: Option<(&'a ConceptId, &'a ConceptId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unusable response: {0}")]
    BadResponse(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) | ProviderError::RateLimited => true,
            ProviderError::Status { status, .. } => *status >= 500,
            ProviderError::BadResponse(_) => false,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError>;
}

/// Answers every question with the same verdict and confidence.
#[derive(Debug, Clone, Copy)]
pub struct FixedProvider {
    pub verdict: Verdict,
    pub confidence: u8,
}

impl FixedProvider {
    pub fn always_yes(confidence: u8) -> Self {
        FixedProvider {
            verdict: Verdict::Yes,
            confidence,
        }
    }

    pub fn always_no(confidence: u8) -> Self {
        FixedProvider {
            verdict: Verdict::No,
            confidence,
        }
    }
}

impl LlmProvider for FixedProvider {
    fn complete(&self, _req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        Ok(OracleAnswer::render(self.verdict, self.confidence))
    }
}

/// Answers from a reference alignment. Each pair's answer is flipped with
/// probability `noise`, decided by a hash of (seed, pair) so the same pair
/// always gets the same answer.
#[derive(Debug, Clone)]
pub struct GoldProvider {
    gold: HashSet<(ConceptId, ConceptId)>,
    pub noise: f64,
    pub seed: u64,
    pub confidence: u8,
}

impl GoldProvider {
    pub fn new(pairs: impl IntoIterator<Item = (ConceptId, ConceptId)>, noise: f64, seed: u64) -> Self {
        GoldProvider {
            gold: pairs.into_iter().map(|(a, b)| ordered(a, b)).collect(),
            noise,
            seed,
            confidence: 9,
        }
    }

    pub fn truth(&self, a: &ConceptId, b: &ConceptId) -> bool {
        self.gold.contains(&ordered(a.clone(), b.clone()))
    }

    /// Whether the noise flips this pair's answer.
    pub fn flipped(&self, a: &ConceptId, b: &ConceptId) -> bool {
        flip_draw(self.seed, a, b) < self.noise
    }

    pub fn answer(&self, a: &ConceptId, b: &ConceptId) -> bool {
        self.truth(a, b) ^ self.flipped(a, b)
    }
}

/// The uniform draw that decides whether a pair's answer is flipped.
pub fn flip_draw(seed: u64, a: &ConceptId, b: &ConceptId) -> f64 {
    let (x, y) = ordered(a.clone(), b.clone());
    unit_interval(fnv1a_parts(&[seed.to_string(), x.to_string(), y.to_string()]))
}

fn ordered(a: ConceptId, b: ConceptId) -> (ConceptId, ConceptId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LlmProvider for GoldProvider {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let (a, b) = req
            .pair
            .ok_or_else(|| ProviderError::BadResponse("gold provider needs the concept pair".into()))?;
        let verdict = if self.answer(a, b) { Verdict::Yes } else { Verdict::No };
        Ok(OracleAnswer::render(verdict, self.confidence))
    }
}

/// Wraps a closure; used by tests to script arbitrary replies.
pub struct FnProvider<F>(pub F);

impl<F> LlmProvider for FnProvider<F>
where
    F: Fn(&ChatRequest<'_>) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        (self.0)(req)
    }
}

/// Chat-completion endpoint speaking `{model, messages, temperature, seed}`.
pub struct HttpProvider {
    endpoint: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, key: Option<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider {
            endpoint: endpoint.into(),
            key,
            client,
        })
    }

    /// Reads `KROMA_LLM_ENDPOINT` and `KROMA_LLM_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self, ProviderError> {
        let endpoint = std::env::var("KROMA_LLM_ENDPOINT")
            .map_err(|_| ProviderError::Transport("KROMA_LLM_ENDPOINT is not set".into()))?;
        Self::new(endpoint, std::env::var("KROMA_LLM_KEY").ok(), timeout)
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "seed": req.seed,
        });
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            return Err(ProviderError::RateLimited);
        }
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ProviderError::Status { status, body: text });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let choice = &value["choices"][0];
        choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("no text in first choice".into()))
    }
}
