//! Combining embedding similarity and the oracle verdict into a decision.

use serde::{Deserialize, Serialize};

use super::answer::{OracleAnswer, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Similar,
    Dissimilar,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    /// `γ·sim + (1 − γ)·q`; for uncertain answers `q` counts as 0.
    pub f_score: f64,
    pub sim_score: f64,
    /// Oracle confidence on the 0–10 scale.
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<OracleAnswer>,
    /// Embedding similarity clears the threshold but the oracle confidently
    /// said no.
    #[serde(default)]
    pub disagreement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Decision {
    fn bare(kind: DecisionKind, f_score: f64, confidence: f64) -> Self {
        Decision {
            kind,
            f_score,
            sim_score: f_score,
            confidence,
            answer: None,
            disagreement: false,
            note: None,
        }
    }

    pub fn similar() -> Self {
        Self::bare(DecisionKind::Similar, 1.0, 10.0)
    }

    pub fn dissimilar() -> Self {
        Self::bare(DecisionKind::Dissimilar, 0.0, 10.0)
    }

    pub fn uncertain(confidence: f64) -> Self {
        Self::bare(DecisionKind::Uncertain, 0.0, confidence)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_similar(&self) -> bool {
        self.kind == DecisionKind::Similar
    }
}

/// Parameters of the combination rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combine {
    pub gamma: f64,
    pub threshold: f64,
    pub confidence_threshold: f64,
}

/// Rescales a cosine in [-1, 1] to [0, 1].
pub fn rescale_cosine(cos: f64) -> f64 {
    ((cos + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Tolerance for the threshold comparison, so that e.g. 0.5·0.7 + 0.5 is
/// not rejected against 0.85 over a rounding error.
const EPS: f64 = 1e-12;

pub fn concept_similarity(sim_score: f64, answer: &OracleAnswer, p: Combine) -> Decision {
    let confident = f64::from(answer.confidence) >= p.confidence_threshold;
    let q = match (confident, answer.verdict) {
        (true, Verdict::Yes) => Some(1.0),
        (true, Verdict::No) => Some(0.0),
        (false, _) => None,
    };
    let f = p.gamma * sim_score + (1.0 - p.gamma) * q.unwrap_or(0.0);
    let kind = match q {
        None => DecisionKind::Uncertain,
        Some(_) if f + EPS >= p.threshold => DecisionKind::Similar,
        Some(_) => DecisionKind::Dissimilar,
    };
    Decision {
        kind,
        f_score: f,
        sim_score,
        confidence: f64::from(answer.confidence),
        answer: Some(answer.clone()),
        disagreement: confident && answer.verdict == Verdict::No && sim_score + EPS >= p.threshold,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ans(v: Verdict, c: u8) -> OracleAnswer {
        OracleAnswer {
            verdict: v,
            confidence: c,
            raw: OracleAnswer::render(v, c),
            model_id: "m".into(),
        }
    }

    const P: Combine = Combine {
        gamma: 0.5,
        threshold: 0.85,
        confidence_threshold: 8.5,
    };

    #[test]
    fn documented_examples() {
        let d = concept_similarity(0.9, &ans(Verdict::Yes, 9), P);
        assert_eq!(d.kind, DecisionKind::Similar);
        assert!((d.f_score - 0.95).abs() < 1e-12);
        let d = concept_similarity(0.9, &ans(Verdict::No, 10), P);
        assert_eq!(d.kind, DecisionKind::Dissimilar);
        assert!((d.f_score - 0.45).abs() < 1e-12);
        assert!(d.disagreement);
        assert_eq!(concept_similarity(0.9, &ans(Verdict::Yes, 7), P).kind, DecisionKind::Uncertain);
    }

    #[test]
    fn gate_is_inclusive_at_integer_nine() {
        assert_eq!(concept_similarity(1.0, &ans(Verdict::Yes, 8), P).kind, DecisionKind::Uncertain);
        assert_eq!(concept_similarity(1.0, &ans(Verdict::Yes, 9), P).kind, DecisionKind::Similar);
    }

    proptest! {
        #[test]
        fn monotone_in_sim(a in 0.0f64..=1.0, b in 0.0f64..=1.0, yes in any::<bool>(), c in 0u8..=10) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let v = if yes { Verdict::Yes } else { Verdict::No };
            let dl = concept_similarity(lo, &ans(v, c), P);
            let dh = concept_similarity(hi, &ans(v, c), P);
            prop_assert!(dl.f_score <= dh.f_score);
            if dl.kind == DecisionKind::Similar {
                prop_assert_eq!(dh.kind, DecisionKind::Similar);
            }
        }
    }
}
