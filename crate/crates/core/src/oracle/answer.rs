//! Grammar for oracle replies.
//!
//! The verdict is the first standalone `yes`/`no` word (any case). The
//! confidence is the first number after the first `confidence` word; it must be
//! an integer between 0 and 10.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub verdict: Verdict,
    pub confidence: u8,
    pub raw: String,
    pub model_id: String,
}

impl OracleAnswer {
    /// The canonical reply text the mock providers emit.
    pub fn render(verdict: Verdict, confidence: u8) -> String {
        format!("{verdict}. Confidence: {confidence}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Malformed {
    #[error("no yes/no verdict in reply")]
    NoVerdict,
    #[error("no confidence value in reply")]
    NoConfidence,
    #[error("confidence `{0}` is not an integer between 0 and 10")]
    BadConfidence(String),
}

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Word(&'a str),
    Number(&'a str),
}

fn tokens(raw: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = raw.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        let (start, c) = bytes[i];
        if c.is_alphabetic() {
            while i < bytes.len() && (bytes[i].1.is_alphanumeric() || bytes[i].1 == '_') {
                i += 1;
            }
            let end = bytes.get(i).map_or(raw.len(), |b| b.0);
            out.push(Token::Word(&raw[start..end]));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                i += 1;
            }
            // a fractional part belongs to the number: `8.5` is one token
            if i + 1 < bytes.len() && bytes[i].1 == '.' && bytes[i + 1].1.is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                    i += 1;
                }
            }
            let end = bytes.get(i).map_or(raw.len(), |b| b.0);
            out.push(Token::Number(&raw[start..end]));
        } else {
            i += 1;
        }
    }
    out
}

pub fn parse_answer(raw: &str, model_id: &str) -> Result<OracleAnswer, Malformed> {
    let toks = tokens(raw);
    let verdict = toks
        .iter()
        .find_map(|t| match t {
            Token::Word(w) if w.eq_ignore_ascii_case("yes") => Some(Verdict::Yes),
            Token::Word(w) if w.eq_ignore_ascii_case("no") => Some(Verdict::No),
            _ => None,
        })
        .ok_or(Malformed::NoVerdict)?;
    let kw = toks
        .iter()
        .position(|t| matches!(t, Token::Word(w) if w.eq_ignore_ascii_case("confidence")))
        .ok_or(Malformed::NoConfidence)?;
    let number = toks[kw + 1..]
        .iter()
        .find_map(|t| match t {
            Token::Number(n) => Some(*n),
            _ => None,
        })
        .ok_or(Malformed::NoConfidence)?;
    let confidence = match number.parse::<u8>() {
        Ok(v) if v <= 10 => v,
        _ => return Err(Malformed::BadConfidence(number.to_string())),
    };
    Ok(OracleAnswer {
        verdict,
        confidence,
        raw: raw.to_string(),
        model_id: model_id.to_string(),
    })
}
