//! Line-oriented triple reader shared by ontology and knowledge-graph files.
//!
//! Accepted shape, one statement per line:
//!
//! ```text
//! <http://ex.org/a> <http://ex.org/p> "literal"@en .
//! coyote is_a canine .
//! # comment
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal(String),
}

impl Term {
    pub fn as_str(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Literal(s) => s,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(s) => write_iri(f, s),
            Term::Literal(s) => write_literal(f, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Writes an IRI bare when it is a simple token, bracketed otherwise.
pub fn write_iri(f: &mut impl fmt::Write, iri: &str) -> fmt::Result {
    let bare = !iri.is_empty()
        && !iri.starts_with('"')
        && !iri.starts_with('<')
        && !iri.starts_with('#')
        && iri != "."
        && iri.chars().all(|c| !c.is_whitespace() && c != '<' && c != '>' && c != '"');
    if bare {
        f.write_str(iri)
    } else {
        write!(f, "<{iri}>")
    }
}

pub fn write_literal(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

struct Cursor {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(text: &str, line: usize) -> Self {
        Cursor {
            chars: text.char_indices().collect(),
            pos: 0,
            line,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end_or_comment(&self) -> bool {
        matches!(self.peek(), None | Some('#'))
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of line, expected a term")),
            Some('<') => {
                self.pos += 1;
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c == '>' {
                        let s: String = self.chars[start..self.pos].iter().map(|(_, c)| c).collect();
                        self.pos += 1;
                        if s.is_empty() {
                            return Err(self.err("empty IRI"));
                        }
                        return Ok(Term::Iri(s));
                    }
                    self.pos += 1;
                }
                Err(self.err("unterminated IRI"))
            }
            Some('"') => {
                self.pos += 1;
                let mut s = String::new();
                loop {
                    match self.peek() {
                        None => return Err(self.err("unterminated literal")),
                        Some('"') => {
                            self.pos += 1;
                            break;
                        }
                        Some('\\') => {
                            self.pos += 1;
                            let esc = self.peek().ok_or_else(|| self.err("dangling escape"))?;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '"' => '"',
                                '\\' => '\\',
                                other => return Err(self.err(format!("unknown escape \\{other}"))),
                            });
                            self.pos += 1;
                        }
                        Some(c) => {
                            s.push(c);
                            self.pos += 1;
                        }
                    }
                }
                // language tag or datatype are accepted and dropped
                if self.peek() == Some('@') {
                    while matches!(self.peek(), Some(c) if !c.is_whitespace()) {
                        self.pos += 1;
                    }
                } else if self.peek() == Some('^') {
                    self.pos += 1;
                    if self.peek() != Some('^') {
                        return Err(self.err("expected ^^ before datatype"));
                    }
                    self.pos += 1;
                    self.term()?;
                }
                Ok(Term::Literal(s))
            }
            Some(_) => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if !c.is_whitespace()) {
                    self.pos += 1;
                }
                let mut end = self.pos;
                // a bare token glued to the terminating dot: `a p b.`
                if end - start > 1 && self.chars[end - 1].1 == '.' && self.peek().is_none() {
                    end -= 1;
                    self.pos = end;
                }
                let s: String = self.chars[start..end].iter().map(|(_, c)| c).collect();
                if s == "." {
                    return Err(self.err("expected a term, found '.'"));
                }
                Ok(Term::Iri(s))
            }
        }
    }

    fn finish(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        if self.peek() != Some('.') {
            return Err(self.err("expected '.' terminating the statement"));
        }
        self.pos += 1;
        self.skip_ws();
        if !self.at_end_or_comment() {
            return Err(self.err("trailing content after '.'"));
        }
        Ok(())
    }
}

/// Parses every statement in `input`. Blank lines and `#` comments are skipped.
pub fn parse_triples(input: &str) -> Result<Vec<RawTriple>, SyntaxError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let mut cur = Cursor::new(line, line_no);
        cur.skip_ws();
        if cur.at_end_or_comment() {
            continue;
        }
        let subject = cur.term()?;
        if subject.is_literal() {
            return Err(SyntaxError {
                line: line_no,
                column: 1,
                message: "subject must not be a literal".into(),
            });
        }
        let column = cur.column();
        let predicate = cur.term()?;
        if predicate.is_literal() {
            return Err(SyntaxError {
                line: line_no,
                column,
                message: "predicate must not be a literal".into(),
            });
        }
        let object = cur.term()?;
        cur.finish()?;
        out.push(RawTriple {
            subject,
            predicate,
            object,
            line: line_no,
        });
    }
    Ok(out)
}

/// Local name of an IRI: the part after the last `#`, `/` or `:`.
pub fn local_name(iri: &str) -> &str {
    let cut = iri.rfind(['#', '/', ':']).map(|i| i + 1).unwrap_or(0);
    if cut >= iri.len() {
        iri
    } else {
        &iri[cut..]
    }
}
