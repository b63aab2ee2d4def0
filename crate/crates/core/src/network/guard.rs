//! Route guard predicates.
//!
//! Grammar:
//!
//! ```text
//! expr := has(<param>) | eq(<param>, <json-literal>)
//!       | and(expr, expr) | or(expr, expr) | not(expr)
//! ```

use std::fmt;

use serde_json::{Map, Value};

use super::schema::is_identifier;

#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Has(String),
    Eq(String, Value),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
    Not(Box<Guard>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("guard parse error at byte {offset}: {message}")]
pub struct GuardParseError {
    pub offset: usize,
    pub message: String,
}

impl Guard {
    pub fn parse(src: &str) -> Result<Guard, GuardParseError> {
        let mut p = Parser { src, pos: 0 };
        let g = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(g)
    }

    pub fn eval(&self, ctx: &Map<String, Value>) -> bool {
        match self {
            Guard::Has(p) => ctx.contains_key(p),
            Guard::Eq(p, v) => ctx.get(p) == Some(v),
            Guard::And(a, b) => a.eval(ctx) && b.eval(ctx),
            Guard::Or(a, b) => a.eval(ctx) || b.eval(ctx),
            Guard::Not(a) => !a.eval(ctx),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Has(p) => write!(f, "has({p})"),
            Guard::Eq(p, v) => write!(f, "eq({p}, {v})"),
            Guard::And(a, b) => write!(f, "and({a}, {b})"),
            Guard::Or(a, b) => write!(f, "or({a}, {b})"),
            Guard::Not(a) => write!(f, "not({a})"),
        }
    }
}

/// Evaluates guard text. Malformed guards evaluate to false with a warning.
pub fn eval_guard_text(src: &str, ctx: &Map<String, Value>) -> bool {
    match Guard::parse(src) {
        Ok(g) => g.eval(ctx),
        Err(e) => {
            tracing::warn!(guard = src, error = %e, "malformed route guard treated as false");
            false
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> GuardParseError {
        GuardParseError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn expect(&mut self, c: char) -> Result<(), GuardParseError> {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, GuardParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let word = &rest[..len];
        if !is_identifier(word) {
            return Err(self.err("expected identifier"));
        }
        self.pos += len;
        Ok(word)
    }

    fn literal(&mut self) -> Result<Value, GuardParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = literal_len(rest).ok_or_else(|| self.err("expected JSON literal"))?;
        let v =
            serde_json::from_str(&rest[..len]).map_err(|_| self.err("expected JSON literal"))?;
        self.pos += len;
        Ok(v)
    }

    fn expr(&mut self) -> Result<Guard, GuardParseError> {
        let op = self.ident()?;
        self.expect('(')?;
        let g = match op {
            "has" => Guard::Has(self.ident()?.to_string()),
            "eq" => {
                let name = self.ident()?.to_string();
                self.expect(',')?;
                Guard::Eq(name, self.literal()?)
            }
            "and" | "or" => {
                let a = self.expr()?;
                self.expect(',')?;
                let b = self.expr()?;
                if op == "and" {
                    Guard::And(Box::new(a), Box::new(b))
                } else {
                    Guard::Or(Box::new(a), Box::new(b))
                }
            }
            "not" => Guard::Not(Box::new(self.expr()?)),
            other => return Err(self.err(format!("unknown operator {other}"))),
        };
        self.expect(')')?;
        Ok(g)
    }
}

/// Byte length of the JSON literal at the start of `s`: a string, a
/// bracketed value, or a bare scalar running up to `,`, `)` or whitespace.
fn literal_len(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => {
                    in_str = false;
                    if depth == 0 {
                        return Some(i + 1);
                    }
                }
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '[' | '{' => depth += 1,
            ']' | '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            ',' | ')' if depth == 0 => return (i > 0).then_some(i),
            c if c.is_whitespace() && depth == 0 => return (i > 0).then_some(i),
            _ => {}
        }
    }
    (depth == 0 && !in_str && !s.is_empty()).then_some(s.len())
}
