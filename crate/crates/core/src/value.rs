//! Slot values and their literal syntax.
//!
//! Literals: decimal integers, reals with a mandatory decimal point,
//! `true`/`false`, double-quoted strings with backslash escapes, element ids
//! (`Kind:index`), `*` for an unbounded upper bound, and `void` as the removal
//! sentinel in update requests.

use std::fmt;

use crate::error::{crud_err, CrudResult};
use crate::kernel::Primitive;
use crate::store::ElementId;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    Ref(ElementId),
    /// `*` in an upper-bound slot.
    Unbounded,
}

impl Value {
    pub fn as_ref_id(&self) -> Option<ElementId> {
        match self {
            Value::Ref(id) => Some(*id),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn matches_primitive(&self, primitive: Primitive) -> bool {
        matches!(
            (self, primitive),
            (Value::Bool(_), Primitive::Boolean)
                | (Value::Int(_), Primitive::Integer)
                | (Value::Real(_), Primitive::Real)
                | (Value::Str(_), Primitive::String)
        )
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => f.write_str(&render_real(*r)),
            Value::Str(s) => write_quoted(f, s),
            Value::Ref(id) => write!(f, "{id}"),
            Value::Unbounded => f.write_str("*"),
        }
    }
}

/// Shortest round-trip decimal that always carries a decimal point.
pub fn render_real(r: f64) -> String {
    let s = format!("{r:?}");
    if s.contains('.') {
        return s;
    }
    match s.find('e') {
        Some(e) => format!("{}.0{}", &s[..e], &s[e..]),
        None => format!("{s}.0"),
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// The value operand of an update request.
#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Void,
    Value(Value),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Void => f.write_str("void"),
            Literal::Value(v) => v.fmt(f),
        }
    }
}

/// Parses one raw literal token (quotes included for strings).
pub fn parse_literal(token: &str) -> CrudResult<Literal> {
    match token {
        "void" => return Ok(Literal::Void),
        "true" => return Ok(Literal::Value(Value::Bool(true))),
        "false" => return Ok(Literal::Value(Value::Bool(false))),
        "*" => return Ok(Literal::Value(Value::Unbounded)),
        _ => {}
    }
    parse_value(token).map(Literal::Value)
}

/// Parses a literal that is not `void`.
pub fn parse_value(token: &str) -> CrudResult<Value> {
    match token {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        "*" => return Ok(Value::Unbounded),
        _ => {}
    }
    if token.starts_with('"') {
        return unquote(token).map(Value::Str);
    }
    if looks_like_id(token) {
        return ElementId::parse(token).map(Value::Ref);
    }
    let digits = token.strip_prefix('-').unwrap_or(token);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return token
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| crud_err!(ParseError, "integer out of range: {token}"));
    }
    let numeric = token
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if numeric && token.contains('.') {
        if let Ok(r) = token.parse::<f64>() {
            if r.is_finite() {
                return Ok(Value::Real(r));
            }
        }
    }
    Err(crud_err!(ParseError, "invalid literal: {token}"))
}

/// `Word:...` is always read as an element id, so that a misspelt kind is
/// reported as such instead of as a generic bad literal.
pub(crate) fn looks_like_id(token: &str) -> bool {
    match token.split_once(':') {
        Some((kind, _)) => !kind.is_empty() && kind.bytes().all(|b| b.is_ascii_alphabetic()),
        None => false,
    }
}

fn unquote(token: &str) -> CrudResult<String> {
    let bad = || crud_err!(ParseError, "invalid string literal: {token}");
    let inner = token
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .filter(|_| token.len() >= 2)
        .ok_or_else(bad)?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('t') => out.push('\t'),
                _ => return Err(bad()),
            },
            '"' => return Err(bad()),
            c => out.push(c),
        }
    }
    Ok(out)
}

/// Splits a line into whitespace-separated tokens, keeping a double-quoted
/// string (with its quotes) as a single token.
pub fn tokenize(line: &str) -> CrudResult<Vec<&str>> {
    let mut tokens = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'"' {
            i = end_of_quoted(bytes, i)
                .ok_or_else(|| crud_err!(ParseError, "unterminated string"))?;
            if i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                return Err(crud_err!(ParseError, "text after closing quote"));
            }
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                if bytes[i] == b'"' {
                    return Err(crud_err!(ParseError, "stray quote"));
                }
                i += 1;
            }
        }
        tokens.push(&line[start..i]);
    }
    Ok(tokens)
}

/// Index one past the closing quote of the string starting at `open`.
pub(crate) fn end_of_quoted(bytes: &[u8], open: usize) -> Option<usize> {
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}
