//! Recursive descent parser for DF expressions.
//!
//! ```text
//! expr    := call | literal
//! call    := IDENT ['?' | '??'] '(' [arg (',' arg)*] ')'
//! arg     := [IDENT '='] expr
//! literal := '"' escaped '"' | run of text without top-level ',' '(' ')'
//! ```

use std::collections::BTreeSet;

use thiserror::Error;

use super::{Argument, Expression, Suffix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("unbalanced parentheses at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("empty argument at byte {offset}")]
    EmptyArgument { offset: usize },
    #[error("duplicate argument name {name:?} at byte {offset}")]
    DuplicateArgument { name: String, offset: usize },
    #[error("positional argument after named arguments at byte {offset}")]
    PositionalAfterNamed { offset: usize },
    #[error("unterminated string at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("unexpected {found:?} at byte {offset}")]
    Unexpected { found: char, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Empty => 0,
            ParseError::Unbalanced { offset }
            | ParseError::EmptyArgument { offset }
            | ParseError::DuplicateArgument { offset, .. }
            | ParseError::PositionalAfterNamed { offset }
            | ParseError::UnterminatedString { offset }
            | ParseError::Unexpected { offset, .. } => *offset,
        }
    }
}

pub fn parse(text: &str) -> Result<Expression, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(ParseError::Empty);
    }
    let expr = p.expr()?;
    p.skip_ws();
    match p.peek() {
        None => Ok(expr),
        Some(b')') => Err(ParseError::Unbalanced { offset: p.pos }),
        Some(_) => Err(p.unexpected()),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn unexpected(&self) -> ParseError {
        let found = self.src[self.pos..].chars().next().unwrap_or('\0');
        ParseError::Unexpected {
            found,
            offset: self.pos,
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.pos += 1,
            _ => return None,
        }
        while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
            self.pos += 1;
        }
        Some(&self.src[start..self.pos])
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        self.skip_ws();
        if self.peek() == Some(b'"') {
            return self.quoted();
        }
        if let Some((head, suffix)) = self.call_head() {
            return self.call(head, suffix);
        }
        self.literal()
    }

    /// Consumes `IDENT [?|??] (` when present; otherwise leaves the position untouched.
    fn call_head(&mut self) -> Option<(&'a str, Suffix)> {
        let start = self.pos;
        let head = self.ident();
        if let Some(head) = head {
            self.skip_ws();
            let suffix = if self.bytes()[self.pos..].starts_with(b"??") {
                self.pos += 2;
                Suffix::AnyConstraint
            } else if self.peek() == Some(b'?') {
                self.pos += 1;
                Suffix::Constraint
            } else {
                Suffix::None
            };
            self.skip_ws();
            if self.peek() == Some(b'(') {
                return Some((head, suffix));
            }
        }
        self.pos = start;
        None
    }

    fn call(&mut self, head: &str, suffix: Suffix) -> Result<Expression, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let mut args: Vec<Argument> = Vec::new();
        let mut names = BTreeSet::new();
        self.skip_ws();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(Expression::call(head, suffix, args));
        }
        loop {
            self.skip_ws();
            let arg_start = self.pos;
            match self.peek() {
                Some(b',') | Some(b')') => return Err(ParseError::EmptyArgument { offset: self.pos }),
                None => return Err(ParseError::Unbalanced { offset: open }),
                _ => {}
            }
            let name = self.arg_name()?;
            let value = self.expr()?;
            match &name {
                Some(n) => {
                    if !names.insert(n.clone()) {
                        return Err(ParseError::DuplicateArgument {
                            name: n.clone(),
                            offset: arg_start,
                        });
                    }
                }
                None if !names.is_empty() => return Err(ParseError::PositionalAfterNamed { offset: arg_start }),
                None => {}
            }
            args.push(Argument { name, value });
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(Expression::call(head, suffix, args));
                }
                None => return Err(ParseError::Unbalanced { offset: open }),
                Some(_) => return Err(self.unexpected()),
            }
        }
    }

    /// Consumes `IDENT =` when present.
    fn arg_name(&mut self) -> Result<Option<String>, ParseError> {
        let start = self.pos;
        if let Some(name) = self.ident() {
            self.skip_ws();
            if self.peek() == Some(b'=') {
                self.pos += 1;
                self.skip_ws();
                return match self.peek() {
                    Some(b',') | Some(b')') | None => Err(ParseError::EmptyArgument { offset: self.pos }),
                    _ => Ok(Some(name.to_string())),
                };
            }
        }
        self.pos = start;
        Ok(None)
    }

    fn literal(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b',' | b')' => break,
                b'(' => {
                    return Err(ParseError::Unexpected {
                        found: '(',
                        offset: self.pos,
                    })
                }
                _ => self.pos += 1,
            }
        }
        let text = self.src[start..self.pos]
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            return Err(ParseError::EmptyArgument { offset: start });
        }
        Ok(Expression::Literal(text))
    }

    fn quoted(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(Expression::Literal(out));
                }
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(ParseError::UnterminatedString { offset: start })
    }
}
