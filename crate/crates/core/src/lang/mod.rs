//! DF expressions: AST, parser, canonical printer and the simplified-form
//! expansion.

mod expand;
mod parser;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use expand::{expand, ExpandError};
pub use parser::{parse, ParseError};

/// Type-constraint suffix attached to a call head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suffix {
    None,
    /// `Head?(...)`
    Constraint,
    /// `Head??(...)`
    AnyConstraint,
}

impl Suffix {
    pub fn as_str(self) -> &'static str {
        match self {
            Suffix::None => "",
            Suffix::Constraint => "?",
            Suffix::AnyConstraint => "??",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expression {
    Call {
        head: String,
        suffix: Suffix,
        args: Vec<Argument>,
    },
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Argument {
    pub name: Option<String>,
    pub value: Expression,
}

impl Argument {
    pub fn named(name: &str, value: Expression) -> Argument {
        Argument {
            name: Some(name.to_string()),
            value,
        }
    }

    pub fn positional(value: Expression) -> Argument {
        Argument { name: None, value }
    }
}

impl Expression {
    pub fn call(head: &str, suffix: Suffix, args: Vec<Argument>) -> Expression {
        Expression::Call {
            head: head.to_string(),
            suffix,
            args,
        }
    }

    pub fn literal(text: &str) -> Expression {
        Expression::Literal(text.to_string())
    }

    pub fn head(&self) -> Option<&str> {
        match self {
            Expression::Call { head, .. } => Some(head),
            Expression::Literal(_) => None,
        }
    }

    pub fn args(&self) -> &[Argument] {
        match self {
            Expression::Call { args, .. } => args,
            Expression::Literal(_) => &[],
        }
    }

    pub fn arg(&self, name: &str) -> Option<&Expression> {
        self.args()
            .iter()
            .find(|a| a.name.as_deref() == Some(name))
            .map(|a| &a.value)
    }

    pub fn positional(&self, index: usize) -> Option<&Expression> {
        self.args()
            .iter()
            .filter(|a| a.name.is_none())
            .nth(index)
            .map(|a| &a.value)
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            Expression::Literal(s) => Some(s),
            Expression::Call { .. } => None,
        }
    }

    /// `cont_turn(a, cont_turn(b, c))` for `[a, b, c]`; `None` when empty.
    pub fn sequence(mut parts: Vec<Expression>) -> Option<Expression> {
        let mut acc = parts.pop()?;
        while let Some(prev) = parts.pop() {
            acc = Expression::call(
                "cont_turn",
                Suffix::None,
                vec![Argument::positional(prev), Argument::positional(acc)],
            );
        }
        Some(acc)
    }

    /// Inverse of [`Expression::sequence`].
    pub fn flatten_sequence(&self) -> Vec<&Expression> {
        match self {
            Expression::Call { head, args, .. } if head == "cont_turn" && args.len() == 2 => {
                let mut out = args[0].value.flatten_sequence();
                out.extend(args[1].value.flatten_sequence());
                out
            }
            other => vec![other],
        }
    }
}

/// Whether an unquoted literal would re-parse to the same text.
fn needs_quotes(text: &str) -> bool {
    if text.is_empty() {
        return true;
    }
    if text.split_whitespace().collect::<Vec<_>>().join(" ") != text {
        return true;
    }
    if text.contains(['"', ',', '(', ')', '=', '\\']) {
        return true;
    }
    false
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Literal(text) if needs_quotes(text) => {
                f.write_str("\"")?;
                for c in text.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            Expression::Literal(text) => f.write_str(text),
            Expression::Call { head, suffix, args } => {
                write!(f, "{head}{}(", suffix.as_str())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    if let Some(name) = &arg.name {
                        write!(f, "{name}=")?;
                    }
                    write!(f, "{}", arg.value)?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn print_canonical(expr: &Expression) -> String {
    expr.to_string()
}

/// Turn-level exact match after canonicalization. An unparseable hypothesis
/// is a mismatch; an unparseable reference is an error.
pub fn exact_match(hypothesis: &str, reference: &str) -> Result<bool, ParseError> {
    let reference = parse(reference)?;
    Ok(match parse(hypothesis) {
        Ok(h) => print_canonical(&h) == print_canonical(&reference),
        Err(_) => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionStyle {
    Original,
    Simplified,
}

impl fmt::Display for ExpressionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpressionStyle::Original => "original",
            ExpressionStyle::Simplified => "simplified",
        })
    }
}

impl FromStr for ExpressionStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(ExpressionStyle::Original),
            "simplified" => Ok(ExpressionStyle::Simplified),
            other => Err(format!("unknown style {other:?}")),
        }
    }
}
