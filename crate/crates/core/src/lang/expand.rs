//! Expansion of simplified expressions into the original (`revise(...)`) form.
//!
//! ```text
//! revise_restaurant(name=x)            -> revise(old=Restaurant??(), newMode=overwrite,
//!                                                new=Restaurant?(name=LIKE(Name(x))))
//! revise_restaurant(bookday=thursday)  -> revise(old=RestaurantBookInfo?(), newMode=overwrite,
//!                                                new=RestaurantBookInfo(bookday=thursday))
//! ```
//!
//! A domain listed in `opens` additionally gets the
//! `cont_turn(raise_task(Find<Domain>), ...)` wrapper.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{Argument, Expression, Suffix};
use crate::data::{DomainSchema, Schema, SlotKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("unknown simplified head {0:?}")]
    UnknownHead(String),
    #[error("unknown slot {slot:?} in {head}")]
    UnknownSlot { head: String, slot: String },
    #[error("positional argument in {0}")]
    Positional(String),
}

pub fn expand(expr: &Expression, schema: &Schema, opens: &BTreeSet<String>) -> Result<Expression, ExpandError> {
    let Expression::Call { head, suffix, args } = expr else {
        return Ok(expr.clone());
    };
    if let Some(domain) = head.strip_prefix("revise_") {
        let d = schema
            .domain(domain)
            .ok_or_else(|| ExpandError::UnknownHead(head.clone()))?;
        return expand_revise(head, d, args, opens.contains(domain));
    }
    if let Some(domain) = simplified_get_info_domain(head) {
        if schema.domain(domain).is_none() {
            return Err(ExpandError::UnknownHead(head.clone()));
        }
        return Ok(expr.clone());
    }
    let args = args
        .iter()
        .map(|a| {
            Ok(Argument {
                name: a.name.clone(),
                value: expand(&a.value, schema, opens)?,
            })
        })
        .collect::<Result<Vec<_>, ExpandError>>()?;
    Ok(Expression::Call {
        head: head.clone(),
        suffix: *suffix,
        args,
    })
}

/// `get_restaurant_info` -> `restaurant`.
pub(crate) fn simplified_get_info_domain(head: &str) -> Option<&str> {
    head.strip_prefix("get_")?.strip_suffix("_info")
}

fn expand_revise(head: &str, domain: &DomainSchema, args: &[Argument], opens: bool) -> Result<Expression, ExpandError> {
    let mut informable = Vec::new();
    let mut booking = Vec::new();
    for arg in args {
        let name = arg
            .name
            .as_deref()
            .ok_or_else(|| ExpandError::Positional(head.to_string()))?;
        match domain.slot_kind(name) {
            Some(SlotKind::Informable) => informable.push(Argument::named(name, wrap_value(name, &arg.value))),
            Some(SlotKind::Booking) => booking.push(arg.clone()),
            None => {
                return Err(ExpandError::UnknownSlot {
                    head: head.to_string(),
                    slot: name.to_string(),
                })
            }
        }
    }

    let mut parts = Vec::new();
    if !informable.is_empty() || booking.is_empty() {
        parts.push(revise_call(
            Expression::call(&domain.constraint_type, Suffix::AnyConstraint, vec![]),
            Expression::call(&domain.constraint_type, Suffix::Constraint, informable),
        ));
    }
    if !booking.is_empty() {
        parts.push(revise_call(
            Expression::call(&domain.book_info_type, Suffix::Constraint, vec![]),
            Expression::call(&domain.book_info_type, Suffix::None, booking),
        ));
    }
    let body = Expression::sequence(parts).expect("at least one revise");
    if !opens {
        return Ok(body);
    }
    Ok(Expression::sequence(vec![
        Expression::call(
            "raise_task",
            Suffix::None,
            vec![Argument::positional(Expression::literal(&domain.find_task))],
        ),
        body,
    ])
    .expect("two parts"))
}

fn revise_call(old: Expression, new: Expression) -> Expression {
    Expression::call(
        "revise",
        Suffix::None,
        vec![
            Argument::named("old", old),
            Argument::named("newMode", Expression::literal("overwrite")),
            Argument::named("new", new),
        ],
    )
}

fn wrap_value(slot: &str, value: &Expression) -> Expression {
    if slot == "name" && value.as_literal().is_some() {
        Expression::call(
            "LIKE",
            Suffix::None,
            vec![Argument::positional(Expression::call(
                "Name",
                Suffix::None,
                vec![Argument::positional(value.clone())],
            ))],
        )
    } else {
        value.clone()
    }
}
