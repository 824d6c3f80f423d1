//! Conversion of MultiWOZ annotations into per-user-turn DF expressions.
//!
//! The act source uses only what the user communicated in the turn's dialogue
//! acts. The delta source diffs successive annotated states, so it also picks
//! up values the agent introduced.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AnnotatedState, DialogueAct, DomainSchema, Intent, RawDialogue, Schema};
use crate::lang::{expand, print_canonical, Argument, Expression, ExpressionStyle, Suffix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionSource {
    Acts,
    Delta,
}

impl FromStr for ConversionSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "acts" => Ok(ConversionSource::Acts),
            "delta" => Ok(ConversionSource::Delta),
            other => Err(format!("unknown conversion source {other:?}")),
        }
    }
}

impl fmt::Display for ConversionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConversionSource::Acts => "acts",
            ConversionSource::Delta => "delta",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionOptions {
    pub style: ExpressionStyle,
    pub omit_get_info: bool,
    pub source: ConversionSource,
    /// Fail on acts with unknown domains or slots instead of skipping them.
    #[serde(default)]
    pub strict: bool,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        ConversionOptions {
            style: ExpressionStyle::Simplified,
            omit_get_info: false,
            source: ConversionSource::Acts,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvertedTurn {
    pub dialogue_id: String,
    pub turn_index: usize,
    /// Canonical text; empty when nothing converts.
    pub expression: String,
    pub active_domain: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvertError {
    #[error("unknown act domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown slot {slot:?} for domain {domain}")]
    UnknownSlot { domain: String, slot: String },
}

/// Result of converting one turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnConversion {
    pub expression: Option<Expression>,
    /// Domain the turn is about, carried over when the turn names none.
    pub active_domain: Option<String>,
    /// Domains whose task this turn opens.
    pub opened: Vec<String>,
}

impl TurnConversion {
    pub fn text(&self) -> String {
        self.expression.as_ref().map(print_canonical).unwrap_or_default()
    }
}

fn is_placeholder(value: &str) -> bool {
    let v = value.trim();
    v.is_empty() || v == "?" || v.eq_ignore_ascii_case("none")
}

fn skip_or_fail(strict: bool, err: ConvertError) -> Result<(), ConvertError> {
    if strict {
        return Err(err);
    }
    log::warn!("conversion: {err}; act skipped");
    Ok(())
}

fn revise_expr(domain: &DomainSchema, slots: &BTreeMap<String, String>) -> Expression {
    let args = domain
        .tracked_slots()
        .filter_map(|s| slots.get(s).map(|v| Argument::named(s, Expression::literal(v))))
        .collect();
    Expression::call(&format!("revise_{}", domain.name), Suffix::None, args)
}

fn get_info_expr(domain: &str, fields: &[String]) -> Expression {
    let args = fields
        .iter()
        .map(|f| Argument::positional(Expression::literal(f)))
        .collect();
    Expression::call(&format!("get_{domain}_info"), Suffix::None, args)
}

/// Sequences the simplified parts and renders them in the requested style.
fn finish(schema: &Schema, parts: Vec<Expression>, opened: &[String], style: ExpressionStyle) -> Option<Expression> {
    let simplified = Expression::sequence(parts)?;
    Some(match style {
        ExpressionStyle::Simplified => simplified,
        ExpressionStyle::Original => {
            let opens: BTreeSet<String> = opened.iter().cloned().collect();
            expand(&simplified, schema, &opens).expect("converter emits known heads and slots")
        }
    })
}

/// One user turn from its dialogue acts.
///
/// Revises come first (domains in act order), then information requests,
/// then a closing `General_bye()`/`General_thank()`.
pub fn convert_turn_from_acts(
    schema: &Schema,
    user_acts: &[DialogueAct],
    prior_domains: &BTreeSet<String>,
    active_domain: Option<&str>,
    options: &ConversionOptions,
) -> Result<TurnConversion, ConvertError> {
    let normalizer = schema.normalizer();
    let first_task_domain = user_acts
        .iter()
        .map(|a| a.domain.as_str())
        .find(|d| schema.domain(d).is_some());

    let mut order: Vec<String> = Vec::new();
    let mut revises: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut requests: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let (mut bye, mut thank) = (false, false);
    let mut last_task: Option<String> = None;

    for act in user_acts {
        if act.domain == "general" {
            match act.intent {
                Intent::Bye => bye = true,
                Intent::Thank => thank = true,
                _ => {}
            }
            continue;
        }
        let domain_name = if act.domain == "booking" {
            match last_task.as_deref().or(first_task_domain).or(active_domain) {
                Some(d) => d.to_string(),
                None => {
                    log::debug!("booking act without an active domain skipped");
                    continue;
                }
            }
        } else {
            act.domain.clone()
        };
        let Some(domain) = schema.domain(&domain_name) else {
            skip_or_fail(options.strict, ConvertError::UnknownDomain(act.domain.clone()))?;
            continue;
        };
        last_task = Some(domain_name.clone());

        match act.intent {
            Intent::Inform | Intent::Book => {
                for (raw_slot, value) in &act.slot_values {
                    if is_placeholder(value) {
                        continue;
                    }
                    let slot = domain.canonical_slot(raw_slot);
                    if domain.slot_kind(&slot).is_none() {
                        if !domain.is_requestable(&slot) {
                            skip_or_fail(
                                options.strict,
                                ConvertError::UnknownSlot {
                                    domain: domain_name.clone(),
                                    slot,
                                },
                            )?;
                        }
                        continue;
                    }
                    if !order.contains(&domain_name) {
                        order.push(domain_name.clone());
                    }
                    revises
                        .entry(domain_name.clone())
                        .or_default()
                        .insert(slot, normalizer.normalize(value));
                }
            }
            Intent::Request => {
                for (raw_slot, _) in &act.slot_values {
                    let slot = domain.canonical_slot(raw_slot);
                    if !domain.is_requestable(&slot) {
                        skip_or_fail(
                            options.strict,
                            ConvertError::UnknownSlot {
                                domain: domain_name.clone(),
                                slot,
                            },
                        )?;
                        continue;
                    }
                    if !order.contains(&domain_name) {
                        order.push(domain_name.clone());
                    }
                    let fields = requests.entry(domain_name.clone()).or_default();
                    if !fields.contains(&slot) {
                        fields.push(slot);
                    }
                }
            }
            _ => {}
        }
    }

    let mut parts = Vec::new();
    let mut opened = Vec::new();
    let mut active = active_domain.map(str::to_string);
    for d in &order {
        if let Some(slots) = revises.get(d) {
            parts.push(revise_expr(&schema.domains[d], slots));
            if !prior_domains.contains(d) {
                opened.push(d.clone());
            }
            active = Some(d.clone());
        }
    }
    if !options.omit_get_info {
        for d in &order {
            if let Some(fields) = requests.get(d) {
                parts.push(get_info_expr(d, fields));
            }
        }
    }
    if revises.is_empty() {
        if let Some(d) = order.iter().find(|d| requests.contains_key(*d)) {
            active = Some(d.clone());
        }
    }
    if bye {
        parts.push(Expression::call("General_bye", Suffix::None, vec![]));
    } else if thank {
        parts.push(Expression::call("General_thank", Suffix::None, vec![]));
    }

    Ok(TurnConversion {
        expression: finish(schema, parts, &opened, options.style),
        active_domain: active,
        opened,
    })
}

/// One user turn from the difference between successive annotated states.
/// Each changed slot carries the first listed value; a domain absent from
/// `prev` contributes all of its slots.
pub fn convert_turn_from_delta(
    schema: &Schema,
    prev: &AnnotatedState,
    cur: &AnnotatedState,
    prior_domains: &BTreeSet<String>,
    active_domain: Option<&str>,
    options: &ConversionOptions,
) -> TurnConversion {
    let normalizer = schema.normalizer();
    let mut parts = Vec::new();
    let mut opened = Vec::new();
    let mut active = active_domain.map(str::to_string);
    for (domain_name, slots) in cur.domains() {
        let Some(domain) = schema.domain(domain_name) else {
            log::debug!("delta: unknown domain {domain_name} skipped");
            continue;
        };
        let mut changed = BTreeMap::new();
        for (slot, values) in slots {
            if domain.slot_kind(slot).is_none() {
                log::debug!("delta: unknown slot {domain_name}-{slot} skipped");
                continue;
            }
            let Some(first) = values.first() else {
                continue;
            };
            let before = prev.get(domain_name, slot).and_then(|v| v.first());
            if before.map(|b| normalizer.normalize(b)) != Some(normalizer.normalize(first)) {
                changed.insert(slot.clone(), normalizer.normalize(first));
            }
        }
        if changed.is_empty() {
            continue;
        }
        parts.push(revise_expr(domain, &changed));
        if !prior_domains.contains(domain_name) {
            opened.push(domain_name.clone());
        }
        active = Some(domain_name.clone());
    }
    TurnConversion {
        expression: finish(schema, parts, &opened, options.style),
        active_domain: active,
        opened,
    }
}

/// Converts every user turn, threading the set of opened domains.
pub fn convert_dialogue(
    schema: &Schema,
    dialogue: &RawDialogue,
    options: &ConversionOptions,
) -> Result<Vec<ConvertedTurn>, ConvertError> {
    let mut prior = BTreeSet::new();
    let mut active: Option<String> = None;
    let empty = AnnotatedState::new();
    let mut prev_state = &empty;
    let mut out = Vec::new();
    for turn in dialogue.user_turns() {
        let conv = match options.source {
            ConversionSource::Acts => convert_turn_from_acts(schema, &turn.acts, &prior, active.as_deref(), options)?,
            ConversionSource::Delta => {
                let cur = turn.frames.as_ref().unwrap_or(&empty);
                let conv = convert_turn_from_delta(schema, prev_state, cur, &prior, active.as_deref(), options);
                prev_state = cur;
                conv
            }
        };
        prior.extend(conv.opened.iter().cloned());
        active = conv.active_domain.clone();
        out.push(ConvertedTurn {
            dialogue_id: dialogue.dialogue_id.clone(),
            turn_index: turn.index,
            expression: conv.text(),
            active_domain: active.clone().unwrap_or_default(),
        });
    }
    Ok(out)
}
