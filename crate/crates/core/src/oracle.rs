//! Agent oracle: off, full and partial modes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Database, DialogueAct, EntityRecord, Intent, RawDialogue, Schema};
use crate::domains::{BookingRecord, SelectedBy, Suggestion};
use crate::engine::{DfException, DialogueContext, ExceptionKind, TurnOutcome, Value};
use crate::templates::Templates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Off,
    Full,
    Partial,
}

impl FromStr for OracleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(OracleMode::Off),
            "full" => Ok(OracleMode::Full),
            "partial" => Ok(OracleMode::Partial),
            other => Err(format!("unknown oracle mode {other:?}")),
        }
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Off => "off",
            OracleMode::Full => "full",
            OracleMode::Partial => "partial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurnInfo {
    pub acts: Vec<DialogueAct>,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("no recorded agent turn for user turn {turn}")]
    MissingAgentTurn { turn: usize },
}

/// Per-dialogue view of the recorded agent. Turns are numbered by user-turn
/// ordinal: entry `k` is the agent reply to the `k`-th user turn.
#[derive(Debug, Clone)]
pub struct OracleHandle {
    pub mode: OracleMode,
    agent_turns: Vec<AgentTurnInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPoint {
    Recommendation,
    Booking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Decision {
    RecommendEntity(String),
    BookingReference(String),
    BookingFailed(String),
    NoDecision,
}

impl OracleHandle {
    pub fn off() -> OracleHandle {
        OracleHandle {
            mode: OracleMode::Off,
            agent_turns: Vec::new(),
        }
    }

    pub fn new(mode: OracleMode, agent_turns: Vec<AgentTurnInfo>) -> OracleHandle {
        let agent_turns = if mode == OracleMode::Off {
            Vec::new()
        } else {
            agent_turns
        };
        OracleHandle { mode, agent_turns }
    }

    /// Builds the handle from a loaded dialogue. Full and partial modes need
    /// an agent reply after every user turn.
    pub fn from_dialogue(mode: OracleMode, dialogue: &RawDialogue) -> Result<OracleHandle, OracleError> {
        if mode == OracleMode::Off {
            return Ok(OracleHandle::off());
        }
        let mut turns = Vec::new();
        for (k, user) in dialogue.user_turns().enumerate() {
            let reply = dialogue
                .agent_reply(user.index)
                .ok_or(OracleError::MissingAgentTurn { turn: k })?;
            turns.push(AgentTurnInfo {
                acts: reply.acts.clone(),
                utterance: reply.utterance.clone(),
            });
        }
        Ok(OracleHandle::new(mode, turns))
    }

    pub fn agent_turn(&self, turn: usize) -> Result<Option<&AgentTurnInfo>, OracleError> {
        if self.mode == OracleMode::Off {
            return Ok(None);
        }
        self.agent_turns
            .get(turn)
            .map(Some)
            .ok_or(OracleError::MissingAgentTurn { turn })
    }

    pub fn len(&self) -> usize {
        self.agent_turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_turns.is_empty()
    }
}

/// Scans the agent reply to `turn` for a decision applicable to `point`.
///
/// Only acts of `domain` (or of the `booking` act domain) count. Booking
/// references win over failures.
pub fn decide(
    oracle: &OracleHandle,
    schema: &Schema,
    turn: usize,
    domain: &str,
    point: DecisionPoint,
) -> Result<Decision, OracleError> {
    let Some(info) = oracle.agent_turn(turn)? else {
        return Ok(Decision::NoDecision);
    };
    let relevant = info.acts.iter().filter(|a| a.domain == domain || a.domain == "booking");
    match point {
        DecisionPoint::Booking => {
            let mut failed = None;
            for act in relevant {
                match act.intent {
                    Intent::OfferBooked | Intent::Book => {
                        if let Some(r) = act.value("ref").filter(|r| !r.is_empty()) {
                            return Ok(Decision::BookingReference(r.to_string()));
                        }
                    }
                    Intent::NoBook if failed.is_none() => failed = Some(act_reason(act)),
                    _ => {}
                }
            }
            Ok(failed.map_or(Decision::NoDecision, Decision::BookingFailed))
        }
        DecisionPoint::Recommendation => {
            let id_slot = schema
                .domain(domain)
                .and_then(|d| d.id_slot.as_deref())
                .unwrap_or("name");
            let found = relevant
                .filter(|a| a.domain == domain)
                .filter(|a| matches!(a.intent, Intent::Recommend | Intent::Select | Intent::Inform))
                .find_map(|a| a.value(id_slot).filter(|v| !v.is_empty()));
            Ok(found.map_or(Decision::NoDecision, |v| Decision::RecommendEntity(v.to_string())))
        }
    }
}

fn act_reason(act: &DialogueAct) -> String {
    let parts: Vec<String> = act.slot_values.iter().map(|(s, v)| format!("{s}={v}")).collect();
    if parts.is_empty() {
        "nobook".to_string()
    } else {
        format!("nobook {}", parts.join(", "))
    }
}

/// Car type and phone offered by the agent for a taxi booking, if any.
pub fn taxi_details(oracle: &OracleHandle, turn: usize) -> Result<(Option<String>, Option<String>), OracleError> {
    let Some(info) = oracle.agent_turn(turn)? else {
        return Ok((None, None));
    };
    let taxi_acts = || info.acts.iter().filter(|a| a.domain == "taxi");
    let find = |slot: &str| taxi_acts().find_map(|a| a.value(slot)).map(str::to_string);
    Ok((find("type"), find("phone")))
}

/// Feeds agent-communicated information into the context after a user turn.
///
/// Name-bearing recommend/select/inform/offerbook acts update the pending
/// suggestion, booked acts with a reference finalize the booking, and
/// nooffer records a no_match. Acts about domains without a task are
/// skipped. User constraint slots are never touched.
pub fn apply_agent_acts(ctx: &mut DialogueContext, db: &Database, info: &AgentTurnInfo) {
    let schema = db.schema();
    let mut suggested: BTreeSet<String> = BTreeSet::new();
    for act in &info.acts {
        let domain = if act.domain == "booking" {
            match &ctx.active_domain {
                Some(d) => d.clone(),
                None => continue,
            }
        } else {
            act.domain.clone()
        };
        let Some(d) = schema.domain(&domain) else {
            continue;
        };
        let Some(&task_id) = ctx.tasks.get(&domain) else {
            log::debug!("agent act for unopened domain {domain} skipped");
            continue;
        };
        let Some(Value::Task(state)) = ctx.nodes[task_id].result.clone() else {
            continue;
        };
        match act.intent {
            Intent::Recommend | Intent::Select | Intent::Inform | Intent::OfferBook => {
                let Some(id_slot) = d.id_slot.as_deref() else {
                    continue;
                };
                let Some(name) = act.value(id_slot).filter(|v| !v.is_empty()) else {
                    continue;
                };
                if !suggested.insert(domain.clone()) {
                    continue;
                }
                let all: Vec<&EntityRecord> = db.records(&domain).iter().collect();
                let record = db
                    .find_by_id(&domain, name)
                    .or_else(|| crate::domains::like_match(db, d, &all, name));
                let Some(record) = record else {
                    log::debug!("agent named unknown {domain} entity {name:?}");
                    continue;
                };
                if state.selected.as_ref().is_some_and(|s| &s.record == record) {
                    continue;
                }
                ctx.suggestions.insert(
                    domain.clone(),
                    Suggestion {
                        record: record.clone(),
                        source: SelectedBy::OracleRecommendation,
                    },
                );
            }
            Intent::OfferBooked | Intent::Book => {
                let Some(reference) = act.value("ref").filter(|r| !r.is_empty()) else {
                    continue;
                };
                let existing = ctx.bookings.iter().rev().find(|b| b.domain == domain).cloned();
                match existing {
                    Some(b) if b.reference == reference => {}
                    Some(mut b) => {
                        b.reference = reference.to_string();
                        ctx.bookings.push(b);
                    }
                    None => {
                        let entity = state
                            .selected
                            .as_ref()
                            .map(|s| &s.record)
                            .or(ctx.suggestions.get(&domain).map(|s| &s.record));
                        if let (Some(record), true) = (entity, state.book.is_complete(d)) {
                            let id = d.id_slot.as_deref().and_then(|s| record.get(s)).unwrap_or("");
                            ctx.bookings.push(BookingRecord {
                                domain: domain.clone(),
                                entity_id: id.to_string(),
                                booking_slots: state.book.slots.clone(),
                                reference: reference.to_string(),
                            });
                        }
                    }
                }
            }
            Intent::NoOffer => {
                ctx.suggestions.remove(&domain);
                if !ctx
                    .exceptions
                    .iter()
                    .any(|e| e.domain.as_deref() == Some(domain.as_str()) && e.kind == ExceptionKind::NoMatch)
                {
                    ctx.exceptions.retain(|e| e.domain.as_deref() != Some(domain.as_str()));
                    ctx.exceptions.insert(
                        0,
                        DfException {
                            kind: ExceptionKind::NoMatch,
                            prompt: info.utterance.clone(),
                            source_node: task_id,
                            missing_slots: Vec::new(),
                            domain: Some(domain.clone()),
                            turn: ctx.turn_roots.len().saturating_sub(1),
                        },
                    );
                }
            }
            _ => {}
        }
    }
}

/// Text shown for a turn: the recorded utterance in full mode, otherwise the
/// generated messages (or the keep-alive prompt when there are none).
pub fn render_agent_response(
    oracle: &OracleHandle,
    templates: &Templates,
    turn: usize,
    outcome: &TurnOutcome,
) -> Result<String, OracleError> {
    if oracle.mode == OracleMode::Full {
        if let Some(info) = oracle.agent_turn(turn)? {
            return Ok(info.utterance.clone());
        }
    }
    if outcome.messages.is_empty() {
        return Ok(templates.general("keep_alive").text);
    }
    let texts: Vec<&str> = outcome.messages.iter().map(|m| m.text.as_str()).collect();
    Ok(texts.join(" "))
}
