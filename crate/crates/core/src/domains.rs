//! Domain task logic: find, book and get-info over the entity databases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Database, DomainSchema, EntityRecord};
use crate::engine::{DecisionRecord, ExceptionKind};
use crate::oracle::{decide, taxi_details, Decision, DecisionPoint, OracleError, OracleHandle};
use crate::templates::{AgentMessage, Templates};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainConstraint {
    pub domain: String,
    pub slots: BTreeMap<String, String>,
    pub concluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookInfo {
    pub domain: String,
    pub slots: BTreeMap<String, String>,
}

impl BookInfo {
    pub fn first_missing<'a>(&self, schema: &'a DomainSchema) -> Option<&'a str> {
        schema.first_missing_requirement(|s| self.slots.contains_key(s))
    }

    pub fn is_complete(&self, schema: &DomainSchema) -> bool {
        self.first_missing(schema).is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectedBy {
    UserNamed,
    OracleRecommendation,
    RuleDefault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedEntity {
    pub domain: String,
    pub record: EntityRecord,
    pub selected_by: SelectedBy,
}

/// Entity proposed to the user but not yet accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub record: EntityRecord,
    pub source: SelectedBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingRecord {
    pub domain: String,
    pub entity_id: String,
    pub booking_slots: BTreeMap<String, String>,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub domain: String,
    pub constraint: DomainConstraint,
    pub book: BookInfo,
    pub selected: Option<SelectedEntity>,
    pub booking: Option<BookingRecord>,
}

impl TaskState {
    pub fn fresh(domain: &str) -> TaskState {
        TaskState {
            domain: domain.to_string(),
            constraint: DomainConstraint {
                domain: domain.to_string(),
                slots: BTreeMap::new(),
                concluded: false,
            },
            book: BookInfo {
                domain: domain.to_string(),
                slots: BTreeMap::new(),
            },
            selected: None,
            booking: None,
        }
    }

    pub fn concluded(&self) -> bool {
        self.selected.is_some() || self.booking.is_some()
    }
}

/// Read-only inputs shared by the task functions of one turn.
pub struct DomainEnv<'a> {
    pub db: &'a Database,
    pub templates: &'a Templates,
    pub oracle: &'a OracleHandle,
    pub dialogue_id: &'a str,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raised {
    pub kind: ExceptionKind,
    pub prompt: AgentMessage,
    pub missing_slots: Vec<String>,
}

/// Side effects collected while a task runs.
#[derive(Debug, Default)]
pub struct Effects {
    pub messages: Vec<AgentMessage>,
    pub raised: Option<Raised>,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SuggestionUpdate {
    Keep,
    Set(Suggestion),
    Clear,
}

#[derive(Debug, Clone)]
pub struct FindOutcome {
    pub state: TaskState,
    pub suggestion: SuggestionUpdate,
    pub new_booking: Option<BookingRecord>,
}

impl<'a> DomainEnv<'a> {
    fn schema(&self, domain: &str) -> &'a DomainSchema {
        self.db
            .schema()
            .domain(domain)
            .expect("task domains come from the schema")
    }

    fn decide(&self, fx: &mut Effects, domain: &str, point: DecisionPoint) -> Result<Decision, OracleError> {
        let decision = decide(self.oracle, self.db.schema(), self.turn, domain, point)?;
        fx.decisions.push(DecisionRecord {
            turn: self.turn,
            domain: domain.to_string(),
            point,
            decision: decision.clone(),
        });
        Ok(decision)
    }

    fn raise(&self, fx: &mut Effects, kind: ExceptionKind, prompt: AgentMessage, missing: Vec<String>) {
        fx.raised = Some(Raised {
            kind,
            prompt,
            missing_slots: missing,
        });
    }

    fn raise_missing(&self, fx: &mut Effects, domain: &str, slot: &str) {
        let prompt = self.templates.prompt(domain, slot);
        self.raise(fx, ExceptionKind::MissingInput, prompt, vec![slot.to_string()]);
    }
}

fn id_of<'r>(schema: &DomainSchema, record: &'r EntityRecord) -> &'r str {
    schema.id_slot.as_deref().and_then(|s| record.get(s)).unwrap_or("")
}

fn record_slots(domain: &str, record: &EntityRecord, count: usize) -> BTreeMap<String, String> {
    let mut slots = record.attributes.clone();
    slots.insert("domain".into(), domain.into());
    slots.insert("count".into(), count.to_string());
    slots
}

fn describe(slots: &BTreeMap<String, String>) -> String {
    if slots.is_empty() {
        return "your request".into();
    }
    slots
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `LIKE` match of `wanted` against the identifying slot: case-insensitive
/// containment after normalization, shortest name first.
pub fn like_match<'r>(
    db: &Database,
    schema: &DomainSchema,
    candidates: &[&'r EntityRecord],
    wanted: &str,
) -> Option<&'r EntityRecord> {
    let n = db.normalizer();
    let wanted = n.normalize(wanted);
    candidates
        .iter()
        .copied()
        .filter(|r| n.normalize(id_of(schema, r)).contains(&wanted))
        .min_by_key(|r| id_of(schema, r).chars().count())
}

/// Records of the task's domain that satisfy its constraint, with the
/// identifying slot handled by [`like_match`] semantics.
pub fn matching_records<'d>(
    db: &'d Database,
    schema: &DomainSchema,
    slots: &BTreeMap<String, String>,
) -> Vec<&'d EntityRecord> {
    let id_slot = schema.id_slot.as_deref();
    let (named, filters): (Vec<_>, Vec<_>) = slots.iter().partition(|(k, _)| Some(k.as_str()) == id_slot);
    let filters: BTreeMap<String, String> = filters.into_iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let hits = db.query(&schema.name, &filters).unwrap_or_default();
    match named.first() {
        Some((_, wanted)) if wanted.as_str() != "dontcare" => {
            let n = db.normalizer();
            let w = n.normalize(wanted);
            hits.into_iter()
                .filter(|r| n.normalize(id_of(schema, r)).contains(&w))
                .collect()
        }
        _ => hits,
    }
}

/// Deterministic 8-character booking reference.
pub fn generate_reference(dialogue_id: &str, domain: &str, entity_id: &str) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    let digest = Sha256::new()
        .chain_update(dialogue_id.as_bytes())
        .chain_update([0x1f])
        .chain_update(domain.as_bytes())
        .chain_update([0x1f])
        .chain_update(entity_id.as_bytes())
        .finalize();
    digest[..8]
        .iter()
        .map(|b| ALPHABET[*b as usize % ALPHABET.len()] as char)
        .collect()
}

/// Runs a find task after its constraint or booking info changed.
pub fn execute_find(
    env: &DomainEnv<'_>,
    fx: &mut Effects,
    prev: &TaskState,
    constraint: DomainConstraint,
    book: BookInfo,
    pending: Option<&Suggestion>,
    booking_requested: bool,
) -> Result<FindOutcome, OracleError> {
    let domain = prev.domain.as_str();
    let schema = env.schema(domain);
    if schema.db_file.is_none() {
        return execute_taxi(env, fx, prev, constraint, book);
    }

    let mut state = TaskState {
        domain: domain.to_string(),
        constraint,
        book,
        selected: None,
        booking: None,
    };
    let hits = matching_records(env.db, schema, &state.constraint.slots);
    if hits.is_empty() {
        let mut slots = BTreeMap::new();
        slots.insert("domain".to_string(), domain.to_string());
        slots.insert("constraints".to_string(), describe(&state.constraint.slots));
        let prompt = env.templates.render(domain, "no_match", slots);
        env.raise(fx, ExceptionKind::NoMatch, prompt, Vec::new());
        return Ok(FindOutcome {
            state,
            suggestion: SuggestionUpdate::Clear,
            new_booking: None,
        });
    }

    let constraint_changed = state.constraint.slots != prev.constraint.slots;
    let named = schema
        .id_slot
        .as_deref()
        .and_then(|id| state.constraint.slots.get(id))
        .filter(|v| v.as_str() != "dontcare")
        .cloned();

    let mut suggestion = SuggestionUpdate::Keep;
    let mut newly_selected = false;
    state.selected = prev.selected.clone().filter(|s| hits.iter().any(|r| **r == s.record));

    if let Some(wanted) = named {
        let best = like_match(env.db, schema, &hits, &wanted).expect("hits are name-filtered");
        if state.selected.as_ref().map(|s| &s.record) != Some(best) {
            state.selected = Some(SelectedEntity {
                domain: domain.to_string(),
                record: best.clone(),
                selected_by: SelectedBy::UserNamed,
            });
            newly_selected = true;
        }
        suggestion = SuggestionUpdate::Clear;
    }

    if state.selected.is_none() {
        let pending = pending
            .filter(|_| !constraint_changed)
            .filter(|p| hits.iter().any(|r| **r == p.record));
        let chosen = match pending {
            Some(p) if booking_requested => p.clone(),
            _ => {
                let decision = env.decide(fx, domain, DecisionPoint::Recommendation)?;
                let recommended = match &decision {
                    Decision::RecommendEntity(name) => like_match(env.db, schema, &hits, name),
                    _ => None,
                };
                match (recommended, pending) {
                    (Some(r), _) => Suggestion {
                        record: r.clone(),
                        source: SelectedBy::OracleRecommendation,
                    },
                    (None, Some(p)) => p.clone(),
                    (None, None) => Suggestion {
                        record: hits[0].clone(),
                        source: SelectedBy::RuleDefault,
                    },
                }
            }
        };
        if booking_requested {
            state.selected = Some(SelectedEntity {
                domain: domain.to_string(),
                record: chosen.record,
                selected_by: chosen.source,
            });
            newly_selected = true;
            suggestion = SuggestionUpdate::Clear;
        } else {
            let slots = record_slots(domain, &chosen.record, hits.len());
            fx.messages.push(env.templates.render(domain, "suggest", slots));
            follow_up(env, fx, schema, &state, hits.len());
            suggestion = SuggestionUpdate::Set(chosen);
        }
    }

    let mut new_booking = None;
    if let Some(selected) = state.selected.clone() {
        state.constraint.concluded = true;
        if newly_selected {
            let slots = record_slots(domain, &selected.record, hits.len());
            fx.messages.push(env.templates.render(domain, "selected", slots));
        }
        if schema.bookable {
            let (booking, fresh) = execute_book(env, fx, schema, prev, &state)?;
            state.booking = booking;
            if fresh {
                new_booking = state.booking.clone();
            }
        }
    }
    Ok(FindOutcome {
        state,
        suggestion,
        new_booking,
    })
}

/// Next question after a suggestion: narrow the search while several
/// records match, otherwise offer to book.
fn follow_up(env: &DomainEnv<'_>, fx: &mut Effects, schema: &DomainSchema, state: &TaskState, count: usize) {
    let domain = schema.name.as_str();
    if count > 1 {
        let open = schema
            .informable
            .iter()
            .filter(|s| Some(s.as_str()) != schema.id_slot.as_deref())
            .find(|s| !state.constraint.slots.contains_key(*s));
        if let Some(slot) = open {
            let slots = [("domain", domain), ("slot", slot.as_str())]
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .chain([("count".to_string(), count.to_string())])
                .collect();
            fx.messages.push(env.templates.render(domain, "prompt_narrow", slots));
            return;
        }
    }
    if schema.bookable {
        fx.messages
            .push(env.templates.render(domain, "book_offer", BTreeMap::new()));
    }
}

/// Books the selected entity when the booking info is complete. Returns the
/// task's booking and whether it was made in this call.
pub fn execute_book(
    env: &DomainEnv<'_>,
    fx: &mut Effects,
    schema: &DomainSchema,
    prev: &TaskState,
    state: &TaskState,
) -> Result<(Option<BookingRecord>, bool), OracleError> {
    let domain = schema.name.as_str();
    let Some(selected) = &state.selected else {
        let slot = schema.id_slot.clone().unwrap_or_else(|| "name".into());
        let mut slots = BTreeMap::new();
        slots.insert("domain".to_string(), domain.to_string());
        let prompt = env.templates.render(domain, "need_entity", slots);
        env.raise(fx, ExceptionKind::MissingInput, prompt, vec![slot]);
        return Ok((None, false));
    };
    let entity_id = id_of(schema, &selected.record).to_string();
    if let Some(existing) = &prev.booking {
        if existing.entity_id == entity_id && existing.booking_slots == state.book.slots {
            return Ok((Some(existing.clone()), false));
        }
    }
    if let Some(slot) = state.book.first_missing(schema) {
        env.raise_missing(fx, domain, slot);
        return Ok((None, false));
    }
    let reference = match env.decide(fx, domain, DecisionPoint::Booking)? {
        Decision::BookingReference(r) => r,
        Decision::BookingFailed(_) => {
            fx.messages
                .push(env.templates.render(domain, "booking_failed", BTreeMap::new()));
            return Ok((None, false));
        }
        _ => generate_reference(env.dialogue_id, domain, &entity_id),
    };
    let mut slots = record_slots(domain, &selected.record, 1);
    slots.insert("ref".into(), reference.clone());
    fx.messages.push(env.templates.render(domain, "confirm_booking", slots));
    fx.messages.push(env.templates.general("keep_alive"));
    Ok((
        Some(BookingRecord {
            domain: domain.to_string(),
            entity_id,
            booking_slots: state.book.slots.clone(),
            reference,
        }),
        true,
    ))
}

fn execute_taxi(
    env: &DomainEnv<'_>,
    fx: &mut Effects,
    prev: &TaskState,
    constraint: DomainConstraint,
    book: BookInfo,
) -> Result<FindOutcome, OracleError> {
    let domain = prev.domain.as_str();
    let schema = env.schema(domain);
    let mut state = TaskState {
        domain: domain.to_string(),
        constraint,
        book,
        selected: None,
        booking: None,
    };
    let keep = SuggestionUpdate::Keep;
    if let Some(slot) = schema.first_missing_requirement(|s| state.constraint.slots.contains_key(s)) {
        env.raise_missing(fx, domain, slot);
        return Ok(FindOutcome {
            state,
            suggestion: keep,
            new_booking: None,
        });
    }
    if prev.booking.is_some() && prev.constraint.slots == state.constraint.slots {
        state.booking = prev.booking.clone();
        state.constraint.concluded = true;
        return Ok(FindOutcome {
            state,
            suggestion: keep,
            new_booking: None,
        });
    }

    env.decide(fx, domain, DecisionPoint::Booking)?;
    let trip = describe(&state.constraint.slots);
    let (car, phone) = taxi_details(env.oracle, env.turn)?;
    let digest = Sha256::new()
        .chain_update(env.dialogue_id.as_bytes())
        .chain_update([0x1f])
        .chain_update(trip.as_bytes())
        .finalize();
    let car = car.unwrap_or_else(|| {
        let taxi = &env.db.taxi;
        let pick = |list: &[String], b: u8| list.get(b as usize % list.len().max(1)).cloned();
        match (pick(&taxi.colors, digest[0]), pick(&taxi.types, digest[1])) {
            (Some(c), Some(t)) => format!("{c} {t}"),
            (None, Some(t)) => t,
            (Some(c), None) => format!("{c} car"),
            (None, None) => "car".to_string(),
        }
    });
    let phone = phone.unwrap_or_else(|| {
        let digits: String = digest[2..11].iter().map(|b| char::from(b'0' + b % 10)).collect();
        format!("07{digits}")
    });

    let mut booking_slots = state.constraint.slots.clone();
    booking_slots.insert("type".into(), car.clone());
    booking_slots.insert("phone".into(), phone.clone());
    let booking = BookingRecord {
        domain: domain.to_string(),
        entity_id: trip.clone(),
        reference: generate_reference(env.dialogue_id, domain, &trip),
        booking_slots,
    };
    let mut slots = state.constraint.slots.clone();
    slots.insert("type".into(), car);
    slots.insert("phone".into(), phone);
    slots.insert("ref".into(), booking.reference.clone());
    fx.messages.push(env.templates.render(domain, "confirm_booking", slots));
    fx.messages.push(env.templates.general("keep_alive"));
    state.constraint.concluded = true;
    state.booking = Some(booking.clone());
    Ok(FindOutcome {
        state,
        suggestion: keep,
        new_booking: Some(booking),
    })
}

/// Answers `fields` about the selected entity, or about the pending
/// suggestion, which the request accepts. Returns the accepted selection.
pub fn execute_get_info(
    env: &DomainEnv<'_>,
    fx: &mut Effects,
    state: &TaskState,
    pending: Option<&Suggestion>,
    fields: &[String],
) -> Option<SelectedEntity> {
    let domain = state.domain.as_str();
    let schema = env.schema(domain);

    if schema.db_file.is_none() {
        match &state.booking {
            Some(b) => {
                for field in fields {
                    let value = b.booking_slots.get(field).cloned();
                    fx.messages.push(answer(env, domain, field, "your taxi", value));
                }
            }
            None => {
                let slot = schema
                    .first_missing_requirement(|s| state.constraint.slots.contains_key(s))
                    .unwrap_or("departure");
                env.raise_missing(fx, domain, slot);
            }
        }
        return None;
    }

    let (record, accepted) = match (&state.selected, pending) {
        (Some(s), _) => (&s.record, None),
        (None, Some(p)) => (
            &p.record,
            Some(SelectedEntity {
                domain: domain.to_string(),
                record: p.record.clone(),
                selected_by: p.source,
            }),
        ),
        (None, None) => {
            let slot = schema.id_slot.clone().unwrap_or_else(|| "name".into());
            let mut slots = BTreeMap::new();
            slots.insert("domain".to_string(), domain.to_string());
            let prompt = env.templates.render(domain, "need_entity", slots);
            env.raise(fx, ExceptionKind::MissingInput, prompt, vec![slot]);
            return None;
        }
    };
    let name = id_of(schema, record).to_string();
    for field in fields {
        let value = if field == "ref" {
            state.booking.as_ref().map(|b| b.reference.clone())
        } else {
            record.get(field).map(str::to_string)
        };
        fx.messages.push(answer(env, domain, field, &name, value));
    }
    accepted
}

fn answer(env: &DomainEnv<'_>, domain: &str, field: &str, name: &str, value: Option<String>) -> AgentMessage {
    let mut slots = BTreeMap::new();
    slots.insert("field".to_string(), field.to_string());
    slots.insert("name".to_string(), name.to_string());
    match value {
        Some(v) => {
            slots.insert("value".to_string(), v);
            env.templates.render(domain, "get_info", slots)
        }
        None => env.templates.render(domain, "get_info_missing", slots),
    }
}
