//! Graph-state extraction and the state, graph and translation comparisons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AnnotatedState, Normalizer, Schema};
use crate::engine::DialogueContext;

/// Collected state: domain -> slot -> single value.
pub type GraphState = BTreeMap<String, BTreeMap<String, String>>;

/// State of every task in the context.
///
/// A concluded task contributes its entity's tracked informable attributes;
/// constraint slots are layered on top, then booking slots.
pub fn collect_graph_state(ctx: &DialogueContext, schema: &Schema) -> GraphState {
    let mut out = GraphState::new();
    for domain in ctx.tasks.keys() {
        let (Some(state), Some(d)) = (ctx.task_state(domain), schema.domain(domain)) else {
            continue;
        };
        let mut slots = BTreeMap::new();
        if let Some(selected) = &state.selected {
            for slot in &d.informable {
                if let Some(v) = selected.record.get(slot) {
                    slots.insert(slot.clone(), v.to_string());
                }
            }
        }
        slots.extend(state.constraint.slots.iter().map(|(k, v)| (k.clone(), v.clone())));
        slots.extend(state.book.slots.iter().map(|(k, v)| (k.clone(), v.clone())));
        if !slots.is_empty() {
            out.insert(domain.clone(), slots);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    MissingSlot,
    ValueMismatch,
    /// `dontcare` in the annotation accepted against any graph value.
    DontcareAccepted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDiff {
    pub domain: String,
    pub slot: String,
    pub kind: DiffKind,
    pub expected: Vec<String>,
    pub found: Option<String>,
}

/// GS covers every MS slot with one of the annotated values. `dontcare` in
/// the MS matches anything, including an absent slot.
pub fn lenient_state_match(ms: &AnnotatedState, gs: &GraphState, normalizer: &Normalizer) -> (bool, Vec<SlotDiff>) {
    let mut ok = true;
    let mut diffs = Vec::new();
    for (domain, slots) in ms.domains() {
        for (slot, values) in slots {
            let found = gs.get(domain).and_then(|s| s.get(slot)).cloned();
            let diff = |kind| SlotDiff {
                domain: domain.clone(),
                slot: slot.clone(),
                kind,
                expected: values.clone(),
                found: found.clone(),
            };
            let normalized: Vec<String> = values.iter().map(|v| normalizer.normalize(v)).collect();
            if normalized.iter().any(|v| v == "dontcare") {
                if found.as_deref().map(|f| normalizer.normalize(f)) != Some("dontcare".into()) {
                    diffs.push(diff(DiffKind::DontcareAccepted));
                }
                continue;
            }
            match &found {
                None => {
                    ok = false;
                    diffs.push(diff(DiffKind::MissingSlot));
                }
                Some(f) => {
                    let f = normalizer.normalize(f);
                    if !normalized.contains(&f) {
                        ok = false;
                        diffs.push(diff(DiffKind::ValueMismatch));
                    }
                }
            }
        }
    }
    (ok, diffs)
}

/// Identical (domain, slot, normalized value) sets.
pub fn exact_graph_match(a: &GraphState, b: &GraphState, normalizer: &Normalizer) -> bool {
    let flat = |s: &GraphState| -> Vec<(String, String, String)> {
        let mut v: Vec<_> = s
            .iter()
            .flat_map(|(d, slots)| {
                slots
                    .iter()
                    .map(move |(k, v)| (d.clone(), k.clone(), normalizer.normalize(v)))
            })
            .collect();
        v.sort();
        v.dedup();
        v
    };
    flat(a) == flat(b)
}

/// Single values lifted to one-element candidate lists.
pub fn list_lift(gs: &GraphState) -> AnnotatedState {
    let mut out = AnnotatedState::new();
    for (domain, slots) in gs {
        for (slot, value) in slots {
            out.insert(domain, slot, vec![value.clone()]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueMatch {
    pub dialogue_id: String,
    pub turns: Vec<bool>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub dialogues: Vec<DialogueMatch>,
    pub turn_count: usize,
    pub turns_matched: usize,
    pub dialogue_count: usize,
    pub dialogues_matched: usize,
    /// Absent when there are no turns.
    pub turn_pct: Option<f64>,
    pub dialogue_pct: Option<f64>,
}

/// Turn- and dialogue-level percentages; dialogues appear in first-seen order.
pub fn aggregate_matches(per_turn: &[(String, bool)]) -> MatchReport {
    let mut dialogues: Vec<DialogueMatch> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (id, ok) in per_turn {
        let i = *index.entry(id.as_str()).or_insert_with(|| {
            dialogues.push(DialogueMatch {
                dialogue_id: id.clone(),
                turns: Vec::new(),
                matched: true,
            });
            dialogues.len() - 1
        });
        dialogues[i].turns.push(*ok);
        dialogues[i].matched &= *ok;
    }
    let turn_count = per_turn.len();
    let turns_matched = per_turn.iter().filter(|(_, ok)| *ok).count();
    let dialogue_count = dialogues.len();
    let dialogues_matched = dialogues.iter().filter(|d| d.matched).count();
    let pct = |n: usize, d: usize| (d > 0).then(|| 100.0 * n as f64 / d as f64);
    MatchReport {
        turn_pct: pct(turns_matched, turn_count),
        dialogue_pct: pct(dialogues_matched, dialogue_count),
        dialogues,
        turn_count,
        turns_matched,
        dialogue_count,
        dialogues_matched,
    }
}
