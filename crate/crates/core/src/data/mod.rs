//! MultiWOZ 2.2 ingestion: dialogues, dialogue acts and entity databases.

mod db;
mod normalize;
mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use db::{Database, EntityRecord, TaxiTable};
pub use normalize::{pad_time, Normalizer};
pub use schema::{DomainSchema, Intent, Schema, SlotKind};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("malformed dialogue {dialogue_id}: {detail}")]
    MalformedDialogue { dialogue_id: String, detail: String },
    #[error("unknown domain: {0}")]
    UnknownDomain(String),
    #[error("unknown slot {slot} for domain {domain}")]
    UnknownSlot { domain: String, slot: String },
    #[error("turn {index} of {dialogue_id} is out of range")]
    TurnOutOfRange { dialogue_id: String, index: usize },
    #[error("turn {index} of {dialogue_id} is not a user turn")]
    NotUserTurn { dialogue_id: String, index: usize },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> DataError {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAct {
    pub domain: String,
    pub intent: Intent,
    pub slot_values: Vec<(String, String)>,
}

impl DialogueAct {
    pub fn new(domain: &str, intent: Intent, slot_values: &[(&str, &str)]) -> DialogueAct {
        DialogueAct {
            domain: domain.to_string(),
            intent,
            slot_values: slot_values
                .iter()
                .map(|(s, v)| (s.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn value(&self, slot: &str) -> Option<&str> {
        self.slot_values
            .iter()
            .find(|(s, _)| s == slot)
            .map(|(_, v)| v.as_str())
    }
}

/// Manually annotated dialogue state: domain -> slot -> candidate values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotatedState(pub BTreeMap<String, BTreeMap<String, Vec<String>>>);

impl AnnotatedState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: &str, slot: &str, values: Vec<String>) {
        if values.is_empty() {
            return;
        }
        self.0
            .entry(domain.to_string())
            .or_default()
            .insert(slot.to_string(), values);
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&[String]> {
        self.0.get(domain)?.get(slot).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(BTreeMap::is_empty)
    }

    pub fn domains(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, Vec<String>>)> {
        self.0.iter().filter(|(_, slots)| !slots.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub utterance: String,
    pub acts: Vec<DialogueAct>,
    /// Present on user turns only.
    pub frames: Option<AnnotatedState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialogue {
    pub dialogue_id: String,
    pub services: Vec<String>,
    pub turns: Vec<RawTurn>,
}

impl RawDialogue {
    pub fn user_turns(&self) -> impl Iterator<Item = &RawTurn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::User)
    }

    /// Agent turn answering the user turn at `user_index`.
    pub fn agent_reply(&self, user_index: usize) -> Option<&RawTurn> {
        self.turns.get(user_index + 1).filter(|t| t.speaker == Speaker::Agent)
    }
}

/// Annotated state at a user turn.
pub fn state_at_turn(dialogue: &RawDialogue, user_turn_index: usize) -> Result<&AnnotatedState, DataError> {
    let turn = dialogue
        .turns
        .get(user_turn_index)
        .ok_or_else(|| DataError::TurnOutOfRange {
            dialogue_id: dialogue.dialogue_id.clone(),
            index: user_turn_index,
        })?;
    match (&turn.speaker, &turn.frames) {
        (Speaker::User, Some(state)) => Ok(state),
        _ => Err(DataError::NotUserTurn {
            dialogue_id: dialogue.dialogue_id.clone(),
            index: user_turn_index,
        }),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Abort on the first malformed dialogue instead of skipping it.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict: true }
    }
}

pub const ACTS_FILE: &str = "dialog_acts.json";

/// Loads every dialogue of `split` from a MultiWOZ 2.2 data directory, joining
/// the dialogue acts from `dialog_acts.json`.
pub fn load_dialogues(
    data_dir: &Path,
    split: Split,
    schema: &Schema,
    options: LoadOptions,
) -> Result<Vec<RawDialogue>, DataError> {
    let split_dir = data_dir.join(split.dir_name());
    let mut files: Vec<PathBuf> = std::fs::read_dir(&split_dir)
        .map_err(|e| DataError::io(&split_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("dialogues_") && n.ends_with(".json"))
        })
        .collect();
    if files.is_empty() {
        return Err(DataError::MissingFile(split_dir.join("dialogues_*.json")));
    }
    files.sort();

    let acts_path = data_dir.join(ACTS_FILE);
    let acts = read_json(&acts_path)?;
    let acts = acts.as_object().ok_or_else(|| DataError::Malformed {
        path: acts_path.display().to_string(),
        detail: "expected an object keyed by dialogue id".into(),
    })?;

    let mut out = Vec::new();
    for file in files {
        let records = read_json(&file)?;
        let records = records.as_array().ok_or_else(|| DataError::Malformed {
            path: file.display().to_string(),
            detail: "expected a list of dialogues".into(),
        })?;
        for record in records {
            match parse_dialogue(record, acts, schema) {
                Ok(d) => out.push(d),
                Err(e) if !options.strict => log::warn!("skipping dialogue: {e}"),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

pub(crate) fn read_json(path: &Path) -> Result<Value, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// `SNG0551.json` -> `SNG0551`.
pub fn normalize_dialogue_id(raw: &str) -> &str {
    raw.strip_suffix(".json").unwrap_or(raw)
}

fn parse_dialogue(
    record: &Value,
    acts: &serde_json::Map<String, Value>,
    schema: &Schema,
) -> Result<RawDialogue, DataError> {
    let raw_id = record
        .get("dialogue_id")
        .and_then(Value::as_str)
        .ok_or_else(|| DataError::MalformedDialogue {
            dialogue_id: "<unknown>".into(),
            detail: "missing dialogue_id".into(),
        })?;
    let dialogue_id = normalize_dialogue_id(raw_id).to_string();
    let bad = |detail: String| DataError::MalformedDialogue {
        dialogue_id: dialogue_id.clone(),
        detail,
    };

    let services = record
        .get("services")
        .and_then(Value::as_array)
        .map(|s| s.iter().filter_map(Value::as_str).map(str::to_lowercase).collect())
        .unwrap_or_default();

    let dialogue_acts = acts
        .get(raw_id)
        .or_else(|| acts.get(&format!("{dialogue_id}.json")))
        .or_else(|| acts.get(&dialogue_id));

    let raw_turns = record
        .get("turns")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing turns".into()))?;

    let mut turns = Vec::with_capacity(raw_turns.len());
    for (position, t) in raw_turns.iter().enumerate() {
        let index: usize = match t.get("turn_id") {
            Some(Value::String(s)) => s.parse().map_err(|_| bad(format!("bad turn_id {s:?}")))?,
            Some(Value::Number(n)) => n.as_u64().ok_or_else(|| bad("bad turn_id".into()))? as usize,
            _ => return Err(bad(format!("turn {position} has no turn_id"))),
        };
        if index != position {
            return Err(bad(format!("turn ids not consecutive at {position}")));
        }
        let speaker = match t.get("speaker").and_then(Value::as_str).map(str::to_uppercase) {
            Some(s) if s == "USER" => Speaker::User,
            Some(s) if s == "SYSTEM" || s == "AGENT" => Speaker::Agent,
            other => return Err(bad(format!("turn {index}: unknown speaker {other:?}"))),
        };
        let expected = if index.is_multiple_of(2) {
            Speaker::User
        } else {
            Speaker::Agent
        };
        if speaker != expected {
            return Err(bad(format!("turn {index}: speakers do not alternate")));
        }
        let utterance = t
            .get("utterance")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("turn {index}: missing utterance")))?
            .to_string();
        let turn_acts = dialogue_acts
            .and_then(|a| a.get(index.to_string()))
            .and_then(|a| a.get("dialog_act"))
            .map(|a| parse_acts(a, schema, &dialogue_id, index))
            .unwrap_or_default();
        let frames = match speaker {
            Speaker::User => Some(parse_frames(t.get("frames"), schema)),
            Speaker::Agent => None,
        };
        turns.push(RawTurn {
            index,
            speaker,
            utterance,
            acts: turn_acts,
            frames,
        });
    }

    Ok(RawDialogue {
        dialogue_id,
        services,
        turns,
    })
}

fn parse_acts(value: &Value, schema: &Schema, dialogue_id: &str, turn: usize) -> Vec<DialogueAct> {
    let Some(map) = value.as_object() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (label, slots) in map {
        let Some((domain, intent_label)) = label.split_once('-') else {
            log::warn!("{dialogue_id}/{turn}: unmapped act label {label:?}");
            continue;
        };
        let domain = domain.to_lowercase();
        let intent = match schema.intent(intent_label) {
            Some(i) if schema.is_act_domain(&domain) => i,
            _ => {
                log::warn!("{dialogue_id}/{turn}: unmapped act label {label:?}");
                continue;
            }
        };
        let slot_values = slots
            .as_array()
            .map(|pairs| {
                pairs
                    .iter()
                    .filter_map(|p| {
                        let p = p.as_array()?;
                        let slot = p.first()?.as_str()?;
                        let val = p.get(1).map(value_text).unwrap_or_default();
                        (slot != "none").then(|| (schema.canonical_act_slot(&domain, slot), val))
                    })
                    .collect()
            })
            .unwrap_or_default();
        out.push(DialogueAct {
            domain,
            intent,
            slot_values,
        });
    }
    out
}

fn parse_frames(frames: Option<&Value>, schema: &Schema) -> AnnotatedState {
    let mut state = AnnotatedState::new();
    let Some(frames) = frames.and_then(Value::as_array) else {
        return state;
    };
    for frame in frames {
        let Some(values) = frame
            .get("state")
            .and_then(|s| s.get("slot_values"))
            .and_then(Value::as_object)
        else {
            continue;
        };
        for (key, vals) in values {
            let Some((domain, slot)) = key.split_once('-') else {
                continue;
            };
            let domain = domain.to_lowercase();
            let slot = match schema.domain(&domain) {
                Some(d) => d.canonical_slot(slot),
                None => slot.to_lowercase(),
            };
            let vals: Vec<String> = match vals {
                Value::Array(a) => a.iter().map(value_text).collect(),
                other => vec![value_text(other)],
            };
            state.insert(&domain, &slot, vals);
        }
    }
    state
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}
