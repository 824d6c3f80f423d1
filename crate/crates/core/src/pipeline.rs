//! File-level plumbing shared by the command-line tools: expression and state
//! records, batch execution of dialogues, and the three evaluations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convert::{ConversionOptions, ConvertedTurn};
use crate::data::{state_at_turn, DataError, Database, RawDialogue, Schema};
use crate::engine::{DialogueContext, Engine, TurnOutcome};
use crate::lang::{exact_match, ExpressionStyle, ParseError};
use crate::metrics::{aggregate_matches, exact_graph_match, lenient_state_match, GraphState, MatchReport, SlotDiff};
use crate::oracle::{render_agent_response, OracleError, OracleHandle, OracleMode};
use crate::templates::Templates;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("malformed record at {path}:{line}: {detail}")]
    Record { path: String, line: usize, detail: String },
    #[error("{dialogue_id}: {source}")]
    Oracle { dialogue_id: String, source: OracleError },
    #[error("unparseable reference expression for {dialogue_id} turn {turn_index}: {source}")]
    Reference {
        dialogue_id: String,
        turn_index: usize,
        source: ParseError,
    },
    #[error("misaligned inputs: {}", .0.join("; "))]
    Misaligned(Vec<String>),
}

/// One converted turn as exchanged between tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub expression: String,
    pub style: ExpressionStyle,
}

impl ExpressionRecord {
    pub fn from_converted(turn: &ConvertedTurn, style: ExpressionStyle) -> ExpressionRecord {
        ExpressionRecord {
            dialogue_id: turn.dialogue_id.clone(),
            turn_index: turn.turn_index,
            expression: turn.expression.clone(),
            style,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub options: ConversionOptions,
    pub split: String,
    pub corpus_hash: String,
    pub dialogues: usize,
    pub turns: usize,
    pub empty_expressions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub expression: String,
    pub response: String,
    pub outcome: TurnOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub state: GraphState,
}

#[derive(Debug, Clone)]
pub struct DialogueRun {
    pub dialogue_id: String,
    pub traces: Vec<TurnTrace>,
    pub states: Vec<StateRecord>,
    pub context: DialogueContext,
}

/// Hash of the serialized dialogues, recorded in manifests.
pub fn corpus_hash(dialogues: &[RawDialogue]) -> String {
    let mut hasher = Sha256::new();
    for d in dialogues {
        hasher.update(serde_json::to_vec(d).expect("dialogues serialize"));
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let err = |source| PipelineError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(err)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| err(e.into()))?;
        out.write_all(b"\n").map_err(err)?;
    }
    out.flush().map_err(err)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|source| PipelineError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Groups records by dialogue, keeping first-seen dialogue order and turn
/// order within each dialogue.
pub fn group_by_dialogue<T, F>(records: Vec<T>, key: F) -> Vec<(String, Vec<T>)>
where
    F: Fn(&T) -> &str,
{
    let mut order: Vec<(String, Vec<T>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let k = key(&r).to_string();
        let i = *index.entry(k.clone()).or_insert_with(|| {
            order.push((k, Vec::new()));
            order.len() - 1
        });
        order[i].1.push(r);
    }
    order
}

/// Executes one dialogue's expressions in turn order.
pub fn execute_dialogue(
    engine: &Engine<'_>,
    templates: &Templates,
    dialogue_id: &str,
    turns: &[ExpressionRecord],
    oracle: &OracleHandle,
) -> Result<DialogueRun, PipelineError> {
    let mut ctx = DialogueContext::new(dialogue_id);
    let mut traces = Vec::new();
    let mut states = Vec::new();
    let oracle_err = |source| PipelineError::Oracle {
        dialogue_id: dialogue_id.to_string(),
        source,
    };
    for (k, rec) in turns.iter().enumerate() {
        let outcome = engine
            .evaluate_text(&mut ctx, &rec.expression, oracle)
            .map_err(oracle_err)?;
        let response = render_agent_response(oracle, templates, k, &outcome).map_err(oracle_err)?;
        states.push(StateRecord {
            dialogue_id: dialogue_id.to_string(),
            turn_index: rec.turn_index,
            state: outcome.state.clone(),
        });
        traces.push(TurnTrace {
            dialogue_id: dialogue_id.to_string(),
            turn_index: rec.turn_index,
            expression: rec.expression.clone(),
            response,
            outcome,
        });
    }
    Ok(DialogueRun {
        dialogue_id: dialogue_id.to_string(),
        traces,
        states,
        context: ctx,
    })
}

/// Oracle for a dialogue id; off mode needs no corpus entry.
pub fn oracle_for(
    mode: OracleMode,
    dialogue_id: &str,
    corpus: &BTreeMap<&str, &RawDialogue>,
) -> Result<OracleHandle, PipelineError> {
    if mode == OracleMode::Off {
        return Ok(OracleHandle::off());
    }
    let dialogue = corpus.get(dialogue_id).ok_or_else(|| PipelineError::Oracle {
        dialogue_id: dialogue_id.to_string(),
        source: OracleError::MissingAgentTurn { turn: 0 },
    })?;
    OracleHandle::from_dialogue(mode, dialogue).map_err(|source| PipelineError::Oracle {
        dialogue_id: dialogue_id.to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    StateMatch,
    GraphMatch,
    TranslationMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDiff {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub diffs: Vec<SlotDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvaluationMode,
    pub inputs: Vec<PathBuf>,
    pub report: MatchReport,
    /// Per-turn slot differences (state match only).
    pub diffs: Vec<TurnDiff>,
}

impl EvaluationReport {
    /// Fixed-width table row in the layout of the experiment tables.
    pub fn table(&self, label: &str) -> String {
        let pct = |p: Option<f64>| p.map_or("n/a".to_string(), |v| format!("{v:.1}%"));
        let r = &self.report;
        format!(
            "{:<28} {:>10} {:>12} {:>8} {:>10}\n{:<28} {:>10} {:>12} {:>8} {:>10}\n",
            "run",
            "turn",
            "dialogue",
            "turns",
            "dialogues",
            label,
            pct(r.turn_pct),
            pct(r.dialogue_pct),
            r.turn_count,
            r.dialogue_count
        )
    }
}

/// Lenient comparison of collected states against the annotations.
pub fn evaluate_state_match(
    states: &[StateRecord],
    corpus: &[RawDialogue],
    schema: &Schema,
) -> Result<(MatchReport, Vec<TurnDiff>), PipelineError> {
    let by_id: BTreeMap<&str, &RawDialogue> = corpus.iter().map(|d| (d.dialogue_id.as_str(), d)).collect();
    let normalizer = schema.normalizer();
    let mut offenders = Vec::new();
    let mut per_turn = Vec::new();
    let mut diffs = Vec::new();
    for rec in states {
        let Some(dialogue) = by_id.get(rec.dialogue_id.as_str()) else {
            offenders.push(format!("{} not in corpus", rec.dialogue_id));
            continue;
        };
        let ms = match state_at_turn(dialogue, rec.turn_index) {
            Ok(ms) => ms,
            Err(e) => {
                offenders.push(e.to_string());
                continue;
            }
        };
        let (ok, d) = lenient_state_match(ms, &rec.state, &normalizer);
        per_turn.push((rec.dialogue_id.clone(), ok));
        if !d.is_empty() {
            diffs.push(TurnDiff {
                dialogue_id: rec.dialogue_id.clone(),
                turn_index: rec.turn_index,
                diffs: d,
            });
        }
    }
    if !offenders.is_empty() {
        return Err(PipelineError::Misaligned(offenders));
    }
    Ok((aggregate_matches(&per_turn), diffs))
}

fn aligned<'a, T, F>(a: &'a [T], b: &'a [T], key: F) -> Result<Vec<(&'a T, &'a T)>, PipelineError>
where
    F: Fn(&T) -> (String, usize),
{
    let mut offenders = Vec::new();
    if a.len() != b.len() {
        offenders.push(format!("record counts differ: {} vs {}", a.len(), b.len()));
    }
    let pairs: Vec<_> = a.iter().zip(b.iter()).collect();
    for (x, y) in &pairs {
        let (kx, ky) = (key(x), key(y));
        if kx != ky {
            offenders.push(format!("{} turn {} vs {} turn {}", kx.0, kx.1, ky.0, ky.1));
        }
    }
    if offenders.is_empty() {
        Ok(pairs)
    } else {
        Err(PipelineError::Misaligned(offenders))
    }
}

/// Exact comparison of two executions of the same turns.
pub fn evaluate_graph_match(
    a: &[StateRecord],
    b: &[StateRecord],
    schema: &Schema,
) -> Result<MatchReport, PipelineError> {
    let normalizer = schema.normalizer();
    let pairs = aligned(a, b, |r| (r.dialogue_id.clone(), r.turn_index))?;
    let per_turn: Vec<(String, bool)> = pairs
        .iter()
        .map(|(x, y)| {
            (
                x.dialogue_id.clone(),
                exact_graph_match(&x.state, &y.state, &normalizer),
            )
        })
        .collect();
    Ok(aggregate_matches(&per_turn))
}

/// Turn-level exact match of hypothesis expressions against references.
pub fn evaluate_translation_match(
    hypotheses: &[ExpressionRecord],
    references: &[ExpressionRecord],
) -> Result<MatchReport, PipelineError> {
    let pairs = aligned(hypotheses, references, |r| (r.dialogue_id.clone(), r.turn_index))?;
    let mut per_turn = Vec::new();
    for (h, r) in pairs {
        let ok = if r.expression.trim().is_empty() {
            h.expression.trim().is_empty()
        } else {
            exact_match(&h.expression, &r.expression).map_err(|source| PipelineError::Reference {
                dialogue_id: r.dialogue_id.clone(),
                turn_index: r.turn_index,
                source,
            })?
        };
        per_turn.push((h.dialogue_id.clone(), ok));
    }
    Ok(aggregate_matches(&per_turn))
}

/// Loaded resources needed for execution.
pub struct Resources {
    pub schema: Schema,
    pub templates: Templates,
    pub db: Database,
}

impl Resources {
    pub fn load(schema_path: &Path, template_path: &Path, db_dir: &Path) -> Result<Resources, PipelineError> {
        let schema = Schema::load(schema_path)?;
        let templates = Templates::load(template_path)?;
        let db = Database::load(db_dir, &schema)?;
        Ok(Resources { schema, templates, db })
    }

    pub fn engine(&self) -> Engine<'_> {
        Engine::new(&self.db, &self.templates)
    }
}
