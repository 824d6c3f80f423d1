#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mwozdf::convert::{convert_dialogue, ConversionOptions};
use mwozdf::data::{load_dialogues, Database, LoadOptions, RawDialogue, Schema, Split};
use mwozdf::lang::ExpressionStyle;
use mwozdf::oracle::{OracleHandle, OracleMode};
use mwozdf::pipeline::{execute_dialogue, DialogueRun, ExpressionRecord};
use mwozdf::templates::Templates;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn schema() -> Schema {
    Schema::load(&root().join("data/schema.json")).unwrap()
}

pub fn templates() -> Templates {
    Templates::load(&root().join("data/templates.json")).unwrap()
}

pub fn db(schema: &Schema) -> Database {
    Database::load(&root().join("data/fixtures/db"), schema).unwrap()
}

pub fn fixture_split(schema: &Schema, split: Split) -> Vec<RawDialogue> {
    load_dialogues(
        &root().join("data/fixtures/multiwoz22"),
        split,
        schema,
        LoadOptions::default(),
    )
    .unwrap()
}

pub fn dialogue(schema: &Schema, id: &str) -> RawDialogue {
    [Split::Train, Split::Dev, Split::Test]
        .into_iter()
        .flat_map(|s| fixture_split(schema, s))
        .find(|d| d.dialogue_id == id)
        .unwrap_or_else(|| panic!("fixture {id}"))
}

pub fn options(style: ExpressionStyle) -> ConversionOptions {
    ConversionOptions {
        style,
        ..Default::default()
    }
}

pub fn records(schema: &Schema, d: &RawDialogue, opts: &ConversionOptions) -> Vec<ExpressionRecord> {
    convert_dialogue(schema, d, opts)
        .unwrap()
        .iter()
        .map(|t| ExpressionRecord::from_converted(t, opts.style))
        .collect()
}

pub fn run(d: &RawDialogue, style: ExpressionStyle, mode: OracleMode) -> DialogueRun {
    let schema = schema();
    let db = db(&schema);
    let templates = templates();
    let engine = mwozdf::engine::Engine::new(&db, &templates);
    let oracle = OracleHandle::from_dialogue(mode, d).unwrap();
    let recs = records(&schema, d, &options(style));
    execute_dialogue(&engine, &templates, &d.dialogue_id, &recs, &oracle).unwrap()
}

/// A corpus to evaluate on: the full MultiWOZ 2.2 release when
/// `MWOZ22_DATA` and `MWOZ22_DB` are set, otherwise the bundled fixtures.
pub struct Corpus {
    pub data_dir: PathBuf,
    pub db_dir: PathBuf,
    pub full: bool,
}

impl Corpus {
    pub fn full() -> Option<Corpus> {
        let data = std::env::var_os("MWOZ22_DATA")?;
        let db = std::env::var_os("MWOZ22_DB")?;
        Some(Corpus {
            data_dir: data.into(),
            db_dir: db.into(),
            full: true,
        })
    }

    pub fn fixtures() -> Corpus {
        Corpus {
            data_dir: root().join("data/fixtures/multiwoz22"),
            db_dir: root().join("data/fixtures/db"),
            full: false,
        }
    }

    pub fn resources(&self) -> mwozdf::pipeline::Resources {
        mwozdf::pipeline::Resources::load(
            &root().join("data/schema.json"),
            &root().join("data/templates.json"),
            &self.db_dir,
        )
        .unwrap()
    }

    pub fn split(&self, schema: &Schema, split: Split) -> Vec<RawDialogue> {
        load_dialogues(&self.data_dir, split, schema, LoadOptions { strict: !self.full }).unwrap()
    }
}

/// Converts and executes every dialogue, returning the expression records and
/// the per-dialogue runs.
pub fn run_split(
    res: &mwozdf::pipeline::Resources,
    dialogues: &[RawDialogue],
    opts: &ConversionOptions,
    mode: OracleMode,
) -> (Vec<ExpressionRecord>, Vec<DialogueRun>) {
    let engine = res.engine();
    let mut all = Vec::new();
    let mut runs = Vec::new();
    for d in dialogues {
        let recs = records(&res.schema, d, opts);
        let oracle = OracleHandle::from_dialogue(mode, d).unwrap();
        runs.push(execute_dialogue(&engine, &res.templates, &d.dialogue_id, &recs, &oracle).unwrap());
        all.extend(recs);
    }
    (all, runs)
}
