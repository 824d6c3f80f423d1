//! `mwozdf`: convert MultiWOZ 2.2 dialogues to dataflow expressions, execute
//! them, evaluate the results, or drive the engine interactively.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use mwozdf::convert::{convert_dialogue, ConversionOptions, ConversionSource};
use mwozdf::data::{load_dialogues, Database, LoadOptions, RawDialogue, Schema, Split};
use mwozdf::engine::{to_dot, DialogueContext, Engine};
use mwozdf::lang::{parse, ExpressionStyle};
use mwozdf::metrics::MatchReport;
use mwozdf::oracle::{render_agent_response, OracleHandle, OracleMode};
use mwozdf::pipeline::{
    corpus_hash, evaluate_graph_match, evaluate_state_match, evaluate_translation_match, execute_dialogue,
    group_by_dialogue, oracle_for, read_jsonl, write_json, write_jsonl, DialogueRun, EvaluationMode, EvaluationReport,
    ExpressionRecord, Manifest, PipelineError, StateRecord, TurnDiff, TurnTrace,
};
use mwozdf::templates::Templates;

const DEFAULT_SCHEMA: &str = include_str!("../../../data/schema.json");
const DEFAULT_TEMPLATES: &str = include_str!("../../../data/templates.json");

#[derive(Parser)]
#[command(name = "mwozdf", version, about = "Executable dataflow dialogues over MultiWOZ 2.2")]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// MultiWOZ 2.2 data directory (train/, dev/, test/, dialog_acts.json).
    #[arg(long, env = "MWOZDF_DATA_DIR", global = true)]
    data_dir: Option<PathBuf>,
    /// Directory holding the *_db.json entity databases.
    #[arg(long, env = "MWOZDF_DB_DIR", global = true)]
    db_dir: Option<PathBuf>,
    /// Slot schema; the bundled schema when absent.
    #[arg(long, env = "MWOZDF_SCHEMA", global = true)]
    schema: Option<PathBuf>,
    /// Response templates; the bundled templates when absent.
    #[arg(long, env = "MWOZDF_TEMPLATES", global = true)]
    templates: Option<PathBuf>,
    #[arg(long, env = "MWOZDF_SPLIT", global = true, default_value = "test", value_parser = parse_from_str::<Split>)]
    split: Split,
    #[arg(long, env = "MWOZDF_STYLE", global = true, default_value = "simplified", value_parser = parse_from_str::<ExpressionStyle>)]
    style: ExpressionStyle,
    #[arg(long, env = "MWOZDF_OMIT_GET_INFO", global = true)]
    omit_get_info: bool,
    #[arg(long, env = "MWOZDF_SOURCE", global = true, default_value = "acts", value_parser = parse_from_str::<ConversionSource>)]
    source: ConversionSource,
    #[arg(long, env = "MWOZDF_ORACLE", global = true, default_value = "partial", value_parser = parse_from_str::<OracleMode>)]
    oracle: OracleMode,
    /// Output directory, created if absent.
    #[arg(long, env = "MWOZDF_OUT", global = true, default_value = "out")]
    out: PathBuf,
    /// Abort on malformed dialogues and unknown domains or slots.
    #[arg(long, env = "MWOZDF_STRICT", global = true)]
    strict: bool,
    /// Worker threads for batch commands; all cores when absent.
    #[arg(long, env = "MWOZDF_JOBS", global = true)]
    jobs: Option<usize>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Convert a split to DF expressions (expressions.jsonl, manifest.json).
    Convert,
    /// Execute converted expressions (traces.jsonl, states.jsonl).
    Execute {
        /// Expressions file; <out>/expressions.jsonl when absent.
        #[arg(long)]
        expressions: Option<PathBuf>,
        /// Also write one Graphviz file per dialogue under <out>/graphs.
        #[arg(long)]
        dot: bool,
    },
    /// Compare executed states or expressions (report.json, report.txt).
    Evaluate {
        #[arg(value_enum)]
        mode: EvalMode,
        /// state_match: a states file; graph_match: two states files;
        /// translation_match: hypothesis and reference expression files.
        inputs: Vec<PathBuf>,
    },
    /// Read DF expressions from stdin and execute them with the oracle off.
    Repl,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)]
enum EvalMode {
    StateMatch,
    GraphMatch,
    TranslationMatch,
}

impl From<EvalMode> for EvaluationMode {
    fn from(m: EvalMode) -> Self {
        match m {
            EvalMode::StateMatch => EvaluationMode::StateMatch,
            EvalMode::GraphMatch => EvaluationMode::GraphMatch,
            EvalMode::TranslationMatch => EvaluationMode::TranslationMatch,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Code {
    Usage,
    Config,
    Data,
    Convert,
    Execute,
    Misaligned,
    Io,
}

impl Code {
    fn exit(self) -> u8 {
        match self {
            Code::Usage => 2,
            Code::Config => 3,
            Code::Data => 4,
            Code::Convert => 5,
            Code::Execute => 6,
            Code::Misaligned => 7,
            Code::Io => 8,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Code::Usage => "E_USAGE",
            Code::Config => "E_CONFIG",
            Code::Data => "E_DATA",
            Code::Convert => "E_CONVERT",
            Code::Execute => "E_EXECUTE",
            Code::Misaligned => "E_MISALIGNED",
            Code::Io => "E_IO",
        })
    }
}

struct Failure {
    code: Code,
    message: String,
}

fn fail(code: Code, message: impl fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Data(_) | PipelineError::Reference { .. } => Code::Data,
            PipelineError::Write { .. } => Code::Io,
            PipelineError::Record { .. } => Code::Data,
            PipelineError::Oracle { .. } => Code::Execute,
            PipelineError::Misaligned(_) => Code::Misaligned,
        };
        fail(code, e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return report(fail(Code::Usage, first));
        }
    };
    let result = match cli.command {
        Command::Convert => cmd_convert(&cli.config),
        Command::Execute { expressions, dot } => cmd_execute(&cli.config, expressions, dot),
        Command::Evaluate { mode, inputs } => cmd_evaluate(&cli.config, mode.into(), &inputs),
        Command::Repl => cmd_repl(&cli.config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let message = f.message.replace('\n', " ");
    eprintln!("error[{}]: {message}", f.code);
    ExitCode::from(f.code.exit())
}

impl RunConfig {
    fn schema(&self) -> Result<Schema, Failure> {
        match &self.schema {
            Some(p) => Schema::load(p).map_err(|e| fail(Code::Config, e)),
            None => Schema::from_json(DEFAULT_SCHEMA).map_err(|e| fail(Code::Config, e)),
        }
    }

    fn templates(&self) -> Result<Templates, Failure> {
        match &self.templates {
            Some(p) => Templates::load(p).map_err(|e| fail(Code::Config, e)),
            None => Templates::from_json(DEFAULT_TEMPLATES).map_err(|e| fail(Code::Config, e)),
        }
    }

    fn db(&self, schema: &Schema) -> Result<Database, Failure> {
        let dir = existing(self.db_dir.as_deref(), "--db-dir")?;
        Database::load(dir, schema).map_err(|e| fail(Code::Data, e))
    }

    fn corpus(&self, schema: &Schema) -> Result<Vec<RawDialogue>, Failure> {
        let dir = existing(self.data_dir.as_deref(), "--data-dir")?;
        load_dialogues(dir, self.split, schema, LoadOptions { strict: self.strict }).map_err(|e| fail(Code::Data, e))
    }

    fn conversion(&self) -> ConversionOptions {
        ConversionOptions {
            style: self.style,
            omit_get_info: self.omit_get_info,
            source: self.source,
            strict: self.strict,
        }
    }

    fn output_dir(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out).map_err(|e| fail(Code::Io, format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| fail(Code::Config, e))
    }
}

fn existing<'p>(path: Option<&'p Path>, flag: &str) -> Result<&'p Path, Failure> {
    let path = path.ok_or_else(|| fail(Code::Config, format!("{flag} is required")))?;
    if !path.is_dir() {
        return Err(fail(
            Code::Config,
            format!("{flag} {} is not a directory", path.display()),
        ));
    }
    Ok(path)
}

fn cmd_convert(config: &RunConfig) -> Outcome {
    let schema = config.schema()?;
    let dialogues = config.corpus(&schema)?;
    let options = config.conversion();
    let out = config.output_dir()?;
    let converted: Result<Vec<Vec<ExpressionRecord>>, Failure> = config.pool()?.install(|| {
        dialogues
            .par_iter()
            .map(|d| {
                convert_dialogue(&schema, d, &options)
                    .map(|turns| {
                        turns
                            .iter()
                            .map(|t| ExpressionRecord::from_converted(t, options.style))
                            .collect()
                    })
                    .map_err(|e| fail(Code::Convert, format!("{}: {e}", d.dialogue_id)))
            })
            .collect()
    });
    let records: Vec<ExpressionRecord> = converted?.into_iter().flatten().collect();
    let manifest = Manifest {
        options,
        split: config.split.to_string(),
        corpus_hash: corpus_hash(&dialogues),
        dialogues: dialogues.len(),
        turns: records.len(),
        empty_expressions: records.iter().filter(|r| r.expression.is_empty()).count(),
    };
    write_jsonl(&out.join("expressions.jsonl"), &records)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "converted {} dialogues, {} turns, {} empty expressions",
        manifest.dialogues, manifest.turns, manifest.empty_expressions
    );
    Ok(())
}

fn cmd_execute(config: &RunConfig, expressions: Option<PathBuf>, dot: bool) -> Outcome {
    let schema = config.schema()?;
    let templates = config.templates()?;
    let db = config.db(&schema)?;
    let engine = Engine::new(&db, &templates);
    let out = config.output_dir()?;
    let path = expressions.unwrap_or_else(|| out.join("expressions.jsonl"));
    let records: Vec<ExpressionRecord> = read_jsonl(&path)?;
    let groups = group_by_dialogue(records, |r| &r.dialogue_id);

    let corpus = if config.oracle == OracleMode::Off || groups.is_empty() {
        Vec::new()
    } else {
        config.corpus(&schema)?
    };
    let by_id: BTreeMap<&str, &RawDialogue> = corpus.iter().map(|d| (d.dialogue_id.as_str(), d)).collect();

    let results: Vec<Result<DialogueRun, PipelineError>> = config.pool()?.install(|| {
        groups
            .par_iter()
            .map(|(id, turns)| {
                let oracle = oracle_for(config.oracle, id, &by_id)?;
                execute_dialogue(&engine, &templates, id, turns, &oracle)
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = 0;
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                failures += 1;
                log::error!("{e}");
            }
        }
    }
    if failures > 0 && runs.is_empty() {
        return Err(fail(Code::Execute, format!("all {failures} dialogues failed")));
    }

    let traces: Vec<&TurnTrace> = runs.iter().flat_map(|r| &r.traces).collect();
    let states: Vec<&StateRecord> = runs.iter().flat_map(|r| &r.states).collect();
    write_jsonl(&out.join("traces.jsonl"), &traces)?;
    write_jsonl(&out.join("states.jsonl"), &states)?;
    if dot {
        let dir = out.join("graphs");
        std::fs::create_dir_all(&dir).map_err(|e| fail(Code::Io, format!("{}: {e}", dir.display())))?;
        for run in &runs {
            let path = dir.join(format!("{}.dot", run.dialogue_id));
            std::fs::write(&path, to_dot(&run.context))
                .map_err(|e| fail(Code::Io, format!("{}: {e}", path.display())))?;
        }
    }
    println!(
        "executed {} dialogues, {} turns, {} failed",
        runs.len(),
        traces.len(),
        failures
    );
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, mode: EvaluationMode, inputs: &[PathBuf]) -> Outcome {
    let want = match mode {
        EvaluationMode::StateMatch => 1,
        _ => 2,
    };
    if inputs.len() != want {
        return Err(fail(
            Code::Usage,
            format!("{mode:?} takes {want} input file(s), got {}", inputs.len()),
        ));
    }
    let schema = config.schema()?;
    let (report, diffs): (MatchReport, Vec<TurnDiff>) = match mode {
        EvaluationMode::StateMatch => {
            let states: Vec<StateRecord> = read_jsonl(&inputs[0])?;
            let corpus = config.corpus(&schema)?;
            evaluate_state_match(&states, &corpus, &schema)?
        }
        EvaluationMode::GraphMatch => {
            let a: Vec<StateRecord> = read_jsonl(&inputs[0])?;
            let b: Vec<StateRecord> = read_jsonl(&inputs[1])?;
            (evaluate_graph_match(&a, &b, &schema)?, Vec::new())
        }
        EvaluationMode::TranslationMatch => {
            let h: Vec<ExpressionRecord> = read_jsonl(&inputs[0])?;
            let r: Vec<ExpressionRecord> = read_jsonl(&inputs[1])?;
            (evaluate_translation_match(&h, &r)?, Vec::new())
        }
    };
    let out = config.output_dir()?;
    let mode_name = serde_json::to_value(mode).unwrap_or_default();
    let detail = out.join("report_detail.json");
    write_json(&detail, &json!({ "dialogues": report.dialogues, "diffs": diffs }))?;
    let summary = json!({
        "mode": mode_name,
        "options": {
            "split": config.split,
            "style": config.style,
            "omit_get_info": config.omit_get_info,
            "source": config.source.to_string(),
            "oracle": config.oracle,
        },
        "inputs": inputs,
        "turn_pct": report.turn_pct,
        "dialogue_pct": report.dialogue_pct,
        "counts": {
            "turns": report.turn_count,
            "turns_matched": report.turns_matched,
            "dialogues": report.dialogue_count,
            "dialogues_matched": report.dialogues_matched,
        },
        "detail": "report_detail.json",
    });
    write_json(&out.join("report.json"), &summary)?;
    let label = format!("{}, {}", mode_name.as_str().unwrap_or("report"), config.style);
    let table = EvaluationReport {
        mode,
        inputs: inputs.to_vec(),
        report,
        diffs: Vec::new(),
    }
    .table(&label);
    let path = out.join("report.txt");
    std::fs::write(&path, &table).map_err(|e| fail(Code::Io, format!("{}: {e}", path.display())))?;
    print!("{table}");
    Ok(())
}

fn cmd_repl(config: &RunConfig) -> Outcome {
    let schema = config.schema()?;
    let templates = config.templates()?;
    let db = config.db(&schema)?;
    let engine = Engine::new(&db, &templates);
    let oracle = OracleHandle::off();
    let mut ctx = DialogueContext::new("repl");
    let mut state = Default::default();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let io = |e: std::io::Error| fail(Code::Io, e);
    let mut turn = 0;
    loop {
        write!(stdout, "> ").map_err(io)?;
        stdout.flush().map_err(io)?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" => break,
            ":state" => {
                let text = serde_json::to_string_pretty(&state).map_err(|e| fail(Code::Io, e))?;
                writeln!(stdout, "{text}").map_err(io)?;
            }
            ":graph" => write!(stdout, "{}", to_dot(&ctx)).map_err(io)?,
            _ => {
                if let Err(e) = parse(line) {
                    writeln!(stdout, "parse error: {e}").map_err(io)?;
                    continue;
                }
                let outcome = engine
                    .evaluate_text(&mut ctx, line, &oracle)
                    .map_err(|e| fail(Code::Execute, e))?;
                let response =
                    render_agent_response(&oracle, &templates, turn, &outcome).map_err(|e| fail(Code::Execute, e))?;
                writeln!(stdout, "{response}").map_err(io)?;
                state = outcome.state;
                turn += 1;
            }
        }
    }
    Ok(())
}
