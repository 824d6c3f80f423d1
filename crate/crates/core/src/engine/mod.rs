//! Execution of DF expressions as computational graphs.
//!
//! Every user turn appends nodes to an append-only arena. Node ids grow in
//! evaluation order, so "most recent" searches are a reverse scan over ids.
//! `revise` never edits a node: it builds a merged constraint node and a new
//! task node pointing at its predecessor.

mod dot;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Database, DomainSchema, Normalizer, Schema, SlotKind};
use crate::domains::{
    execute_find, execute_get_info, BookInfo, BookingRecord, DomainConstraint, DomainEnv, Effects, SelectedEntity,
    Suggestion, SuggestionUpdate, TaskState,
};
use crate::lang::{expand, parse, Expression, Suffix};
use crate::metrics::{collect_graph_state, GraphState};
use crate::oracle::{apply_agent_acts, Decision, DecisionPoint, OracleError, OracleHandle, OracleMode};
use crate::templates::{slots, AgentMessage, Templates};

pub use dot::to_dot;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionKind {
    MissingInput,
    NoMatch,
    UnresolvedRefer,
    BadExpression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfException {
    pub kind: ExceptionKind,
    pub prompt: String,
    pub source_node: NodeId,
    pub missing_slots: Vec<String>,
    /// Task domain the exception belongs to; `None` for expression-level errors.
    pub domain: Option<String>,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub turn: usize,
    pub domain: String,
    pub point: DecisionPoint,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Value {
    Unit,
    Literal { text: String },
    Constraint(DomainConstraint),
    BookInfo(BookInfo),
    Entity(SelectedEntity),
    Task(TaskState),
    Booking(BookingRecord),
}

impl Value {
    /// Slot view used by refer filters.
    pub fn slot(&self, slot: &str) -> Option<&str> {
        let v = match self {
            Value::Constraint(c) => c.slots.get(slot),
            Value::BookInfo(b) => b.slots.get(slot),
            Value::Entity(e) => return e.record.get(slot),
            Value::Task(t) => t.constraint.slots.get(slot),
            Value::Booking(b) => b.booking_slots.get(slot),
            Value::Unit | Value::Literal { .. } => None,
        };
        v.map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub type_name: String,
    pub inputs: BTreeMap<String, NodeId>,
    pub result: Option<Value>,
    pub origin_turn: usize,
}

impl Node {
    pub fn input(&self, name: &str) -> Option<NodeId> {
        self.inputs.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub turn: usize,
    pub messages: Vec<AgentMessage>,
    pub raised: Option<DfException>,
    pub root: NodeId,
    pub state: GraphState,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DialogueContext {
    pub dialogue_id: String,
    pub nodes: Vec<Node>,
    pub turn_roots: Vec<NodeId>,
    /// Unresolved exceptions, most recent first.
    pub exceptions: Vec<DfException>,
    pub suggestions: BTreeMap<String, Suggestion>,
    pub bookings: Vec<BookingRecord>,
    pub messages: Vec<AgentMessage>,
    /// Latest task node per domain.
    pub tasks: BTreeMap<String, NodeId>,
    /// Domain of the most recently touched task.
    pub active_domain: Option<String>,
    pub decisions: Vec<DecisionRecord>,
}

impl DialogueContext {
    pub fn new(dialogue_id: &str) -> DialogueContext {
        DialogueContext {
            dialogue_id: dialogue_id.to_string(),
            ..Default::default()
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn task_state(&self, domain: &str) -> Option<&TaskState> {
        match &self.nodes[*self.tasks.get(domain)?].result {
            Some(Value::Task(t)) => Some(t),
            _ => None,
        }
    }

    /// Most recent node of `type_name` whose result passes `accept` and
    /// carries every filter slot (compared after normalization).
    pub fn search<F>(
        &self,
        type_name: &str,
        filters: &BTreeMap<String, String>,
        normalizer: &Normalizer,
        accept: F,
    ) -> Option<NodeId>
    where
        F: Fn(&Value) -> bool,
    {
        self.nodes
            .iter()
            .rev()
            .find(|n| {
                n.type_name == type_name
                    && n.result.as_ref().is_some_and(|v| {
                        accept(v)
                            && filters
                                .iter()
                                .all(|(s, want)| v.slot(s).is_some_and(|have| normalizer.eq(have, want)))
                    })
            })
            .map(|n| n.id)
    }

    /// Resolves a `Type??(slot=value, ...)` pattern to the most recent
    /// matching node.
    pub fn refer(&self, pattern: &Expression, normalizer: &Normalizer) -> Option<NodeId> {
        let head = pattern.head()?;
        let filters = literal_filters(pattern)?;
        self.search(head, &filters, normalizer, |v| {
            !matches!(v, Value::Unit | Value::Literal { .. })
        })
    }
}

fn literal_filters(pattern: &Expression) -> Option<BTreeMap<String, String>> {
    pattern
        .args()
        .iter()
        .map(|a| Some((a.name.clone()?, a.value.as_literal()?.to_string())))
        .collect()
}

/// Shared, immutable execution resources.
pub struct Engine<'a> {
    pub db: &'a Database,
    pub templates: &'a Templates,
}

enum Input<'x> {
    Empty,
    Expr(&'x Expression),
    Unparseable,
}

enum Stop {
    Bad(NodeId),
    Oracle(OracleError),
}

impl From<OracleError> for Stop {
    fn from(e: OracleError) -> Self {
        Stop::Oracle(e)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Constraint,
    BookInfo,
}

struct Exec<'e, 'a> {
    engine: &'e Engine<'a>,
    ctx: &'e mut DialogueContext,
    oracle: &'e OracleHandle,
    turn: usize,
    messages: Vec<AgentMessage>,
    raised: Vec<(DfException, AgentMessage)>,
}

impl<'a> Engine<'a> {
    pub fn new(db: &'a Database, templates: &'a Templates) -> Engine<'a> {
        Engine { db, templates }
    }

    pub fn schema(&self) -> &Schema {
        self.db.schema()
    }

    /// Executes one user turn. `None` stands for an empty expression.
    ///
    /// Simplified heads are expanded first; a domain opens a task when no task
    /// node exists for it yet. In full and partial modes the agent's recorded
    /// acts for the turn are applied afterwards.
    pub fn evaluate_turn(
        &self,
        ctx: &mut DialogueContext,
        expr: Option<&Expression>,
        oracle: &OracleHandle,
    ) -> Result<TurnOutcome, OracleError> {
        self.run(ctx, expr.map_or(Input::Empty, Input::Expr), oracle)
    }

    /// Parses and executes `text`; blank text is the empty expression and an
    /// unparseable one is recorded as a bad_expression turn.
    pub fn evaluate_text(
        &self,
        ctx: &mut DialogueContext,
        text: &str,
        oracle: &OracleHandle,
    ) -> Result<TurnOutcome, OracleError> {
        if text.trim().is_empty() {
            return self.run(ctx, Input::Empty, oracle);
        }
        match parse(text) {
            Ok(e) => self.run(ctx, Input::Expr(&e), oracle),
            Err(err) => {
                log::debug!("unparseable expression {text:?}: {err}");
                self.run(ctx, Input::Unparseable, oracle)
            }
        }
    }

    fn run(
        &self,
        ctx: &mut DialogueContext,
        input: Input<'_>,
        oracle: &OracleHandle,
    ) -> Result<TurnOutcome, OracleError> {
        let turn = ctx.turn_roots.len();
        ctx.exceptions.retain(|e| e.domain.is_some());
        let mut exec = Exec {
            engine: self,
            ctx,
            oracle,
            turn,
            messages: Vec::new(),
            raised: Vec::new(),
        };

        let root = match input {
            Input::Empty => exec.push("noop", &[], Some(Value::Unit)),
            Input::Unparseable => match exec.bad_expression() {
                Stop::Bad(id) => id,
                Stop::Oracle(err) => return Err(err),
            },
            Input::Expr(e) => {
                let opens: BTreeSet<String> = self
                    .schema()
                    .domains
                    .keys()
                    .filter(|d| !exec.ctx.tasks.contains_key(*d))
                    .cloned()
                    .collect();
                match expand(e, self.schema(), &opens) {
                    Ok(expanded) => match exec.eval(&expanded) {
                        Ok(id) => id,
                        Err(Stop::Bad(id)) => id,
                        Err(Stop::Oracle(err)) => return Err(err),
                    },
                    Err(err) => {
                        log::debug!("expansion failed: {err}");
                        match exec.bad_expression() {
                            Stop::Bad(id) => id,
                            Stop::Oracle(err) => return Err(err),
                        }
                    }
                }
            }
        };

        let Exec {
            mut messages, raised, ..
        } = exec;
        let last = raised.last().map(|(e, _)| e.clone());
        messages.extend(raised.into_iter().map(|(_, m)| m));
        ctx.turn_roots.push(root);
        ctx.messages.extend(messages.iter().cloned());
        let state = collect_graph_state(ctx, self.schema());

        if oracle.mode != OracleMode::Off {
            if let Some(info) = oracle.agent_turn(turn)? {
                apply_agent_acts(ctx, self.db, info);
            }
        }

        Ok(TurnOutcome {
            turn,
            messages,
            raised: last,
            root,
            state,
        })
    }
}

impl Exec<'_, '_> {
    fn schema(&self) -> &Schema {
        self.engine.db.schema()
    }

    fn normalizer(&self) -> &Normalizer {
        self.engine.db.normalizer()
    }

    fn push(&mut self, type_name: &str, inputs: &[(&str, NodeId)], result: Option<Value>) -> NodeId {
        let id = self.ctx.nodes.len();
        self.ctx.nodes.push(Node {
            id,
            type_name: type_name.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            result,
            origin_turn: self.turn,
        });
        id
    }

    fn raise(&mut self, mut exception: DfException, prompt: AgentMessage) {
        if let Some(d) = &exception.domain {
            self.ctx.exceptions.retain(|e| e.domain.as_ref() != Some(d));
            self.raised.retain(|(e, _)| e.domain.as_ref() != Some(d));
        }
        if exception.prompt.is_empty() {
            exception.prompt = prompt.text.clone();
        }
        self.ctx.exceptions.insert(0, exception.clone());
        self.raised.push((exception, prompt));
    }

    fn resolve(&mut self, domain: &str) {
        self.ctx.exceptions.retain(|e| e.domain.as_deref() != Some(domain));
        self.raised.retain(|(e, _)| e.domain.as_deref() != Some(domain));
    }

    fn fail(&mut self, kind: ExceptionKind, prompt: AgentMessage) -> Stop {
        let id = self.push("error", &[], None);
        self.raise(
            DfException {
                kind,
                prompt: prompt.text.clone(),
                source_node: id,
                missing_slots: Vec::new(),
                domain: None,
                turn: self.turn,
            },
            prompt,
        );
        Stop::Bad(id)
    }

    fn bad_expression(&mut self) -> Stop {
        let prompt = self.engine.templates.general("bad_expression");
        self.fail(ExceptionKind::BadExpression, prompt)
    }

    fn unresolved(&mut self, what: &str) -> Stop {
        let prompt = self
            .engine
            .templates
            .render("general", "unresolved_refer", slots(&[("what", what)]));
        self.fail(ExceptionKind::UnresolvedRefer, prompt)
    }

    fn eval(&mut self, expr: &Expression) -> Result<NodeId, Stop> {
        let Expression::Call { head, args, .. } = expr else {
            let text = expr.as_literal().unwrap_or_default().to_string();
            return Ok(self.push("Literal", &[], Some(Value::Literal { text })));
        };
        match head.as_str() {
            "cont_turn" => {
                if args.len() != 2 || args.iter().any(|a| a.name.is_some()) {
                    return Err(self.bad_expression());
                }
                let first = self.eval(&args[0].value)?;
                let second = self.eval(&args[1].value)?;
                Ok(self.push("cont_turn", &[("first", first), ("second", second)], Some(Value::Unit)))
            }
            "raise_task" => {
                let task = match (args.len(), expr.positional(0).and_then(Expression::as_literal)) {
                    (1, Some(t)) => t.to_string(),
                    _ => return Err(self.bad_expression()),
                };
                self.raise_task(&task)
            }
            "revise" => self.revise(expr),
            "refer" => {
                let Some(pattern) = expr.positional(0).filter(|_| args.len() == 1) else {
                    return Err(self.bad_expression());
                };
                let found = self.refer(pattern)?;
                let result = self.ctx.nodes[found].result.clone();
                Ok(self.push("refer", &[("target", found)], result))
            }
            h if h.starts_with("General_") => self.general(h, args.len()),
            h => match h.strip_prefix("get_").and_then(|r| r.strip_suffix("_info")) {
                Some(domain) => self.get_info(domain, expr),
                None => Err(self.bad_expression()),
            },
        }
    }

    fn general(&mut self, head: &str, arity: usize) -> Result<NodeId, Stop> {
        let situation = match head {
            "General_bye" => "bye",
            "General_thank" => "thank",
            "General_greet" => "greet",
            "General_reqmore" | "General_welcome" => "keep_alive",
            _ => return Err(self.bad_expression()),
        };
        if arity != 0 {
            return Err(self.bad_expression());
        }
        let msg = self.engine.templates.general(situation);
        self.messages.push(msg);
        Ok(self.push(head, &[], Some(Value::Unit)))
    }

    fn refer(&mut self, pattern: &Expression) -> Result<NodeId, Stop> {
        if !matches!(pattern, Expression::Call { suffix, .. } if *suffix != Suffix::None) {
            return Err(self.bad_expression());
        }
        match self.ctx.refer(pattern, self.normalizer()) {
            Some(id) => Ok(id),
            None => {
                let what = pattern.head().unwrap_or("item").to_lowercase();
                Err(self.unresolved(&what))
            }
        }
    }

    fn create_task(&mut self, domain: &DomainSchema) -> NodeId {
        let fresh = TaskState::fresh(&domain.name);
        let c = self.push(
            &domain.constraint_type,
            &[],
            Some(Value::Constraint(fresh.constraint.clone())),
        );
        let b = self.push(&domain.book_info_type, &[], Some(Value::BookInfo(fresh.book.clone())));
        let t = self.push(
            &domain.find_task,
            &[("constraint", c), ("book", b)],
            Some(Value::Task(fresh)),
        );
        self.ctx.tasks.insert(domain.name.clone(), t);
        self.ctx.suggestions.remove(&domain.name);
        self.ctx.active_domain = Some(domain.name.clone());
        self.resolve(&domain.name);
        t
    }

    fn raise_task(&mut self, task_type: &str) -> Result<NodeId, Stop> {
        let Some(domain) = self.schema().domain_by_find_task(task_type).cloned() else {
            return Err(self.bad_expression());
        };
        let open = self
            .ctx
            .tasks
            .get(&domain.name)
            .copied()
            .filter(|_| !self.ctx.task_state(&domain.name).is_some_and(TaskState::concluded));
        let task = match open {
            Some(t) => t,
            None => self.create_task(&domain),
        };
        self.ctx.active_domain = Some(domain.name.clone());
        Ok(self.push("raise_task", &[("task", task)], Some(Value::Unit)))
    }

    /// Value of one slot argument: a literal, `LIKE(Name(x))`, or a refer.
    fn slot_value(&mut self, expr: &Expression, slot: &str) -> Result<String, Stop> {
        match expr {
            Expression::Literal(t) => Ok(self.normalizer().normalize(t)),
            Expression::Call { head, args, .. } if (head == "LIKE" || head == "Name") && args.len() == 1 => {
                self.slot_value(&args[0].value, slot)
            }
            Expression::Call { head, args, .. } if head == "refer" && args.len() == 1 => {
                let found = self.refer(&args[0].value)?;
                let value = match &self.ctx.nodes[found].result {
                    Some(Value::Entity(e)) => {
                        let id_slot = self
                            .schema()
                            .domain(&e.domain)
                            .and_then(|d| d.id_slot.clone())
                            .unwrap_or_else(|| "name".into());
                        e.record.get(slot).or(e.record.get(&id_slot)).map(str::to_string)
                    }
                    Some(v) => v.slot(slot).map(str::to_string),
                    None => None,
                };
                match value {
                    Some(v) => Ok(self.normalizer().normalize(&v)),
                    None => Err(self.unresolved(slot)),
                }
            }
            _ => Err(self.bad_expression()),
        }
    }

    fn revise(&mut self, expr: &Expression) -> Result<NodeId, Stop> {
        let (Some(old), Some(mode), Some(new)) = (expr.arg("old"), expr.arg("newMode"), expr.arg("new")) else {
            return Err(self.bad_expression());
        };
        if expr.args().len() != 3 || mode.as_literal() != Some("overwrite") {
            return Err(self.bad_expression());
        }
        let (Some(type_name), Some(new_type)) = (old.head(), new.head()) else {
            return Err(self.bad_expression());
        };
        if type_name != new_type {
            log::debug!("revise type mismatch: {type_name} vs {new_type}");
            return Err(self.bad_expression());
        }
        let schema = self.schema();
        let (domain, role) = if let Some(d) = schema.domain_by_constraint_type(type_name) {
            (d.clone(), Role::Constraint)
        } else if let Some(d) = schema.domain_by_book_info_type(type_name) {
            (d.clone(), Role::BookInfo)
        } else {
            return Err(self.bad_expression());
        };
        let wanted_kind = match role {
            Role::Constraint => SlotKind::Informable,
            Role::BookInfo => SlotKind::Booking,
        };

        let mut fields = BTreeMap::new();
        for arg in new.args() {
            let Some(name) = &arg.name else {
                return Err(self.bad_expression());
            };
            let slot = if domain.slot_kind(name).is_some() {
                name.clone()
            } else {
                domain.canonical_slot(name)
            };
            if domain.slot_kind(&slot) != Some(wanted_kind) {
                return Err(self.bad_expression());
            }
            let value = self.slot_value(&arg.value, &slot)?;
            fields.insert(slot, value);
        }
        let Some(filters) = literal_filters(old) else {
            return Err(self.bad_expression());
        };

        let accept = |v: &Value| match role {
            Role::Constraint => matches!(v, Value::Constraint(_)),
            Role::BookInfo => matches!(v, Value::BookInfo(_)),
        };
        let mut matched = self.ctx.search(type_name, &filters, self.normalizer(), accept);
        if matched.is_none() && !self.ctx.tasks.contains_key(&domain.name) {
            self.create_task(&domain);
            matched = self.ctx.search(type_name, &filters, self.normalizer(), accept);
        }
        let Some(matched) = matched else {
            return Err(self.unresolved(&type_name.to_lowercase()));
        };
        let owner = match self.ctx.tasks.get(&domain.name) {
            Some(t) => *t,
            None => self.create_task(&domain),
        };

        let (new_value, merged_value) = match (&self.ctx.nodes[matched].result, role) {
            (Some(Value::Constraint(c)), Role::Constraint) => {
                let mut merged = c.clone();
                merged.slots.extend(fields.clone());
                merged.concluded = false;
                let fresh = DomainConstraint {
                    domain: domain.name.clone(),
                    slots: fields,
                    concluded: false,
                };
                (Value::Constraint(fresh), Value::Constraint(merged))
            }
            (Some(Value::BookInfo(b)), Role::BookInfo) => {
                let mut merged = b.clone();
                merged.slots.extend(fields.clone());
                let fresh = BookInfo {
                    domain: domain.name.clone(),
                    slots: fields,
                };
                (Value::BookInfo(fresh), Value::BookInfo(merged))
            }
            _ => return Err(self.bad_expression()),
        };
        let new_node = self.push(type_name, &[], Some(new_value));
        let merged = self.push(type_name, &[("old", matched), ("new", new_node)], Some(merged_value));

        let owner_node = &self.ctx.nodes[owner];
        let (mut constraint_id, mut book_id) = match (owner_node.input("constraint"), owner_node.input("book")) {
            (Some(c), Some(b)) => (c, b),
            _ => return Err(self.bad_expression()),
        };
        match role {
            Role::Constraint => constraint_id = merged,
            Role::BookInfo => book_id = merged,
        }
        let task = self.run_task(&domain, owner, constraint_id, book_id, role == Role::BookInfo)?;
        Ok(self.push(
            "revise",
            &[("old", matched), ("new", new_node), ("task", task)],
            Some(Value::Unit),
        ))
    }

    fn env(&self) -> DomainEnv<'_> {
        DomainEnv {
            db: self.engine.db,
            templates: self.engine.templates,
            oracle: self.oracle,
            dialogue_id: &self.ctx.dialogue_id,
            turn: self.turn,
        }
    }

    fn run_task(
        &mut self,
        domain: &DomainSchema,
        owner: NodeId,
        constraint_id: NodeId,
        book_id: NodeId,
        booking_requested: bool,
    ) -> Result<NodeId, Stop> {
        let (Some(Value::Task(prev)), Some(Value::Constraint(constraint)), Some(Value::BookInfo(book))) = (
            self.ctx.nodes[owner].result.clone(),
            self.ctx.nodes[constraint_id].result.clone(),
            self.ctx.nodes[book_id].result.clone(),
        ) else {
            return Err(self.bad_expression());
        };
        let pending = self.ctx.suggestions.get(&domain.name).cloned();
        let mut fx = Effects::default();
        let outcome = execute_find(
            &self.env(),
            &mut fx,
            &prev,
            constraint,
            book,
            pending.as_ref(),
            booking_requested,
        )?;

        let task = self.push(
            &domain.find_task,
            &[("constraint", constraint_id), ("book", book_id), ("prev", owner)],
            Some(Value::Task(outcome.state.clone())),
        );
        self.ctx.tasks.insert(domain.name.clone(), task);
        self.ctx.active_domain = Some(domain.name.clone());
        if let Some(selected) = &outcome.state.selected {
            self.push(
                &domain.constraint_type,
                &[("task", task)],
                Some(Value::Entity(selected.clone())),
            );
        }
        if let Some(booking) = outcome.new_booking {
            self.push(
                &format!("Book{}", domain.constraint_type),
                &[("task", task)],
                Some(Value::Booking(booking.clone())),
            );
            self.ctx.bookings.push(booking);
        }
        match outcome.suggestion {
            SuggestionUpdate::Keep => {}
            SuggestionUpdate::Set(s) => {
                self.ctx.suggestions.insert(domain.name.clone(), s);
            }
            SuggestionUpdate::Clear => {
                self.ctx.suggestions.remove(&domain.name);
            }
        }
        self.absorb(fx, &domain.name, task, true);
        Ok(task)
    }

    fn absorb(&mut self, fx: Effects, domain: &str, source: NodeId, resolves: bool) {
        self.messages.extend(fx.messages);
        self.ctx.decisions.extend(fx.decisions);
        match fx.raised {
            Some(r) => self.raise(
                DfException {
                    kind: r.kind,
                    prompt: r.prompt.text.clone(),
                    source_node: source,
                    missing_slots: r.missing_slots,
                    domain: Some(domain.to_string()),
                    turn: self.turn,
                },
                r.prompt,
            ),
            None if resolves => self.resolve(domain),
            None => {}
        }
    }

    fn get_info(&mut self, domain_name: &str, expr: &Expression) -> Result<NodeId, Stop> {
        let Some(domain) = self.schema().domain(domain_name).cloned() else {
            return Err(self.bad_expression());
        };
        let mut fields = Vec::new();
        for arg in expr.args() {
            let Some(raw) = arg.value.as_literal().filter(|_| arg.name.is_none()) else {
                return Err(self.bad_expression());
            };
            let field = domain.canonical_slot(raw);
            if !domain.is_requestable(&field) {
                return Err(self.bad_expression());
            }
            if !fields.contains(&field) {
                fields.push(field);
            }
        }

        let owner = self.ctx.tasks.get(domain_name).copied();
        let state = owner
            .and_then(|_| self.ctx.task_state(domain_name).cloned())
            .unwrap_or_else(|| TaskState::fresh(domain_name));
        let pending = self.ctx.suggestions.get(domain_name).cloned();
        let mut fx = Effects::default();
        let accepted = execute_get_info(&self.env(), &mut fx, &state, pending.as_ref(), &fields);

        let mut task = owner;
        if let (Some(owner), Some(selected)) = (owner, accepted) {
            let owner_node = &self.ctx.nodes[owner];
            let (c, b) = (owner_node.input("constraint"), owner_node.input("book"));
            let mut inputs = vec![("prev", owner)];
            inputs.extend(c.map(|c| ("constraint", c)));
            inputs.extend(b.map(|b| ("book", b)));
            let mut next = state.clone();
            next.constraint.concluded = true;
            next.selected = Some(selected.clone());
            let t = self.push(&domain.find_task, &inputs, Some(Value::Task(next)));
            self.push(&domain.constraint_type, &[("task", t)], Some(Value::Entity(selected)));
            self.ctx.tasks.insert(domain_name.to_string(), t);
            self.ctx.suggestions.remove(domain_name);
            task = Some(t);
        }
        if owner.is_some() {
            self.ctx.active_domain = Some(domain_name.to_string());
        }

        let head = expr.head().unwrap_or("get_info").to_string();
        let inputs: Vec<(&str, NodeId)> = task.map(|t| ("task", t)).into_iter().collect();
        let result = if fx.raised.is_some() { None } else { Some(Value::Unit) };
        let node = self.push(&head, &inputs, result);
        self.absorb(fx, domain_name, node, false);
        Ok(node)
    }
}

#[cfg(test)]
mod tests;
