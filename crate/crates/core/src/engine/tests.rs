use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::data::{Database, Schema};
use crate::domains::{DomainConstraint, TaskState};
use crate::lang::parse;
use crate::oracle::OracleHandle;
use crate::templates::Templates;

fn data_path(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

struct Fixture {
    db: Database,
    templates: Templates,
}

impl Fixture {
    fn new() -> Fixture {
        let schema = Schema::load(&data_path("schema.json")).unwrap();
        Fixture {
            db: Database::load(&data_path("fixtures/db"), &schema).unwrap(),
            templates: Templates::load(&data_path("templates.json")).unwrap(),
        }
    }

    fn engine(&self) -> Engine<'_> {
        Engine::new(&self.db, &self.templates)
    }
}

fn run_all(engine: &Engine<'_>, id: &str, turns: &[&str]) -> (DialogueContext, Vec<TurnOutcome>) {
    let mut ctx = DialogueContext::new(id);
    let oracle = OracleHandle::off();
    let outcomes = turns
        .iter()
        .map(|t| engine.evaluate_text(&mut ctx, t, &oracle).unwrap())
        .collect();
    (ctx, outcomes)
}

fn texts(o: &TurnOutcome) -> String {
    o.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join(" ")
}

#[test]
fn find_then_book_in_off_mode() {
    let f = Fixture::new();
    let (ctx, out) = run_all(
        &f.engine(),
        "SNG0551",
        &[
            "revise_restaurant(name=city stop restaurant)",
            "revise_restaurant(bookday=thursday, bookpeople=4, booktime=17:30)",
            "General_bye()",
        ],
    );
    let r = &out[0].state["restaurant"];
    assert_eq!(r["food"], "european");
    assert_eq!(r["area"], "north");
    assert_eq!(r["pricerange"], "expensive");
    assert!(texts(&out[0]).contains("On which day"));
    assert_eq!(
        out[0].raised.as_ref().map(|e| e.kind),
        Some(ExceptionKind::MissingInput)
    );
    assert_eq!(ctx.bookings.len(), 1);
    let reference = &ctx.bookings[0].reference;
    assert_eq!(reference.len(), 8);
    assert!(texts(&out[1]).contains(reference.as_str()));
    assert!(out[1].raised.is_none());
    assert!(texts(&out[2]).contains("Goodbye"));
    assert!(ctx.exceptions.is_empty());
}

#[test]
fn raise_task_reuses_open_task() {
    let f = Fixture::new();
    let (ctx, _) = run_all(
        &f.engine(),
        "d",
        &[
            "raise_task(FindHotel)",
            "raise_task(FindHotel)",
            "revise(old=Hotel??(), newMode=overwrite, new=Hotel?(area=north))",
        ],
    );
    let creations = ctx
        .nodes
        .iter()
        .filter(|n| n.type_name == "FindHotel" && !n.inputs.contains_key("prev"))
        .count();
    assert_eq!(creations, 1);
    assert_eq!(ctx.task_state("hotel").unwrap().constraint.slots["area"], "north");
}

#[test]
fn unknown_task_is_a_bad_expression() {
    let f = Fixture::new();
    let (ctx, out) = run_all(
        &f.engine(),
        "d",
        &["cont_turn(raise_task(FindSpaceship), General_bye())"],
    );
    let raised = out[0].raised.as_ref().unwrap();
    assert_eq!(raised.kind, ExceptionKind::BadExpression);
    assert!(ctx.nodes[raised.source_node].result.is_none());
    assert!(ctx.tasks.is_empty());
}

#[test]
fn revise_type_mismatch_is_a_bad_expression() {
    let f = Fixture::new();
    let (_, out) = run_all(
        &f.engine(),
        "d",
        &["revise(old=Hotel??(), newMode=overwrite, new=Restaurant?(area=north))"],
    );
    assert_eq!(out[0].raised.as_ref().unwrap().kind, ExceptionKind::BadExpression);
}

#[test]
fn unparseable_text_is_recorded() {
    let f = Fixture::new();
    let (ctx, out) = run_all(&f.engine(), "d", &["revise_hotel(area=", "revise_hotel(area=north)"]);
    assert_eq!(out[0].raised.as_ref().unwrap().kind, ExceptionKind::BadExpression);
    assert_eq!(out[1].state["hotel"]["area"], "north");
    assert_eq!(ctx.turn_roots.len(), 2);
}

#[test]
fn history_is_append_only() {
    let f = Fixture::new();
    let engine = f.engine();
    let oracle = OracleHandle::off();
    let mut ctx = DialogueContext::new("d");
    let turns = [
        "revise_restaurant(area=centre)",
        "revise_restaurant(food=indian)",
        "get_restaurant_info(phone)",
        "revise_restaurant(bookday=monday, bookpeople=2, booktime=18:00)",
        "revise_restaurant(food=spaceship)",
        "General_bye()",
    ];
    for t in turns {
        let before = ctx.nodes.clone();
        engine.evaluate_text(&mut ctx, t, &oracle).unwrap();
        assert_eq!(&ctx.nodes[..before.len()], &before[..]);
        assert!(ctx.nodes.iter().enumerate().all(|(i, n)| n.id == i));
    }
}

#[test]
fn no_match_keeps_previous_constraint_reachable() {
    let f = Fixture::new();
    let (ctx, out) = run_all(
        &f.engine(),
        "d",
        &[
            "revise_restaurant(area=centre)",
            "revise_restaurant(food=spaceship)",
            "revise_restaurant(food=indian)",
        ],
    );
    assert_eq!(out[1].raised.as_ref().unwrap().kind, ExceptionKind::NoMatch);
    let state = ctx.task_state("restaurant").unwrap();
    assert_eq!(state.constraint.slots["food"], "indian");
    assert_eq!(state.constraint.slots["area"], "centre");
    assert!(ctx.exceptions.is_empty());
}

#[test]
fn missing_input_resumes_after_answer() {
    let f = Fixture::new();
    let (ctx, out) = run_all(
        &f.engine(),
        "d",
        &[
            "revise_hotel(name=university arms hotel)",
            "revise_hotel(bookpeople=2)",
            "revise_hotel(bookday=monday, bookstay=3)",
        ],
    );
    let e = out[1].raised.as_ref().unwrap();
    assert_eq!(e.kind, ExceptionKind::MissingInput);
    assert_eq!(e.missing_slots, vec!["bookday".to_string()]);
    assert!(out[2].raised.is_none());
    let booking = ctx.task_state("hotel").unwrap().booking.clone().unwrap();
    assert_eq!(booking.booking_slots["bookpeople"], "2");
    assert_eq!(booking.booking_slots["bookstay"], "3");
    assert!(ctx.exceptions.is_empty());
}

#[test]
fn get_info_without_entity_asks_for_one() {
    let f = Fixture::new();
    let (ctx, out) = run_all(&f.engine(), "d", &["get_attraction_info(postcode)"]);
    let e = out[0].raised.as_ref().unwrap();
    assert_eq!(e.kind, ExceptionKind::MissingInput);
    assert!(ctx.nodes[e.source_node].result.is_none());
}

#[test]
fn get_info_leaves_constraint_unchanged() {
    let f = Fixture::new();
    let (ctx, out) = run_all(
        &f.engine(),
        "d",
        &[
            "revise_attraction(area=east, type=museum)",
            "get_attraction_info(entrancefee, postcode)",
        ],
    );
    assert!(texts(&out[1]).contains("cb13ef"));
    let state = ctx.task_state("attraction").unwrap();
    assert_eq!(state.constraint.slots.len(), 2);
    assert_eq!(
        state.selected.as_ref().unwrap().selected_by,
        crate::domains::SelectedBy::RuleDefault
    );
}

#[test]
fn execution_is_deterministic() {
    let f = Fixture::new();
    let turns = [
        "revise_hotel(area=centre, pricerange=cheap)",
        "revise_hotel(bookday=friday, bookpeople=3, bookstay=2)",
        "revise_taxi(departure=alexander bed and breakfast, destination=all saints church, leaveat=10:00)",
    ];
    let (a, _) = run_all(&f.engine(), "X1", &turns);
    let (b, _) = run_all(&f.engine(), "X1", &turns);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn selected_entities_satisfy_constraints() {
    let f = Fixture::new();
    let (ctx, _) = run_all(
        &f.engine(),
        "d",
        &[
            "revise_restaurant(area=north, pricerange=cheap)",
            "revise_restaurant(bookday=sunday, bookpeople=2, booktime=12:00)",
        ],
    );
    let state = ctx.task_state("restaurant").unwrap();
    let record = &state.selected.as_ref().unwrap().record;
    let n = f.db.normalizer();
    for (slot, value) in &state.constraint.slots {
        assert!(n.eq(record.get(slot).unwrap(), value), "{slot}");
    }
}

fn constraint(domain: &str, area: &str) -> Value {
    Value::Constraint(DomainConstraint {
        domain: domain.into(),
        slots: BTreeMap::from([("area".to_string(), area.to_string())]),
        concluded: false,
    })
}

fn arb_nodes() -> impl Strategy<Value = Vec<(String, Option<String>)>> {
    prop::collection::vec(
        (
            prop::sample::select(vec!["Restaurant", "Hotel", "FindHotel"]).prop_map(String::from),
            prop::option::of(prop::sample::select(vec!["north", "centre", "south"]).prop_map(String::from)),
        ),
        0..12,
    )
}

fn build(layout: &[(String, Option<String>)]) -> DialogueContext {
    let mut ctx = DialogueContext::new("p");
    for (i, (ty, area)) in layout.iter().enumerate() {
        let result = match (ty.as_str(), area) {
            ("FindHotel", _) => Some(Value::Task(TaskState::fresh("hotel"))),
            (_, Some(a)) => Some(constraint(&ty.to_lowercase(), a)),
            (_, None) => None,
        };
        ctx.nodes.push(Node {
            id: i,
            type_name: ty.clone(),
            inputs: BTreeMap::new(),
            result,
            origin_turn: i / 3,
        });
    }
    ctx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn refer_returns_most_recent_match(
        layout in arb_nodes(),
        ty in prop::sample::select(vec!["Restaurant", "Hotel"]),
        area in prop::option::of(prop::sample::select(vec!["north", "centre", "south"])),
    ) {
        let ctx = build(&layout);
        let schema = Schema::load(&data_path("schema.json")).unwrap();
        let pattern = match area {
            Some(a) => format!("{ty}??(area={a})"),
            None => format!("{ty}??()"),
        };
        let got = ctx.refer(&parse(&pattern).unwrap(), &schema.normalizer());
        let mut expected = None;
        for (i, (t, a)) in layout.iter().enumerate() {
            if t == ty && a.is_some() && (area.is_none() || a.as_deref() == area) {
                expected = Some(i);
            }
        }
        prop_assert_eq!(got, expected);
    }
}

fn arb_revisions() -> impl Strategy<Value = Vec<(bool, &'static str)>> {
    prop::collection::vec(
        (
            any::<bool>(),
            prop::sample::select(vec!["north", "centre", "south", "east", "west"]),
        ),
        1..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn revise_targets_most_recent_constraint(steps in arb_revisions()) {
        let f = Fixture::new();
        let engine = f.engine();
        let oracle = OracleHandle::off();
        let mut ctx = DialogueContext::new("p");
        for (hotel, area) in steps {
            let ty = if hotel { "Hotel" } else { "Restaurant" };
            let text = format!("revise(old={ty}??(), newMode=overwrite, new={ty}?(area={area}))");
            engine.evaluate_text(&mut ctx, &text, &oracle).unwrap();
            let root = *ctx.turn_roots.last().unwrap();
            let revise = ctx.nodes[..=root].iter().rev().find(|n| n.type_name == "revise").unwrap();
            let new_id = revise.input("new").unwrap();
            let mut expected = None;
            for n in &ctx.nodes[..new_id] {
                if n.type_name == ty && matches!(n.result, Some(Value::Constraint(_))) {
                    expected = Some(n.id);
                }
            }
            prop_assert_eq!(revise.input("old"), expected);
            let domain = ty.to_lowercase();
            prop_assert_eq!(ctx.task_state(&domain).unwrap().constraint.slots["area"].as_str(), area);
        }
    }
}
