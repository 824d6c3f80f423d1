use std::fmt::Write;

use super::{DialogueContext, Value};

/// Graphviz rendering of the whole dialogue graph, one cluster per turn.
pub fn to_dot(ctx: &DialogueContext) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&ctx.dialogue_id));
    let _ = writeln!(out, "  rankdir=BT;");
    let _ = writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];");
    let turns = ctx.nodes.iter().map(|n| n.origin_turn).max().map_or(0, |t| t + 1);
    for turn in 0..turns {
        let _ = writeln!(out, "  subgraph cluster_{turn} {{");
        let _ = writeln!(out, "    label=\"turn {turn}\";");
        for node in ctx.nodes.iter().filter(|n| n.origin_turn == turn) {
            let style = if node.result.is_none() { ", style=dashed" } else { "" };
            let is_root = ctx.turn_roots.get(turn) == Some(&node.id);
            let peripheries = if is_root { ", peripheries=2" } else { "" };
            let _ = writeln!(
                out,
                "    n{} [label={}{style}{peripheries}];",
                node.id,
                quote(&label(node.id, &node.type_name, node.result.as_ref()))
            );
        }
        let _ = writeln!(out, "  }}");
    }
    for node in &ctx.nodes {
        for (name, target) in &node.inputs {
            let _ = writeln!(out, "  n{} -> n{} [label={}];", target, node.id, quote(name));
        }
    }
    out.push_str("}\n");
    out
}

fn label(id: usize, type_name: &str, result: Option<&Value>) -> String {
    let detail = match result {
        Some(Value::Constraint(c)) => join(c.slots.iter()),
        Some(Value::BookInfo(b)) => join(b.slots.iter()),
        Some(Value::Entity(e)) => e
            .record
            .get("name")
            .or(e.record.get("trainid"))
            .unwrap_or("")
            .to_string(),
        Some(Value::Booking(b)) => b.reference.clone(),
        Some(Value::Literal { text }) => text.clone(),
        _ => String::new(),
    };
    if detail.is_empty() {
        format!("{id}: {type_name}")
    } else {
        format!("{id}: {type_name}\n{detail}")
    }
}

fn join<'a>(slots: impl Iterator<Item = (&'a String, &'a String)>) -> String {
    slots.map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("\n")
}

fn quote(s: &str) -> String {
    format!(
        "\"{}\"",
        s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
    )
}
