//! Graphviz output for script models and property relations.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::model::{BlockLabel, ScriptModel};
use crate::props::TemporalProperty;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Locations as circles (exits doubled), the entry marked by an arrow from a
/// point, transitions labeled with block aliases and ε.
pub fn script_model(model: &ScriptModel) -> String {
    let mut s = String::new();
    writeln!(s, "digraph {} {{", quote(&model.source().to_string())).unwrap();
    s.push_str("  node [shape=circle];\n");
    s.push_str("  __start [shape=point, label=\"\"];\n");
    for loc in model.locations() {
        if model.exits().contains(loc) {
            writeln!(s, "  {loc} [shape=doublecircle];").unwrap();
        } else {
            writeln!(s, "  {loc};").unwrap();
        }
    }
    writeln!(s, "  __start -> {};", model.entry()).unwrap();
    for t in model.transitions() {
        let label = t.label.as_ref().map_or_else(|| "ε".to_string(), BlockLabel::alias);
        writeln!(s, "  {} -> {} [label={}];", t.from, t.to, quote(&label)).unwrap();
    }
    s.push_str("}\n");
    s
}

/// Property relation as a graph over blocks. Edges flagged `true` are drawn
/// red and dotted (missing properties of a violation).
pub fn property_graph<'a>(
    name: &str,
    edges: impl IntoIterator<Item = (&'a TemporalProperty, bool)>,
) -> String {
    let edges: Vec<_> = edges.into_iter().collect();
    let nodes: BTreeSet<&BlockLabel> = edges.iter().flat_map(|(p, _)| [&p.first, &p.second]).collect();
    let missing_nodes: BTreeSet<&BlockLabel> = nodes
        .iter()
        .copied()
        .filter(|n| edges.iter().filter(|(p, _)| p.mentions(n)).all(|(_, missing)| *missing))
        .collect();
    let mut s = String::new();
    writeln!(s, "digraph {} {{", quote(name)).unwrap();
    s.push_str("  node [shape=box, style=rounded];\n");
    for n in &nodes {
        let extra = if missing_nodes.contains(n) { ", color=red, fontcolor=red" } else { "" };
        writeln!(s, "  {} [label={}{extra}];", quote(&n.key()), quote(&n.alias())).unwrap();
    }
    for (p, missing) in &edges {
        let style = if *missing { " [color=red, style=dotted]" } else { "" };
        writeln!(s, "  {} -> {}{style};", quote(&p.first.key()), quote(&p.second.key())).unwrap();
    }
    s.push_str("}\n");
    s
}
