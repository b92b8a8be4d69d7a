use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Cpg, DeadlockReport};

#[derive(Debug, Clone, Copy, Default)]
pub struct DotOptions<'a> {
    /// Append the composite index to every node label.
    pub show_composite: bool,
    /// Deadlocked nodes of this report are drawn double-circled.
    pub report: Option<&'a DeadlockReport>,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the CPG as a DOT digraph. Output depends only on the graph.
pub fn emit_dot(cpg: &Cpg, options: &DotOptions<'_>) -> String {
    let deadlocked: BTreeSet<usize> = options
        .report
        .map(|r| r.deadlocked.iter().map(|d| d.node).collect())
        .unwrap_or_default();

    let mut out = String::from("digraph cpg {\n  node [shape=circle];\n");
    for n in &cpg.nodes {
        let mut label = n.dense_id.to_string();
        if options.show_composite {
            let _ = write!(label, "\\n{}", n.composite);
        }
        let mut attrs = format!("label=\"{label}\"");
        if n.dense_id == 0 {
            attrs.push_str(", penwidth=2, xlabel=\"entry\"");
        }
        if deadlocked.contains(&n.dense_id) {
            attrs.push_str(", shape=doublecircle, color=red");
        }
        let _ = writeln!(out, "  n{} [{attrs}];", n.dense_id);
    }
    for e in &cpg.edges {
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\"];",
            e.src,
            e.dst,
            escape(e.label.name())
        );
    }
    out.push_str("}\n");
    out
}
