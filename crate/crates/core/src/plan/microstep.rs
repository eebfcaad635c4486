//! Microstep eligibility of incremental iterations.
//!
//! A working-set record may be pushed through Δ on its own, without a
//! superstep barrier, when (a) every operator it passes is record-at-a-time,
//! (b) no binary operator sees working-set data on both inputs, (c) the path
//! does not fork except into D, and (d) the solution key survives unchanged
//! from S to D so that deltas stay on the worker owning the key.

use std::collections::BTreeSet;
use std::fmt;

use super::{EdgeId, IncrementalIteration, NodeId, PlanGraph, SinkRole, SourceBinding};
use crate::operators::OperatorKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// (a) a group- or set-at-a-time operator on the dynamic path.
    NotRecordAtATime { operator: String, kind: OperatorKind },
    /// (b) a binary operator with two dynamic inputs.
    MultipleDynamicInputs { operator: String },
    /// (c) the dynamic path forks somewhere other than into D.
    Branch { operator: String, consumers: usize },
    /// (d) the solution key is modified or regrouped between S and D.
    Locality { operator: String, detail: String },
}

impl Violation {
    /// The condition letter, `a` to `d`.
    pub fn condition(&self) -> char {
        match self {
            Violation::NotRecordAtATime { .. } => 'a',
            Violation::MultipleDynamicInputs { .. } => 'b',
            Violation::Branch { .. } => 'c',
            Violation::Locality { .. } => 'd',
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotRecordAtATime { operator, kind } => {
                write!(f, "(a) `{operator}` is {kind}, not record-at-a-time")
            }
            Violation::MultipleDynamicInputs { operator } => write!(f, "(b) `{operator}` has two dynamic inputs"),
            Violation::Branch { operator, consumers } => {
                write!(f, "(c) dynamic path forks at `{operator}` into {consumers} consumers")
            }
            Violation::Locality { operator, detail } => write!(f, "(d) at `{operator}`: {detail}"),
        }
    }
}

fn reach(graph: &PlanGraph, from: &[NodeId], forward: bool) -> Vec<bool> {
    let mut seen = vec![false; graph.nodes().len()];
    let mut stack = from.to_vec();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        if forward {
            stack.extend(graph.out_edges(n).iter().map(|e| e.dst));
        } else {
            stack.extend(graph.in_edges(n).iter().map(|e| e.src));
        }
    }
    seen
}

/// Edges on a path from W to D or W_next.
fn workset_path(graph: &PlanGraph) -> BTreeSet<EdgeId> {
    let w = graph.sources_with(&SourceBinding::Workset);
    let mut targets = graph.sinks_with(&SinkRole::Delta);
    targets.extend(graph.sinks_with(&SinkRole::NextWorkset));
    let fwd = reach(graph, &w, true);
    let bwd = reach(graph, &targets, false);
    graph
        .edges()
        .iter()
        .filter(|e| fwd[e.src] && bwd[e.dst])
        .map(|e| e.id)
        .collect()
}

/// Returns the violated conditions; empty means eligible.
pub fn check_microstep_eligibility(construct: &IncrementalIteration) -> Vec<Violation> {
    let graph = &construct.step;
    let mut out = Vec::new();
    let dynamic = workset_path(graph);
    let nodes: BTreeSet<NodeId> = dynamic
        .iter()
        .flat_map(|&e| [graph.edge(e).src, graph.edge(e).dst])
        .collect();
    let delta = graph.sinks_with(&SinkRole::Delta);

    for &n in &nodes {
        let node = graph.node(n);
        let kind = node.kind();
        let is_operator = !matches!(kind, OperatorKind::Source | OperatorKind::Sink);
        if is_operator && !kind.is_record_at_a_time() {
            out.push(Violation::NotRecordAtATime {
                operator: node.name.clone(),
                kind,
            });
        }
        let dyn_inputs = graph.in_edges(n).iter().filter(|e| dynamic.contains(&e.id)).count();
        if dyn_inputs > 1 {
            out.push(Violation::MultipleDynamicInputs {
                operator: node.name.clone(),
            });
        }
        let consumers = graph
            .out_edges(n)
            .iter()
            .filter(|e| dynamic.contains(&e.id) && !delta.contains(&e.dst))
            .count();
        if consumers > 1 {
            out.push(Violation::Branch {
                operator: node.name.clone(),
                consumers,
            });
        }
    }
    out.extend(locality(construct));
    out
}

/// Condition (d): trace the solution key fields backwards from D to S.
fn locality(construct: &IncrementalIteration) -> Vec<Violation> {
    let graph = &construct.step;
    let mut out = Vec::new();
    let (Some(s), Some(d)) = (construct.solution_source(), construct.delta_sink()) else {
        return out;
    };
    let from_s = reach(graph, &[s], true);
    let Some(edge) = graph.input_edge(d, 0) else {
        return out;
    };
    if !from_s[edge.src] {
        out.push(Violation::Locality {
            operator: graph.node(d).name.clone(),
            detail: "delta records do not derive from the solution set".into(),
        });
        return out;
    }
    let mut stack = vec![(edge.id, construct.solution_key.fields().to_vec())];
    while let Some((e, fields)) = stack.pop() {
        let p = graph.edge(e).src;
        let node = graph.node(p);
        if p == s {
            if fields != construct.solution_key.fields() {
                out.push(Violation::Locality {
                    operator: node.name.clone(),
                    detail: format!("key arrives at D from fields {fields:?} of S, not {}", construct.solution_key),
                });
            }
            continue;
        }
        for in_edge in graph.in_edges(p) {
            if !from_s[in_edge.src] {
                continue;
            }
            let i = in_edge.input;
            let mut traced = Vec::with_capacity(fields.len());
            for &f in &fields {
                let mapped = match node.forwarded_from(f) {
                    Some((j, g)) if j == i => Some(g),
                    // forwarded from the other side of an equi-join on that field
                    Some((j, g)) => node.op.key_for_input(j).and_then(|kj| {
                        let q = kj.fields().iter().position(|&x| x == g)?;
                        node.op.key_for_input(i).and_then(|ki| ki.fields().get(q).copied())
                    }),
                    None => None,
                };
                match mapped {
                    Some(g) => traced.push(g),
                    None => {
                        out.push(Violation::Locality {
                            operator: node.name.clone(),
                            detail: format!("output field {f} is not forwarded unchanged"),
                        });
                        break;
                    }
                }
            }
            if traced.len() != fields.len() {
                continue;
            }
            if let Some(k) = node.op.key_for_input(i) {
                if k.fields() != traced.as_slice() {
                    out.push(Violation::Locality {
                        operator: node.name.clone(),
                        detail: format!("keyed by {k} instead of the solution key fields {traced:?}"),
                    });
                }
            }
            stack.push((in_edge.id, traced));
        }
    }
    out
}
