//! Interesting-property propagation.
//!
//! Each edge collects the properties its consumer could exploit plus those
//! inherited from edges further down, mapped back through forwarded fields.
//! Iteration inputs are successors of iteration outputs, so a second top-down
//! pass starts with the properties found at I (or W, S) injected at O (or
//! the next working set and D).

use std::collections::HashMap;

use crate::physical::{Direction, PlanContext, Property, PropertySet};
use crate::plan::{EdgeId, NodeId, Operator, PlanGraph, SinkRole, SourceBinding};
use crate::record::KeySpec;

/// IP sets after the second traversal, indexed by edge id.
pub fn propagate_interesting_properties(graph: &PlanGraph, ctx: &PlanContext) -> Vec<PropertySet> {
    ip_traversals(graph, ctx, 2).pop().unwrap_or_default()
}

/// The IP sets after each of `passes` top-down traversals.
pub fn ip_traversals(graph: &PlanGraph, ctx: &PlanContext, passes: usize) -> Vec<Vec<PropertySet>> {
    let mut out: Vec<Vec<PropertySet>> = Vec::with_capacity(passes);
    for _ in 0..passes {
        let injected = out.last().map(|prev| feedback_injection(graph, prev)).unwrap_or_default();
        out.push(traverse(graph, ctx, &injected));
    }
    out
}

fn feedback_pairs(graph: &PlanGraph) -> Vec<(NodeId, NodeId)> {
    let pairs = [
        (SourceBinding::PartialSolution, SinkRole::NextPartialSolution),
        (SourceBinding::Workset, SinkRole::NextWorkset),
        (SourceBinding::SolutionSet, SinkRole::Delta),
    ];
    let mut out = Vec::new();
    for (src, sink) in pairs {
        for &s in &graph.sources_with(&src) {
            for &o in &graph.sinks_with(&sink) {
                out.push((s, o));
            }
        }
    }
    out
}

fn feedback_injection(graph: &PlanGraph, prev: &[PropertySet]) -> HashMap<EdgeId, PropertySet> {
    let mut out: HashMap<EdgeId, PropertySet> = HashMap::new();
    for (input, output) in feedback_pairs(graph) {
        let Some(o_edge) = graph.input_edge(output, 0) else { continue };
        let at_input: PropertySet = graph.out_edges(input).iter().flat_map(|e| prev[e.id].iter().cloned()).collect();
        out.entry(o_edge.id).or_default().extend(at_input);
    }
    out
}

fn traverse(graph: &PlanGraph, ctx: &PlanContext, injected: &HashMap<EdgeId, PropertySet>) -> Vec<PropertySet> {
    let mut ips = vec![PropertySet::new(); graph.edges().len()];
    let order = graph.topological_order().unwrap_or_default();
    for &n in order.iter().rev() {
        let downstream: PropertySet = graph.out_edges(n).iter().flat_map(|f| ips[f.id].iter().cloned()).collect();
        for e in graph.in_edges(n) {
            let mut set = generated(graph, n, e.input, ctx);
            set.extend(downstream.iter().filter_map(|p| inherit(graph, n, e.input, p)));
            if let Some(extra) = injected.get(&e.id) {
                set.extend(extra.iter().cloned());
            }
            ips[e.id] = set;
        }
    }
    ips
}

/// Properties operator `n` itself can exploit on `input`.
fn generated(graph: &PlanGraph, n: NodeId, input: usize, ctx: &PlanContext) -> PropertySet {
    let node = graph.node(n);
    let keyed = |k: &KeySpec| [Property::Partitioned(k.clone()), Property::Sorted(k.clone(), Direction::Ascending)];
    match &node.op {
        Operator::Match { keys, .. } => {
            let mut s: PropertySet = keyed(&keys[input]).into();
            s.insert(Property::Replicated);
            s
        }
        Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } => keyed(&keys[input]).into(),
        Operator::Reduce { key, .. } => keyed(key).into(),
        Operator::Cross(_) => [Property::Replicated].into(),
        Operator::Sink(SinkRole::Delta) => ctx.solution_key.iter().map(|k| Property::Partitioned(k.clone())).collect(),
        _ => PropertySet::new(),
    }
}

/// Maps a property wanted on `n`'s output back to `input`, if `n` can
/// preserve it from there.
fn inherit(graph: &PlanGraph, n: NodeId, input: usize, p: &Property) -> Option<Property> {
    let node = graph.node(n);
    let back = |k: &KeySpec| -> Option<KeySpec> {
        k.fields()
            .iter()
            .map(|&f| match node.forwarded_from(f) {
                Some((i, field)) if i == input => Some(field),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(KeySpec)
    };
    let keeps_order = matches!(node.op, Operator::Map(_) | Operator::Dam | Operator::Match { .. } | Operator::Cross(_));
    match p {
        Property::Partitioned(k) => back(k).map(Property::Partitioned),
        Property::Sorted(k, d) if keeps_order => back(k).map(|k| Property::Sorted(k, *d)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::pagerank::{build_pagerank, PageRankStop, MATRIX};
    use crate::plan::{PlanBuilder, SinkRole, SourceBinding};
    use std::sync::Arc;

    fn edge_into(graph: &PlanGraph, src: &str, dst: &str) -> EdgeId {
        let s = graph.node_by_name(src).unwrap().id;
        let d = graph.node_by_name(dst).unwrap().id;
        graph.edges().iter().find(|e| e.src == s && e.dst == d).unwrap().id
    }

    #[test]
    fn reduce_properties_reach_the_matrix_edge() {
        let it = build_pagerank(PageRankStop::Iterations(20));
        let ips = propagate_interesting_properties(&it.step, &PlanContext::default());
        let e = edge_into(&it.step, MATRIX, "contrib");
        let tid = KeySpec::single(0);
        assert!(ips[e].contains(&Property::Partitioned(tid.clone())));
        assert!(ips[e].contains(&Property::Sorted(tid, Direction::Ascending)));
    }

    #[test]
    fn feedback_reaches_the_output_edge() {
        let it = build_pagerank(PageRankStop::Iterations(20));
        let passes = ip_traversals(&it.step, &PlanContext::default(), 3);
        let o = edge_into(&it.step, "sum", "next");
        assert!(passes[0][o].is_empty());
        assert!(passes[1][o].contains(&Property::Replicated));
        assert_eq!(passes[1], passes[2]);
    }

    #[test]
    fn map_only_plan_has_no_ips() {
        let mut b = PlanBuilder::new();
        let s = b.source("in", SourceBinding::External("in".into()), 1);
        let m = b.map("id", s, 1, Arc::new(|r, out| {
            out.emit(r.clone());
            Ok(())
        }));
        b.sink("out", SinkRole::Output("out".into()), m);
        let g = b.build();
        let passes = ip_traversals(&g, &PlanContext::default(), 2);
        assert!(passes[1].iter().all(PropertySet::is_empty));
        assert_eq!(passes[0], passes[1]);
    }
}
