//! Dynamic/constant data path classification.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Diagnostic, DiagnosticKind, EdgeId, NodeId, PlanGraph, SinkRole};
use crate::operators::OperatorKind;

/// A constant edge entering an operator that lies on the dynamic path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeetPoint {
    pub node: NodeId,
    pub input: usize,
    pub edge: EdgeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PathClassification {
    pub dynamic_edges: BTreeSet<EdgeId>,
    pub constant_edges: BTreeSet<EdgeId>,
    pub meet_points: Vec<MeetPoint>,
}

impl PathClassification {
    pub fn is_dynamic(&self, edge: EdgeId) -> bool {
        self.dynamic_edges.contains(&edge)
    }

    /// Operators with at least one dynamic incident edge.
    pub fn dynamic_nodes(&self, graph: &PlanGraph) -> BTreeSet<NodeId> {
        self.dynamic_edges
            .iter()
            .flat_map(|&e| [graph.edge(e).src, graph.edge(e).dst])
            .collect()
    }

    pub fn meet_point_on(&self, edge: EdgeId) -> Option<&MeetPoint> {
        self.meet_points.iter().find(|m| m.edge == edge)
    }
}

fn is_origin(graph: &PlanGraph, n: NodeId) -> bool {
    graph.node(n).source_binding().is_some_and(|b| b.is_iteration_input())
}

fn is_target(graph: &PlanGraph, n: NodeId) -> bool {
    let node = graph.node(n);
    node.kind() == OperatorKind::TerminationCriterion
        || matches!(
            node.sink_role(),
            Some(SinkRole::NextPartialSolution | SinkRole::Delta | SinkRole::NextWorkset)
        )
}

/// Nodes reachable from an iteration input (inclusive).
fn forward_reach(graph: &PlanGraph) -> Vec<bool> {
    let mut seen = vec![false; graph.nodes().len()];
    let mut stack: Vec<NodeId> = (0..seen.len()).filter(|&n| is_origin(graph, n)).collect();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        stack.extend(graph.out_edges(n).iter().map(|e| e.dst));
    }
    seen
}

/// Nodes from which an iteration output is reachable (inclusive).
fn backward_reach(graph: &PlanGraph) -> Vec<bool> {
    let mut seen = vec![false; graph.nodes().len()];
    let mut stack: Vec<NodeId> = (0..seen.len()).filter(|&n| is_target(graph, n)).collect();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        stack.extend(graph.in_edges(n).iter().map(|e| e.src));
    }
    seen
}

/// Splits the edges of a step plan into the dynamic path (from an iteration
/// input to an iteration output or termination sink) and the constant path.
pub fn classify_paths(graph: &PlanGraph) -> PathClassification {
    let fwd = forward_reach(graph);
    let bwd = backward_reach(graph);
    let mut class = PathClassification::default();
    for e in graph.edges() {
        if fwd[e.src] && bwd[e.dst] {
            class.dynamic_edges.insert(e.id);
        } else {
            class.constant_edges.insert(e.id);
        }
    }
    let dynamic_nodes = class.dynamic_nodes(graph);
    for &e in &class.constant_edges {
        let edge = graph.edge(e);
        if dynamic_nodes.contains(&edge.dst) {
            class.meet_points.push(MeetPoint {
                node: edge.dst,
                input: edge.input,
                edge: e,
            });
        }
    }
    class.meet_points.sort();
    class
}

/// Operators fed by an iteration input whose results never reach an
/// iteration output.
pub(crate) fn dead_branches(graph: &PlanGraph) -> Vec<Diagnostic> {
    let fwd = forward_reach(graph);
    let bwd = backward_reach(graph);
    graph
        .nodes()
        .iter()
        .filter(|n| fwd[n.id] && !bwd[n.id])
        .map(|n| {
            Diagnostic::new(
                DiagnosticKind::IterationWiring,
                format!("operator `{}` depends on the iteration input but feeds no iteration output", n.name),
            )
        })
        .collect()
}

/// One line per edge: `src -> dst [dynamic|constant]`.
pub fn render_paths(graph: &PlanGraph, class: &PathClassification) -> String {
    let mut out = String::new();
    for e in graph.edges() {
        let tag = if class.is_dynamic(e.id) { "dynamic" } else { "constant" };
        let _ = writeln!(out, "{} [{tag}]", graph.edge_label(e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{PlanBuilder, SourceBinding};
    use crate::record::KeySpec;
    use std::sync::Arc;

    fn pagerank_shape(i_binding: SourceBinding) -> PlanGraph {
        let mut b = PlanBuilder::new();
        let i = b.source("I", i_binding, 2);
        let a = b.source("A", SourceBinding::External("A".into()), 3);
        let m = b.match_("match", [i, a], [KeySpec::single(0), KeySpec::single(1)], 2, Arc::new(|_, _, _| Ok(())));
        let r = b.reduce("reduce", m, KeySpec::single(0), 2, Arc::new(|_, _| Ok(())));
        b.sink("O", SinkRole::NextPartialSolution, r);
        b.build()
    }

    #[test]
    fn source_inside_step_is_constant() {
        let g = pagerank_shape(SourceBinding::PartialSolution);
        let c = classify_paths(&g);
        assert_eq!(render_paths(&g, &c), "I -> match [dynamic]\nA -> match [constant]\nmatch -> reduce [dynamic]\nreduce -> O [dynamic]\n");
        assert_eq!(c.meet_points, vec![MeetPoint { node: 2, input: 1, edge: 1 }]);
    }

    #[test]
    fn plain_source_makes_everything_constant() {
        let g = pagerank_shape(SourceBinding::External("I".into()));
        let c = classify_paths(&g);
        assert!(c.dynamic_edges.is_empty());
        assert_eq!(c.constant_edges.len(), g.edges().len());
    }

    #[test]
    fn no_internal_sources_means_no_constant_edges() {
        let mut b = PlanBuilder::new();
        let i = b.source("I", SourceBinding::PartialSolution, 1);
        let m = b.map("m", i, 1, Arc::new(|r, o| {
            o.emit(r.clone());
            Ok(())
        }));
        b.sink("O", SinkRole::NextPartialSolution, m);
        let c = classify_paths(&b.build());
        assert!(c.constant_edges.is_empty());
        assert!(c.meet_points.is_empty());
    }

    #[test]
    fn classification_is_idempotent_partition() {
        let g = pagerank_shape(SourceBinding::PartialSolution);
        let c = classify_paths(&g);
        assert_eq!(c, classify_paths(&g));
        assert!(c.dynamic_edges.is_disjoint(&c.constant_edges));
        assert_eq!(c.dynamic_edges.len() + c.constant_edges.len(), g.edges().len());
    }
}
