//! Dam placement for feedback-channel execution.

use super::{BulkIteration, CardinalityHint, NodeId, Operator, OperatorNode, PlanGraph, SinkRole, SourceBinding};
use crate::operators::{LocalStrategy, OperatorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct DamPlacement {
    /// A Dam operator was inserted in front of O.
    pub output_dam: Option<NodeId>,
    /// The feedback channel must hold back the next superstep's input until
    /// the current superstep has drained.
    pub feedback_dams: bool,
    /// Fewest materializing operators on any path from I to O.
    pub materializing_operators: usize,
}

/// Materialization behaviour of the default local strategies.
pub fn default_materialization(graph: &PlanGraph) -> impl Fn(NodeId, usize) -> bool + '_ {
    move |node, input| {
        let kind = graph.node(node).kind();
        LocalStrategy::default_for(kind).materialized_inputs(kind).contains(&input)
    }
}

/// Places dams given `materializes(node, input)`, which reports whether an
/// operator fully consumes that input before emitting.
pub fn insert_dams(construct: &BulkIteration, materializes: &dyn Fn(NodeId, usize) -> bool) -> (BulkIteration, DamPlacement) {
    let graph = &construct.step;
    // Fewest materializing operators on any path from I to O.
    let order = graph.topological_order().unwrap_or_default();
    let mut fewest: Vec<Option<usize>> = vec![None; graph.nodes().len()];
    for &i in &graph.sources_with(&SourceBinding::PartialSolution) {
        fewest[i] = Some(0);
    }
    for &n in &order {
        let counts = !matches!(graph.node(n).kind(), OperatorKind::Sink | OperatorKind::TerminationCriterion);
        for e in graph.in_edges(n) {
            if let Some(d) = fewest[e.src] {
                let d = d + usize::from(counts && materializes(n, e.input));
                fewest[n] = Some(fewest[n].map_or(d, |x| x.min(d)));
            }
        }
    }
    let materializing_operators = graph
        .sinks_with(&SinkRole::NextPartialSolution)
        .iter()
        .filter_map(|&o| fewest[o])
        .min()
        .unwrap_or(0);

    let has_t = !graph.termination_nodes().is_empty();
    let inputs = graph.sources_with(&SourceBinding::PartialSolution);
    let i_consumers_materialize = inputs
        .iter()
        .flat_map(|&i| graph.out_edges(i))
        .all(|e| materializes(e.dst, e.input));

    let mut out = construct.clone();
    let mut placement = DamPlacement {
        output_dam: None,
        feedback_dams: materializing_operators < 2,
        materializing_operators,
    };
    if has_t && !i_consumers_materialize {
        if let Some(edge) = construct.output_edge() {
            let dam = OperatorNode {
                id: 0,
                name: "dam(O)".into(),
                op: Operator::Dam,
                in_arities: vec![],
                out_arity: 0,
                forwarded: vec![],
                cardinality: CardinalityHint::FromInputs,
            };
            placement.output_dam = Some(out.step.splice(edge, dam));
        }
    }
    (out, placement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{PlanBuilder, TerminationCriterion};
    use crate::record::KeySpec;
    use std::sync::Arc;

    /// I feeds match (with A) and the T-match; reduce feeds O and the T-match.
    fn pagerank(termination: bool) -> BulkIteration {
        let mut b = PlanBuilder::new();
        let i = b.source("I", SourceBinding::PartialSolution, 2);
        let a = b.source("A", SourceBinding::External("A".into()), 3);
        let m = b.match_("match", [i, a], [KeySpec::single(0), KeySpec::single(1)], 2, Arc::new(|_, _, _| Ok(())));
        let r = b.reduce("reduce", m, KeySpec::single(0), 2, Arc::new(|_, _| Ok(())));
        b.sink("O", SinkRole::NextPartialSolution, r);
        let crit = if termination {
            let t = b.match_("tmatch", [r, i], [KeySpec::single(0), KeySpec::single(0)], 2, Arc::new(|_, _, _| Ok(())));
            b.termination("T", t);
            TerminationCriterion::CriterionSink
        } else {
            TerminationCriterion::FixedCount(5)
        };
        BulkIteration::new(b.build(), crit)
    }

    fn node(it: &BulkIteration, name: &str) -> NodeId {
        it.step.node_by_name(name).unwrap().id
    }

    #[test]
    fn pipelined_reduce_forces_feedback_dam() {
        let it = pagerank(true);
        let (m, t) = (node(&it, "match"), node(&it, "tmatch"));
        // match and tmatch build on I, reduce streams
        let mat = |n: NodeId, input: usize| (n == m && input == 0) || (n == t && input == 1);
        let (_, p) = insert_dams(&it, &mat);
        assert!(p.feedback_dams, "{p:?}");
    }

    #[test]
    fn two_materializing_operators_need_no_feedback_dam() {
        let it = pagerank(true);
        let (m, r) = (node(&it, "match"), node(&it, "reduce"));
        let mat = |n: NodeId, input: usize| (n == m && input == 0) || n == r;
        let (_, p) = insert_dams(&it, &mat);
        assert!(!p.feedback_dams);
    }

    #[test]
    fn materializing_successor_of_i_replaces_output_dam() {
        let it = pagerank(true);
        let (m, t) = (node(&it, "match"), node(&it, "tmatch"));
        let mat = |n: NodeId, input: usize| (n == m && input == 0) || (n == t && input == 1);
        let (out, p) = insert_dams(&it, &mat);
        assert!(p.output_dam.is_none());
        assert_eq!(out.step.nodes().len(), it.step.nodes().len());
    }

    #[test]
    fn pipelined_successor_of_i_gets_output_dam() {
        let it = pagerank(true);
        let m = node(&it, "match");
        let mat = |n: NodeId, input: usize| n == m && input == 1;
        let (out, p) = insert_dams(&it, &mat);
        let dam = p.output_dam.expect("dam on O");
        assert!(out.validate().is_empty(), "{:?}", out.validate());
        let o = out.step.sinks_with(&SinkRole::NextPartialSolution)[0];
        assert_eq!(out.step.input_edge(o, 0).unwrap().src, dam);
    }

    #[test]
    fn fixed_count_has_no_output_dam() {
        let it = pagerank(false);
        let (_, p) = insert_dams(&it, &|_, _| false);
        assert!(p.output_dam.is_none());
        assert!(p.feedback_dams);
    }
}
