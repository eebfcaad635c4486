//! Physical plans: ship and local strategies, delivered data properties and
//! constant-path cache placement.

use std::collections::BTreeSet;
use std::fmt;

use crate::operators::{LocalStrategy, OperatorKind};
use crate::plan::paths::PathClassification;
use crate::plan::{BulkIteration, EdgeId, IncrementalIteration, NodeId, Operator, PlanGraph, SinkRole, SourceBinding};
use crate::record::KeySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Ascending,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Partitioned(KeySpec),
    Sorted(KeySpec, Direction),
    Replicated,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Partitioned(k) => write!(f, "partitioned{k}"),
            Property::Sorted(k, _) => write!(f, "sorted{k}"),
            Property::Replicated => write!(f, "replicated"),
        }
    }
}

pub type PropertySet = BTreeSet<Property>;

pub fn partitioned(props: &PropertySet) -> impl Iterator<Item = &KeySpec> {
    props.iter().filter_map(|p| match p {
        Property::Partitioned(k) => Some(k),
        _ => None,
    })
}

pub fn is_replicated(props: &PropertySet) -> bool {
    props.contains(&Property::Replicated)
}

pub fn is_sorted_on(props: &PropertySet, key: &KeySpec) -> bool {
    props.contains(&Property::Sorted(key.clone(), Direction::Ascending))
}

/// True if records with equal `key` are guaranteed to sit on one worker.
pub fn groups_colocated(props: &PropertySet, key: &KeySpec) -> bool {
    partitioned(props).any(|k| !k.is_empty() && k.fields().iter().all(|f| key.fields().contains(f)))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ShipStrategy {
    Forward,
    Partition(KeySpec),
    Broadcast,
}

impl fmt::Display for ShipStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShipStrategy::Forward => f.write_str("forward"),
            ShipStrategy::Partition(k) => write!(f, "partition{k}"),
            ShipStrategy::Broadcast => f.write_str("broadcast"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeStrategy {
    pub ship: ShipStrategy,
    /// Local sort applied after shipping.
    pub sort: Option<KeySpec>,
}

impl EdgeStrategy {
    pub fn forward() -> Self {
        EdgeStrategy {
            ship: ShipStrategy::Forward,
            sort: None,
        }
    }

    pub fn ship(ship: ShipStrategy) -> Self {
        EdgeStrategy { ship, sort: None }
    }
}

impl fmt::Display for EdgeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ship)?;
        if let Some(k) = &self.sort {
            write!(f, "+sort{k}")?;
        }
        Ok(())
    }
}

/// In-memory layout of a cached constant-path result.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CacheStructure {
    Unordered,
    HashTable(KeySpec),
    SortedRun(KeySpec),
}

impl fmt::Display for CacheStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheStructure::Unordered => f.write_str("unordered"),
            CacheStructure::HashTable(k) => write!(f, "hash-table{k}"),
            CacheStructure::SortedRun(k) => write!(f, "sorted-run{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CachePlacement {
    pub edge: EdgeId,
    pub node: NodeId,
    pub input: usize,
    pub structure: CacheStructure,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CostEstimate {
    pub network: f64,
    pub local: f64,
    /// Cost of the constant path, paid once.
    pub constant: f64,
    /// Cost of one pass over the dynamic path.
    pub dynamic: f64,
    pub expected_iterations: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalPlan {
    /// Indexed by edge id.
    pub edges: Vec<EdgeStrategy>,
    /// Indexed by node id.
    pub locals: Vec<LocalStrategy>,
    pub caches: Vec<CachePlacement>,
    pub cost: CostEstimate,
}

impl PhysicalPlan {
    pub fn cache_on(&self, edge: EdgeId) -> Option<&CachePlacement> {
        self.caches.iter().find(|c| c.edge == edge)
    }

    /// Whether `node` consumes `input` completely before emitting.
    pub fn materializes(&self, graph: &PlanGraph, node: NodeId, input: usize) -> bool {
        let kind = graph.node(node).kind();
        if !self.locals[node].materialized_inputs(kind).contains(&input) {
            return false;
        }
        // a sort-based operator over input that already arrives sorted streams it
        if matches!(self.locals[node], LocalStrategy::SortGroup | LocalStrategy::SortMerge) {
            if let (Some(key), Some(e)) = (graph.node(node).op.key_for_input(input), graph.input_edge(node, input)) {
                if self.edges[e.id].sort.as_ref() == Some(key) {
                    return false;
                }
            }
        }
        true
    }
}

/// Iteration facts that fix the partitioning of special sources and sinks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanContext {
    pub solution_key: Option<KeySpec>,
    pub workset_key: Option<KeySpec>,
}

impl From<&IncrementalIteration> for PlanContext {
    fn from(it: &IncrementalIteration) -> Self {
        PlanContext {
            solution_key: Some(it.solution_key.clone()),
            workset_key: Some(it.workset_key.clone()),
        }
    }
}

impl From<&BulkIteration> for PlanContext {
    fn from(_: &BulkIteration) -> Self {
        PlanContext::default()
    }
}

impl PlanContext {
    pub fn source_properties(&self, binding: &SourceBinding) -> PropertySet {
        let key = match binding {
            SourceBinding::SolutionSet => self.solution_key.as_ref(),
            SourceBinding::Workset => self.workset_key.as_ref(),
            _ => None,
        };
        key.map(|k| Property::Partitioned(k.clone())).into_iter().collect()
    }
}

/// Properties of records after `strategy` has been applied to data with `props`.
pub fn ship_properties(props: &PropertySet, strategy: &EdgeStrategy) -> PropertySet {
    let mut out = match &strategy.ship {
        ShipStrategy::Forward => props.clone(),
        ShipStrategy::Partition(k) => [Property::Partitioned(k.clone())].into(),
        ShipStrategy::Broadcast => [Property::Replicated].into(),
    };
    if let Some(k) = &strategy.sort {
        out.retain(|p| !matches!(p, Property::Sorted(..)));
        out.insert(Property::Sorted(k.clone(), Direction::Ascending));
    }
    out
}

fn map_key(graph: &PlanGraph, node: NodeId, input: usize, key: &KeySpec) -> Option<KeySpec> {
    let n = graph.node(node);
    key.fields()
        .iter()
        .map(|&f| n.forwarded_to(input, f))
        .collect::<Option<Vec<_>>>()
        .map(KeySpec)
}

/// Properties of `node`'s output given the properties arriving on its inputs.
pub fn output_properties(graph: &PlanGraph, local: LocalStrategy, node: NodeId, inputs: &[PropertySet], ctx: &PlanContext) -> PropertySet {
    let n = graph.node(node);
    let mut out = PropertySet::new();
    let carry = |out: &mut PropertySet, input: usize, sorted: bool| {
        for p in &inputs[input] {
            match p {
                Property::Partitioned(k) => {
                    if let Some(m) = map_key(graph, node, input, k) {
                        out.insert(Property::Partitioned(m));
                    }
                }
                Property::Sorted(k, d) if sorted => {
                    if let Some(m) = map_key(graph, node, input, k) {
                        out.insert(Property::Sorted(m, *d));
                    }
                }
                _ => {}
            }
        }
    };
    match &n.op {
        Operator::Source(b) => return ctx.source_properties(b),
        Operator::Sink(_) | Operator::Termination => return out,
        Operator::Map(_) | Operator::Dam => {
            carry(&mut out, 0, true);
            if is_replicated(&inputs[0]) {
                out.insert(Property::Replicated);
            }
        }
        Operator::Reduce { key, .. } => {
            carry(&mut out, 0, false);
            if local == LocalStrategy::SortGroup {
                if let Some(m) = map_key(graph, node, 0, key) {
                    out.insert(Property::Sorted(m, Direction::Ascending));
                }
            }
        }
        Operator::Match { keys, .. } | Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } => {
            let streamed = match local {
                LocalStrategy::HashBuildLeft => Some(1),
                LocalStrategy::HashBuildRight => Some(0),
                _ => None,
            };
            for i in 0..2 {
                carry(&mut out, i, streamed == Some(i));
            }
            if local == LocalStrategy::SortMerge {
                for i in 0..2 {
                    if let Some(m) = map_key(graph, node, i, &keys[i]) {
                        out.insert(Property::Sorted(m, Direction::Ascending));
                    }
                }
            }
            if is_replicated(&inputs[0]) && is_replicated(&inputs[1]) {
                out.insert(Property::Replicated);
            }
        }
        Operator::Cross(_) => {
            carry(&mut out, 0, true);
            carry(&mut out, 1, false);
            if is_replicated(&inputs[0]) && is_replicated(&inputs[1]) {
                out.insert(Property::Replicated);
            }
        }
    }
    out
}

/// Delivered properties per node output and per edge (at the consumer).
pub fn delivered_properties(graph: &PlanGraph, plan: &PhysicalPlan, ctx: &PlanContext) -> (Vec<PropertySet>, Vec<PropertySet>) {
    let mut nodes = vec![PropertySet::new(); graph.nodes().len()];
    let mut edges = vec![PropertySet::new(); graph.edges().len()];
    for n in graph.topological_order().unwrap_or_default() {
        let ins: Vec<PropertySet> = graph
            .in_edges(n)
            .iter()
            .map(|e| {
                let p = ship_properties(&nodes[e.src], &plan.edges[e.id]);
                edges[e.id] = p.clone();
                p
            })
            .collect();
        if ins.len() == graph.node(n).kind().arity() {
            nodes[n] = output_properties(graph, plan.locals[n], n, &ins, ctx);
        }
    }
    (nodes, edges)
}

pub(crate) fn is_solution_edge(graph: &PlanGraph, e: EdgeId) -> bool {
    graph.node(graph.edge(e).src).source_binding() == Some(&SourceBinding::SolutionSet)
}

/// Why `node` cannot run with `local` on inputs shipped by `ships` and
/// arriving with `props`.
pub(crate) fn node_problem(
    graph: &PlanGraph,
    node: NodeId,
    local: LocalStrategy,
    ships: &[&EdgeStrategy],
    props: &[&PropertySet],
    ctx: &PlanContext,
) -> Option<String> {
    let n = graph.node(node);
    let kind = n.kind();
    if !LocalStrategy::candidates(kind).contains(&local) {
        return Some(format!("local strategy {local} does not apply to {kind}"));
    }
    let problem = match &n.op {
        Operator::Source(_) | Operator::Map(_) | Operator::Dam => None,
        Operator::Sink(role) => {
            if is_replicated(props[0]) {
                Some("sink input is replicated")
            } else if *role == SinkRole::NextWorkset && ships[0].ship != ShipStrategy::Forward {
                Some("next working set is routed by the queues and must be forwarded")
            } else if *role == SinkRole::Delta
                && !props[0].contains(&Property::Partitioned(ctx.solution_key.clone().unwrap_or_default()))
            {
                Some("delta records must arrive partitioned by the solution key")
            } else {
                None
            }
        }
        Operator::Termination => is_replicated(props[0]).then_some("termination input is replicated"),
        Operator::Reduce { key, .. } => {
            (!groups_colocated(props[0], key)).then_some("reduce input is not partitioned by a subset of its key")
        }
        Operator::Match { keys, .. } | Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } => {
            let co = props[0].contains(&Property::Partitioned(keys[0].clone())) && props[1].contains(&Property::Partitioned(keys[1].clone()));
            let one_replicated = is_replicated(props[0]) != is_replicated(props[1]);
            let ok = if kind == OperatorKind::Match { co || one_replicated } else { co };
            (!ok).then_some("inputs are neither co-partitioned on the key nor is exactly one replicated")
        }
        Operator::Cross(_) => (is_replicated(props[0]) == is_replicated(props[1])).then_some("cross needs exactly one replicated input"),
    };
    problem.map(str::to_string)
}

/// Reasons why `plan` would compute a wrong result for `graph`; empty if valid.
pub fn check_plan(graph: &PlanGraph, plan: &PhysicalPlan, class: &PathClassification, ctx: &PlanContext) -> Vec<String> {
    let mut errs = Vec::new();
    if plan.edges.len() != graph.edges().len() || plan.locals.len() != graph.nodes().len() {
        errs.push("physical plan does not match the logical plan".to_string());
        return errs;
    }
    let (_, at) = delivered_properties(graph, plan, ctx);
    for n in graph.nodes() {
        let ins = graph.in_edges(n.id);
        if ins.len() != n.kind().arity() {
            continue;
        }
        let ships: Vec<&EdgeStrategy> = ins.iter().map(|e| &plan.edges[e.id]).collect();
        let props: Vec<&PropertySet> = ins.iter().map(|e| &at[e.id]).collect();
        if let Some(problem) = node_problem(graph, n.id, plan.locals[n.id], &ships, &props, ctx) {
            errs.push(format!("`{}`: {problem}", n.name));
        }
    }
    for e in graph.edges() {
        if is_solution_edge(graph, e.id) && plan.edges[e.id] != EdgeStrategy::forward() {
            errs.push(format!("edge {}: the solution set is read in place", graph.edge_label(e)));
        }
    }
    for m in &class.meet_points {
        if plan.cache_on(m.edge).is_none() {
            errs.push(format!(
                "edge {}: constant input of a dynamic operator has no cache",
                graph.edge_label(graph.edge(m.edge))
            ));
        }
    }
    errs
}

/// Binds a cache at every meet point, shaped for the consuming strategy.
pub fn place_caches(graph: &PlanGraph, plan: &PhysicalPlan, class: &PathClassification) -> PhysicalPlan {
    let mut out = plan.clone();
    out.caches = class
        .meet_points
        .iter()
        .map(|m| {
            let node = graph.node(m.node);
            let local = plan.locals[m.node];
            let key = node.op.key_for_input(m.input).cloned();
            let builds_hash = matches!(local, LocalStrategy::HashBuildLeft | LocalStrategy::HashBuildRight)
                && local.materialized_inputs(node.kind()).contains(&m.input);
            let structure = match key {
                Some(k) if builds_hash => CacheStructure::HashTable(k),
                Some(k) if local == LocalStrategy::SortMerge => CacheStructure::SortedRun(k),
                _ => match &plan.edges[m.edge].sort {
                    Some(k) => CacheStructure::SortedRun(k.clone()),
                    None => CacheStructure::Unordered,
                },
            };
            CachePlacement {
                edge: m.edge,
                node: m.node,
                input: m.input,
                structure,
            }
        })
        .collect();
    out
}

/// A plan that repartitions every keyed input unless its producer already
/// delivers the needed partitioning. Default local strategies, except that
/// a Match builds its hash table on a cached input.
pub fn naive_plan(graph: &PlanGraph, class: &PathClassification, ctx: &PlanContext) -> PhysicalPlan {
    let mut plan = PhysicalPlan {
        edges: vec![EdgeStrategy::forward(); graph.edges().len()],
        locals: graph.nodes().iter().map(|n| LocalStrategy::default_for(n.kind())).collect(),
        caches: Vec::new(),
        cost: CostEstimate::default(),
    };
    let mut out_props = vec![PropertySet::new(); graph.nodes().len()];
    for n in graph.topological_order().unwrap_or_default() {
        let node = graph.node(n);
        let mut ins = Vec::new();
        for e in graph.in_edges(n) {
            let have = &out_props[e.src];
            let needed: Option<KeySpec> = match &node.op {
                _ if is_solution_edge(graph, e.id) => None,
                Operator::Sink(SinkRole::Delta) => ctx.solution_key.clone(),
                Operator::Reduce { key, .. } if !groups_colocated(have, key) => Some(key.clone()),
                Operator::Reduce { .. } => None,
                Operator::Match { keys, .. } | Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } => {
                    Some(keys[e.input].clone())
                }
                _ => None,
            };
            let strategy = match needed {
                Some(k) if !have.contains(&Property::Partitioned(k.clone())) => EdgeStrategy::ship(ShipStrategy::Partition(k)),
                _ if matches!(node.op, Operator::Cross(_)) && e.input == 1 => EdgeStrategy::ship(ShipStrategy::Broadcast),
                _ => EdgeStrategy::forward(),
            };
            ins.push(ship_properties(have, &strategy));
            plan.edges[e.id] = strategy;
        }
        if let Some(m) = class.meet_points.iter().find(|m| m.node == n && node.kind() == OperatorKind::Match) {
            plan.locals[n] = if m.input == 0 { LocalStrategy::HashBuildLeft } else { LocalStrategy::HashBuildRight };
        }
        out_props[n] = output_properties(graph, plan.locals[n], n, &ins, ctx);
    }
    place_caches(graph, &plan, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{classify_paths, PlanBuilder};
    use std::sync::Arc;

    #[test]
    fn naive_plan_is_valid_and_forwards_prepartitioned_inputs() {
        let mut b = PlanBuilder::new();
        let s = b.source("S", SourceBinding::SolutionSet, 2);
        let w = b.source("W", SourceBinding::Workset, 2);
        let n = b.source("N", SourceBinding::External("N".into()), 2);
        let keys = [KeySpec::single(0), KeySpec::single(0)];
        let u = b.match_("update", [s, w], keys.clone(), 2, Arc::new(|_, _, _| Ok(())));
        b.forwards(u, &[(0, 0, 0)]);
        b.sink("D", SinkRole::Delta, u);
        let m = b.match_("neighbors", [u, n], keys, 2, Arc::new(|_, _, _| Ok(())));
        b.sink("W_next", SinkRole::NextWorkset, m);
        let it = IncrementalIteration::new(b.build(), KeySpec::single(0), KeySpec::single(0), None);
        let class = classify_paths(&it.step);
        let ctx = PlanContext::from(&it);
        let plan = naive_plan(&it.step, &class, &ctx);
        assert_eq!(check_plan(&it.step, &plan, &class, &ctx), Vec::<String>::new());
        let ship = |from: &str, to: &str| {
            let e = it.step.edges().iter().find(|e| it.step.edge_label(e) == format!("{from} -> {to}")).unwrap();
            plan.edges[e.id].ship.clone()
        };
        assert_eq!(ship("W", "update"), ShipStrategy::Forward);
        assert_eq!(ship("update", "D"), ShipStrategy::Forward);
        assert_eq!(ship("update", "neighbors"), ShipStrategy::Forward);
        assert_eq!(ship("N", "neighbors"), ShipStrategy::Partition(KeySpec::single(0)));
        assert_eq!(plan.caches.len(), 1);
        assert_eq!(plan.caches[0].structure, CacheStructure::HashTable(KeySpec::single(0)));
    }

    #[test]
    fn replicated_reduce_input_is_rejected() {
        let mut b = PlanBuilder::new();
        let s = b.source("in", SourceBinding::External("x".into()), 2);
        let r = b.reduce("r", s, KeySpec::single(0), 2, Arc::new(|_, _| Ok(())));
        b.sink("out", SinkRole::Output("o".into()), r);
        let g = b.build();
        let class = classify_paths(&g);
        let ctx = PlanContext::default();
        let mut plan = naive_plan(&g, &class, &ctx);
        assert!(check_plan(&g, &plan, &class, &ctx).is_empty());
        plan.edges[0] = EdgeStrategy::ship(ShipStrategy::Broadcast);
        assert!(!check_plan(&g, &plan, &class, &ctx).is_empty());
    }
}
