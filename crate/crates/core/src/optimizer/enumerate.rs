//! Bottom-up plan enumeration with property-aware pruning.

use std::collections::HashSet;

use super::cost::{CostModel, CostParts, OptimizerConfig};
use super::properties::propagate_interesting_properties;
use crate::error::{EngineError, Result};
use crate::operators::LocalStrategy;
use crate::physical::{
    is_solution_edge, node_problem, output_properties, place_caches, ship_properties, EdgeStrategy, PhysicalPlan, PlanContext, Property,
    PropertySet, ShipStrategy,
};
use crate::plan::paths::{classify_paths, PathClassification};
use crate::plan::{EdgeId, NodeId, Operator, PlanGraph, SinkRole};

#[derive(Clone)]
struct Partial {
    edges: Vec<Option<EdgeStrategy>>,
    locals: Vec<LocalStrategy>,
    /// Delivered properties per node output.
    out: Vec<PropertySet>,
    /// Properties arriving per edge.
    at: Vec<PropertySet>,
    cost: CostParts,
}

/// Ship and sort options for `e`, those establishing interesting properties
/// first. Broadcast is not offered for edges whose data is cached for the
/// whole run, since every worker would hold a full copy.
fn edge_options(graph: &PlanGraph, e: EdgeId, ips: &PropertySet, cached: bool) -> Vec<EdgeStrategy> {
    let edge = graph.edge(e);
    let dst = graph.node(edge.dst);
    if is_solution_edge(graph, e) || matches!(dst.op, Operator::Sink(SinkRole::NextWorkset)) {
        return vec![EdgeStrategy::forward()];
    }
    let mut ships: Vec<ShipStrategy> = ips
        .iter()
        .filter_map(|p| match p {
            Property::Partitioned(k) if k.valid_for(edge.arity) => Some(ShipStrategy::Partition(k.clone())),
            _ => None,
        })
        .collect();
    if ips.contains(&Property::Replicated) && !cached {
        ships.push(ShipStrategy::Broadcast);
    }
    ships.push(ShipStrategy::Forward);
    let mut sorts: Vec<Option<_>> = ips
        .iter()
        .filter_map(|p| match p {
            Property::Sorted(k, _) if k.valid_for(edge.arity) => Some(Some(k.clone())),
            _ => None,
        })
        .collect();
    sorts.push(None);
    ships
        .into_iter()
        .flat_map(|ship| sorts.iter().map(move |sort| EdgeStrategy { ship: ship.clone(), sort: sort.clone() }))
        .collect()
}

fn restricted(props: &PropertySet, ips: &PropertySet) -> PropertySet {
    props.intersection(ips).cloned().collect()
}

/// Candidate physical plans for `graph`, cheapest-first not guaranteed.
pub fn enumerate_plans(graph: &PlanGraph, ctx: &PlanContext, cfg: &OptimizerConfig) -> Result<Vec<PhysicalPlan>> {
    let class = classify_paths(graph);
    enumerate_with(graph, &class, ctx, cfg)
}

pub(crate) fn enumerate_with(graph: &PlanGraph, class: &PathClassification, ctx: &PlanContext, cfg: &OptimizerConfig) -> Result<Vec<PhysicalPlan>> {
    let ips = propagate_interesting_properties(graph, ctx);
    let model = CostModel::new(graph, class, cfg)?;
    let meet: HashSet<EdgeId> = class.meet_points.iter().map(|m| m.edge).collect();
    let order = graph.topological_order().ok_or(EngineError::EmptyEnumeration)?;
    let k = cfg.expected_iterations;

    let mut states = vec![Partial {
        edges: vec![None; graph.edges().len()],
        locals: graph.nodes().iter().map(|n| LocalStrategy::default_for(n.kind())).collect(),
        out: vec![PropertySet::new(); graph.nodes().len()],
        at: vec![PropertySet::new(); graph.edges().len()],
        cost: CostParts::default(),
    }];
    let mut done: HashSet<NodeId> = HashSet::new();
    for &n in &order {
        let node = graph.node(n);
        let ins = graph.in_edges(n);
        let options: Vec<Vec<EdgeStrategy>> = ins.iter().map(|e| edge_options(graph, e.id, &ips[e.id], meet.contains(&e.id))).collect();
        let mut next = Vec::new();
        for st in &states {
            for combo in cartesian(&options) {
                let arriving: Vec<PropertySet> = ins.iter().zip(&combo).map(|(e, s)| ship_properties(&st.out[e.src], s)).collect();
                let ships: Vec<&EdgeStrategy> = combo.iter().collect();
                let props: Vec<&PropertySet> = arriving.iter().collect();
                for &local in LocalStrategy::candidates(node.kind()) {
                    if node_problem(graph, n, local, &ships, &props, ctx).is_some() {
                        continue;
                    }
                    let mut s = st.clone();
                    for (e, strat) in ins.iter().zip(&combo) {
                        s.edges[e.id] = Some(strat.clone());
                        s.at[e.id] = arriving[e.input].clone();
                    }
                    s.locals[n] = local;
                    s.out[n] = output_properties(graph, local, n, &arriving, ctx);
                    s.cost += model.node_cost(n, local, &ships, &props);
                    next.push(s);
                }
            }
        }
        done.insert(n);
        let frontier: Vec<NodeId> = done
            .iter()
            .copied()
            .filter(|&d| graph.out_edges(d).iter().any(|e| !done.contains(&e.dst)))
            .collect();
        let assigned: Vec<EdgeId> = graph
            .edges()
            .iter()
            .filter(|e| done.contains(&e.dst) && !ips[e.id].is_empty())
            .map(|e| e.id)
            .collect();
        states = prune(next, &frontier, &assigned, &ips, k);
        if states.is_empty() {
            return Err(EngineError::EmptyEnumeration);
        }
    }

    Ok(states
        .into_iter()
        .map(|s| {
            let plan = PhysicalPlan {
                edges: s.edges.into_iter().map(|e| e.unwrap_or_else(EdgeStrategy::forward)).collect(),
                locals: s.locals,
                caches: Vec::new(),
                cost: s.cost.estimate(k),
            };
            place_caches(graph, &plan, class)
        })
        .collect())
}

fn cartesian(options: &[Vec<EdgeStrategy>]) -> Vec<Vec<EdgeStrategy>> {
    options.iter().fold(vec![Vec::new()], |acc, opts| {
        acc.into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect()
    })
}

/// Drops every partial plan for which another one is no more expensive and
/// delivers a superset of its properties wherever they may still matter.
/// Of two equivalent plans the earlier survives.
fn prune(states: Vec<Partial>, frontier: &[NodeId], assigned: &[EdgeId], ips: &[PropertySet], k: f64) -> Vec<Partial> {
    let totals: Vec<f64> = states.iter().map(|s| s.cost.total(k)).collect();
    let covers = |a: &Partial, b: &Partial| {
        frontier.iter().all(|&n| b.out[n].is_subset(&a.out[n]))
            && assigned
                .iter()
                .all(|&e| restricted(&b.at[e], &ips[e]).is_subset(&restricted(&a.at[e], &ips[e])))
    };
    let keep: Vec<bool> = (0..states.len())
        .map(|i| {
            !(0..states.len()).any(|j| {
                if j == i || totals[j] > totals[i] || !covers(&states[j], &states[i]) {
                    return false;
                }
                let equivalent = totals[j] == totals[i] && covers(&states[i], &states[j]);
                !equivalent || j < i
            })
        })
        .collect();
    states.into_iter().zip(keep).filter_map(|(s, k)| k.then_some(s)).collect()
}
