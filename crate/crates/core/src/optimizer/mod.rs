//! Physical plan selection: interesting properties, enumeration, costing,
//! and cache placement.

pub mod cost;
pub mod enumerate;
pub mod properties;

use std::cmp::Ordering;
use std::fmt::Write;

use crate::error::{EngineError, Result};
use crate::physical::{delivered_properties, EdgeStrategy, PhysicalPlan, PlanContext, PropertySet};
use crate::plan::paths::classify_paths;
use crate::plan::PlanGraph;

pub use crate::physical::place_caches;
pub use cost::{estimate_cardinalities, estimate_cost, sort_units, CostParts, OptimizerConfig};
pub use enumerate::enumerate_plans;
pub use properties::{ip_traversals, propagate_interesting_properties};

/// The cheapest candidate; ties go to fewer network units, then to the
/// earlier candidate.
pub fn choose_plan(candidates: &[PhysicalPlan]) -> Result<PhysicalPlan> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.cost
                .total
                .partial_cmp(&b.cost.total)
                .unwrap_or(Ordering::Equal)
                .then(a.cost.network.partial_cmp(&b.cost.network).unwrap_or(Ordering::Equal))
                .then(i.cmp(j))
        })
        .map(|(_, p)| p.clone())
        .ok_or(EngineError::EmptyEnumeration)
}

pub fn optimize(graph: &PlanGraph, ctx: &PlanContext, cfg: &OptimizerConfig) -> Result<PhysicalPlan> {
    choose_plan(&enumerate_plans(graph, ctx, cfg)?)
}

fn units(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.3}")
    }
}

/// Stable text rendering of `plan`: a cost header, then one line per
/// operator in topological order.
pub fn explain(graph: &PlanGraph, plan: &PhysicalPlan, ctx: &PlanContext, cfg: &OptimizerConfig) -> Result<String> {
    let class = classify_paths(graph);
    let model = cost::CostModel::new(graph, &class, cfg)?;
    let (_, at) = delivered_properties(graph, plan, ctx);
    let c = &plan.cost;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "plan total={} constant={} dynamic={} iterations={} network={} local={}",
        units(c.total),
        units(c.constant),
        units(c.dynamic),
        units(c.expected_iterations),
        units(c.network),
        units(c.local)
    );
    let dynamic = class.dynamic_nodes(graph);
    for n in graph.topological_order().unwrap_or_default() {
        let node = graph.node(n);
        let ins = graph.in_edges(n);
        let ships: Vec<&EdgeStrategy> = ins.iter().map(|e| &plan.edges[e.id]).collect();
        let props: Vec<&PropertySet> = ins.iter().map(|e| &at[e.id]).collect();
        let parts = model.node_cost(n, plan.locals[n], &ships, &props);
        let _ = write!(s, "{}: {} {}", node.name, node.kind(), plan.locals[n]);
        for (e, ship) in ins.iter().zip(&ships) {
            let _ = write!(s, " in{}={}", e.input, ship);
            if let Some(cache) = plan.cache_on(e.id) {
                let _ = write!(s, " cached({})", cache.structure);
            }
        }
        let path = if dynamic.contains(&n) { "dynamic" } else { "constant" };
        let _ = writeln!(
            s,
            " | {path} constant=({} net, {} local) per-iteration=({} net, {} local)",
            units(parts.constant_network),
            units(parts.constant_local),
            units(parts.dynamic_network),
            units(parts.dynamic_local)
        );
    }
    Ok(s)
}
