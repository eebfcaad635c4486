//! PageRank as a bulk iteration computing the fixpoint `p = A × p`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::bulk::BulkInputs;
use crate::error::{EngineError, Result, UdfError};
use crate::optimizer::{choose_plan, enumerate_plans, OptimizerConfig};
use crate::physical::{PhysicalPlan, PlanContext, ShipStrategy};
use crate::plan::{BulkIteration, CardinalityHint, PlanBuilder, SinkRole, SourceBinding, TerminationCriterion};
use crate::record::{KeySpec, Record, Value};

/// Name of the transition-matrix source and dataset.
pub const MATRIX: &str = "matrix";
/// Name of the rank-vector source (the partial solution).
pub const VECTOR: &str = "ranks";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PageRankStop {
    Iterations(u64),
    /// Stop once no page's rank changes by more than epsilon.
    Epsilon(f64),
}

fn float(r: &Record, i: usize) -> Result<f64, UdfError> {
    r.float(i).ok_or_else(|| UdfError::new(format!("field {i} of {r} is not numeric")))
}

fn field(r: &Record, i: usize) -> Result<Value, UdfError> {
    r.field(i).cloned().ok_or_else(|| UdfError::new(format!("record {r} has no field {i}")))
}

/// Rank records are `(pid, r)`; matrix records are `(tid, pid, p)`.
pub fn build_pagerank(stop: PageRankStop) -> BulkIteration {
    let mut b = PlanBuilder::new();
    let i = b.source(VECTOR, SourceBinding::PartialSolution, 2);
    let a = b.source(MATRIX, SourceBinding::External(MATRIX.into()), 3);
    let contrib = b.match_(
        "contrib",
        [i, a],
        [KeySpec::single(0), KeySpec::single(1)],
        2,
        Arc::new(|rank, entry, out| {
            out.emit(Record(vec![field(entry, 0)?, Value::Float(float(rank, 1)? * float(entry, 2)?)]));
            Ok(())
        }),
    );
    b.forwards(contrib, &[(0, 1, 0)]);
    let sum = b.reduce(
        "sum",
        contrib,
        KeySpec::single(0),
        2,
        Arc::new(|group, out| {
            // summation order must not depend on arrival order
            let mut parts = Vec::with_capacity(group.len());
            for r in group {
                parts.push(float(r, 1)?);
            }
            parts.sort_by(f64::total_cmp);
            let total: f64 = parts.iter().sum();
            out.emit(Record(vec![field(&group[0], 0)?, Value::Float(total)]));
            Ok(())
        }),
    );
    b.forwards(sum, &[(0, 0, 0)]);
    b.cardinality(sum, CardinalityHint::SameAsSource(VECTOR.into()));
    b.sink("next", SinkRole::NextPartialSolution, sum);
    let termination = match stop {
        PageRankStop::Iterations(n) => TerminationCriterion::FixedCount(n),
        PageRankStop::Epsilon(eps) => {
            let cmp = b.match_(
                "changed",
                [sum, i],
                [KeySpec::single(0), KeySpec::single(0)],
                2,
                Arc::new(move |new, old, out| {
                    if (float(new, 1)? - float(old, 1)?).abs() > eps {
                        out.emit(new.clone());
                    }
                    Ok(())
                }),
            );
            b.forwards(cmp, &[(0, 0, 0), (1, 0, 1)]);
            b.termination("converged", cmp);
            TerminationCriterion::CriterionSink
        }
    };
    BulkIteration::new(b.build(), termination)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlanHint {
    #[default]
    Auto,
    /// Cheapest candidate that replicates the rank vector.
    Broadcast,
    /// Cheapest candidate that partitions the rank vector.
    Partition,
}

/// Picks a physical plan for a PageRank iteration, optionally restricted to
/// one way of shipping the rank vector into the join.
pub fn pagerank_plan(construct: &BulkIteration, hint: PlanHint, cfg: &OptimizerConfig) -> Result<PhysicalPlan> {
    let graph = &construct.step;
    let ctx = PlanContext::from(construct);
    let vector = graph.node_by_name(VECTOR).ok_or_else(|| EngineError::MissingInput(VECTOR.into()))?.id;
    let contrib = graph.node_by_name("contrib").ok_or_else(|| EngineError::MissingInput("contrib".into()))?.id;
    let edge = graph
        .out_edges(vector)
        .iter()
        .find(|e| e.dst == contrib)
        .map(|e| e.id)
        .ok_or_else(|| EngineError::MissingInput("ranks -> contrib".into()))?;
    let wanted = |s: &ShipStrategy| match hint {
        PlanHint::Auto => true,
        PlanHint::Broadcast => *s == ShipStrategy::Broadcast,
        PlanHint::Partition => matches!(s, ShipStrategy::Partition(_)),
    };
    let candidates: Vec<PhysicalPlan> = enumerate_plans(graph, &ctx, cfg)?
        .into_iter()
        .filter(|p| wanted(&p.edges[edge].ship))
        .collect();
    choose_plan(&candidates)
}

/// Column-stochastic transition matrix and uniform start vector for a
/// directed graph. Pages without out-links link to every page. With
/// `damping`, each column is mixed with the uniform distribution.
pub fn pagerank_inputs(edges: &[(i64, i64)], damping: Option<f64>) -> BulkInputs {
    let pages: BTreeSet<i64> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let n = pages.len() as f64;
    let mut out_links: BTreeMap<i64, BTreeSet<i64>> = pages.iter().map(|&p| (p, BTreeSet::new())).collect();
    for &(s, t) in edges {
        out_links.entry(s).or_default().insert(t);
    }
    let mut matrix = Vec::new();
    for (&pid, targets) in &out_links {
        let mut column: BTreeMap<i64, f64> = if targets.is_empty() {
            pages.iter().map(|&t| (t, 1.0 / n)).collect()
        } else {
            let d = targets.len() as f64;
            targets.iter().map(|&t| (t, 1.0 / d)).collect()
        };
        if let Some(alpha) = damping {
            for &t in &pages {
                let e = column.entry(t).or_insert(0.0);
                *e = alpha * *e + (1.0 - alpha) / n;
            }
        }
        matrix.extend(
            column
                .into_iter()
                .filter(|&(_, p)| p > 0.0)
                .map(|(tid, p)| Record(vec![Value::Int(tid), Value::Int(pid), Value::Float(p)])),
        );
    }
    let initial = pages.iter().map(|&p| Record(vec![Value::Int(p), Value::Float(1.0 / n)])).collect();
    BulkInputs {
        initial,
        sources: HashMap::from([(MATRIX.to_string(), matrix)]),
    }
}

/// `(pid, rank)` pairs sorted by pid.
pub fn ranks(result: &[Record]) -> Vec<(i64, f64)> {
    let mut v: Vec<(i64, f64)> = result.iter().filter_map(|r| Some((r.int(0)?, r.float(1)?))).collect();
    v.sort_by_key(|&(p, _)| p);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_columns_are_stochastic() {
        let inputs = pagerank_inputs(&[(1, 2), (1, 3), (2, 3)], None);
        let mut col: BTreeMap<i64, f64> = BTreeMap::new();
        for r in &inputs.sources[MATRIX] {
            *col.entry(r.int(1).unwrap()).or_default() += r.float(2).unwrap();
            assert!(r.float(2).unwrap() > 0.0);
        }
        assert_eq!(col.len(), 3);
        for (_, s) in col {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_hints_pick_vector_shipping() {
        let it = build_pagerank(PageRankStop::Iterations(5));
        let cfg = OptimizerConfig::new(4).with_cardinality(MATRIX, 1e6).with_cardinality(VECTOR, 1e7);
        let vector_ship = |p: &PhysicalPlan| p.edges[0].ship.clone();
        assert!(matches!(vector_ship(&pagerank_plan(&it, PlanHint::Auto, &cfg).unwrap()), ShipStrategy::Partition(_)));
        assert_eq!(vector_ship(&pagerank_plan(&it, PlanHint::Broadcast, &cfg).unwrap()), ShipStrategy::Broadcast);
    }

    #[test]
    fn plan_validates() {
        assert!(build_pagerank(PageRankStop::Iterations(3)).validate().is_empty());
        assert!(build_pagerank(PageRankStop::Epsilon(1e-9)).validate().is_empty());
    }
}
