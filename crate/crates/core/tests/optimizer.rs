use std::sync::Arc;

use iterflow::algorithms::cc::{build_cc_incremental, CcVariant, UndirectedGraph, NEIGHBORS};
use iterflow::algorithms::pagerank::{build_pagerank, pagerank_inputs, ranks, PageRankStop, MATRIX, VECTOR};
use iterflow::bulk::{run_bulk, run_bulk_with, BulkOptions};
use iterflow::incremental::{run_incremental_with, IncrementalInputs, IncrementalOptions};
use iterflow::optimizer::{choose_plan, enumerate_plans, estimate_cost, explain, optimize, OptimizerConfig};
use iterflow::physical::{CacheStructure, PlanContext, ShipStrategy};
use iterflow::plan::paths::classify_paths;
use iterflow::plan::{PlanBuilder, SinkRole, SourceBinding};
use iterflow::{EngineConfig, EngineError, KeySpec};

fn pagerank_cfg(vector: f64, k: f64) -> OptimizerConfig {
    OptimizerConfig::new(4)
        .with_expected_iterations(k)
        .with_cardinality(MATRIX, 1e6)
        .with_cardinality(VECTOR, vector)
}

#[test]
fn single_map_has_one_candidate() {
    let mut b = PlanBuilder::new();
    let s = b.source("in", SourceBinding::External("in".into()), 1);
    let m = b.map("id", s, 1, Arc::new(|r, out| {
        out.emit(r.clone());
        Ok(())
    }));
    b.sink("out", SinkRole::Output("out".into()), m);
    let g = b.build();
    let cfg = OptimizerConfig::new(4).with_cardinality("in", 10.0);
    let c = enumerate_plans(&g, &PlanContext::default(), &cfg).unwrap();
    assert_eq!(c.len(), 1);
    assert!(c[0].edges.iter().all(|e| e.ship == ShipStrategy::Forward));
}

#[test]
fn small_join_input_may_be_broadcast() {
    let mut b = PlanBuilder::new();
    let tiny = b.source("tiny", SourceBinding::External("tiny".into()), 2);
    let huge = b.source("huge", SourceBinding::External("huge".into()), 2);
    let j = b.match_("join", [tiny, huge], [KeySpec::single(0), KeySpec::single(0)], 2, Arc::new(|a, _, out| {
        out.emit(a.clone());
        Ok(())
    }));
    b.sink("out", SinkRole::Output("out".into()), j);
    let g = b.build();
    let cfg = OptimizerConfig::new(4).with_cardinality("tiny", 10.0).with_cardinality("huge", 1e6);
    let cands = enumerate_plans(&g, &PlanContext::default(), &cfg).unwrap();
    let ships = |p: &iterflow::physical::PhysicalPlan| (p.edges[0].ship.clone(), p.edges[1].ship.clone());
    let k = ShipStrategy::Partition(KeySpec::single(0));
    assert!(cands.iter().any(|p| ships(p) == (ShipStrategy::Broadcast, ShipStrategy::Forward)));
    assert!(cands.iter().any(|p| ships(p) == (k.clone(), k.clone())));
    assert_eq!(ships(&choose_plan(&cands).unwrap()), (ShipStrategy::Broadcast, ShipStrategy::Forward));
}

#[test]
fn missing_cardinality_is_reported() {
    let it = build_pagerank(PageRankStop::Iterations(3));
    let cfg = OptimizerConfig::new(4).with_cardinality(MATRIX, 10.0);
    assert!(matches!(enumerate_plans(&it.step, &PlanContext::default(), &cfg), Err(EngineError::MissingInput(_))));
}

#[test]
fn choose_plan_needs_candidates() {
    assert!(matches!(choose_plan(&[]), Err(EngineError::EmptyEnumeration)));
}

#[test]
fn both_pagerank_shapes_are_enumerated() {
    let it = build_pagerank(PageRankStop::Iterations(20));
    let cands = enumerate_plans(&it.step, &PlanContext::default(), &pagerank_cfg(1e4, 20.0)).unwrap();
    let (vec_edge, mat_edge) = (0, 1);
    assert_eq!(it.step.edge(vec_edge).src, it.step.node_by_name(VECTOR).unwrap().id);
    assert_eq!(it.step.edge(mat_edge).src, it.step.node_by_name(MATRIX).unwrap().id);
    let tid = KeySpec::single(0);
    let sorted_cache = cands.iter().any(|p| {
        p.edges[vec_edge].ship == ShipStrategy::Broadcast
            && p.edges[mat_edge].ship == ShipStrategy::Partition(tid.clone())
            && p.edges[mat_edge].sort == Some(tid.clone())
            && p.cache_on(mat_edge).map(|c| &c.structure) == Some(&CacheStructure::SortedRun(tid.clone()))
    });
    let hash_cache = cands.iter().any(|p| {
        p.edges[vec_edge].ship == ShipStrategy::Partition(KeySpec::single(0))
            && p.edges[mat_edge].ship == ShipStrategy::Partition(KeySpec::single(1))
            && matches!(p.cache_on(mat_edge).map(|c| &c.structure), Some(CacheStructure::HashTable(_)))
    });
    assert!(sorted_cache && hash_cache);
}

#[test]
fn enumerated_costs_match_recomputation() {
    let it = build_pagerank(PageRankStop::Epsilon(1e-9));
    let class = classify_paths(&it.step);
    let ctx = PlanContext::default();
    let cfg = pagerank_cfg(5e3, 20.0);
    for p in enumerate_plans(&it.step, &ctx, &cfg).unwrap() {
        assert_eq!(estimate_cost(&it.step, &p, &class, &ctx, &cfg).unwrap(), p.cost);
    }
}

#[test]
fn every_candidate_computes_the_same_ranks() {
    let edges: Vec<(i64, i64)> = (0..40).flat_map(|i| [(i, (i * 7 + 1) % 40), (i, (i * 3 + 2) % 40)]).collect();
    let inputs = pagerank_inputs(&edges, Some(0.85));
    let it = build_pagerank(PageRankStop::Iterations(8));
    let cfg = EngineConfig::new(3).unwrap();
    let reference = ranks(&run_bulk(&it, &inputs, &cfg).unwrap().result);
    for n in [1e2, 1e7] {
        for plan in enumerate_plans(&it.step, &PlanContext::default(), &pagerank_cfg(n, 20.0)).unwrap() {
            let opts = BulkOptions { plan: Some(&plan), observer: None };
            let got = ranks(&run_bulk_with(&it, &inputs, &cfg, opts).unwrap().result);
            for ((p, a), (q, b)) in reference.iter().zip(&got) {
                assert_eq!(p, q);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn optimized_incremental_cc_runs() {
    let g = UndirectedGraph::from_edges(&[(1, 2), (2, 3), (4, 5)]);
    let it = build_cc_incremental(CcVariant::Match);
    let cfg = OptimizerConfig::new(2)
        .with_cardinality("solution", 5.0)
        .with_cardinality("workset", 6.0)
        .with_cardinality(NEIGHBORS, 6.0);
    let ctx = PlanContext::from(&it);
    let plan = optimize(&it.step, &ctx, &cfg).unwrap();
    assert!(!explain(&it.step, &plan, &ctx, &cfg).unwrap().is_empty());
    let inputs = IncrementalInputs {
        solution: g.initial_components(),
        workset: g.initial_workset(),
        sources: g.sources(),
    };
    let opts = IncrementalOptions { plan: Some(&plan), ..Default::default() };
    let out = run_incremental_with(&it, &inputs, &EngineConfig::new(2).unwrap(), opts).unwrap();
    assert_eq!(iterflow::algorithms::cc::components(&out.solution), vec![(1, 1), (2, 1), (3, 1), (4, 4), (5, 4)]);
}
