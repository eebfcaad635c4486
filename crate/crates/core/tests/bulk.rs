use iterflow::algorithms::cc::{build_cc_bulk, build_cc_simulated_incremental, components, UndirectedGraph};
use iterflow::algorithms::pagerank::{build_pagerank, pagerank_inputs, ranks, PageRankStop, MATRIX};
use iterflow::bulk::{run_bulk, run_bulk_with, BulkOptions};
use iterflow::{EngineConfig, EngineError};

fn config(p: usize) -> EngineConfig {
    EngineConfig::new(p).unwrap()
}

#[test]
fn two_cycle_is_uniform() {
    let inputs = pagerank_inputs(&[(1, 2), (2, 1)], None);
    let out = run_bulk(&build_pagerank(PageRankStop::Iterations(5)), &inputs, &config(2)).unwrap();
    assert_eq!(ranks(&out.result), vec![(1, 0.5), (2, 0.5)]);
    assert_eq!(out.supersteps(), 5);
}

#[test]
fn three_cycle_stays_at_one_third() {
    let inputs = pagerank_inputs(&[(1, 2), (2, 3), (3, 1)], None);
    for p in [1, 3, 4] {
        let out = run_bulk(&build_pagerank(PageRankStop::Iterations(10)), &inputs, &config(p)).unwrap();
        for (_, r) in ranks(&out.result) {
            assert!((r - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn epsilon_stop_converges() {
    let inputs = pagerank_inputs(&[(1, 2), (1, 3), (2, 3), (3, 1)], Some(0.85));
    let out = run_bulk(&build_pagerank(PageRankStop::Epsilon(1e-10)), &inputs, &config(3)).unwrap();
    let total: f64 = ranks(&out.result).iter().map(|(_, r)| r).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(out.supersteps() > 1);
    assert_eq!(out.metrics.last().unwrap().t_changes, 0);
}

#[test]
fn constant_path_runs_once_per_worker() {
    let inputs = pagerank_inputs(&[(1, 2), (2, 3), (3, 1), (3, 2)], None);
    let p = 4;
    let out = run_bulk(&build_pagerank(PageRankStop::Iterations(7)), &inputs, &config(p)).unwrap();
    assert_eq!(out.invocations[MATRIX], p as u64);
    assert_eq!(out.invocations["contrib"], 7 * p as u64);
}

#[test]
fn spilled_cache_gives_identical_result() {
    let edges: Vec<(i64, i64)> = (0..50).flat_map(|i| [(i, (i * 7 + 3) % 50), (i, (i + 1) % 50)]).collect();
    let inputs = pagerank_inputs(&edges, Some(0.85));
    let plan = build_pagerank(PageRankStop::Iterations(6));
    let mem = run_bulk(&plan, &inputs, &config(3)).unwrap();
    let spilled = run_bulk(&plan, &inputs, &config(3).with_memory_budget(0)).unwrap();
    assert_eq!(mem.spilled_caches, 0);
    assert!(spilled.spilled_caches > 0);
    assert_eq!(mem.result, spilled.result);
}

#[test]
fn iteration_cap_is_enforced() {
    let inputs = pagerank_inputs(&[(1, 2), (2, 1), (2, 3)], None);
    let err = run_bulk(&build_pagerank(PageRankStop::Epsilon(0.0)), &inputs, &config(2).with_max_iterations(3)).unwrap_err();
    assert!(matches!(err, EngineError::IterationLimitExceeded { limit: 3 }), "{err:?}");
}

#[test]
fn observer_sees_every_superstep() {
    let inputs = pagerank_inputs(&[(1, 2), (2, 1)], None);
    let seen = std::sync::Mutex::new(Vec::new());
    let obs = |i: u64, o: &[iterflow::Record]| seen.lock().unwrap().push((i, o.len()));
    let opts = BulkOptions { plan: None, observer: Some(&obs) };
    run_bulk_with(&build_pagerank(PageRankStop::Iterations(3)), &inputs, &config(2), opts).unwrap();
    assert_eq!(seen.into_inner().unwrap(), vec![(1, 2), (2, 2), (3, 2)]);
}

#[test]
fn bulk_cc_finds_components() {
    let g = UndirectedGraph::from_edges(&[(1, 2), (2, 3), (5, 6), (7, 7)]);
    for p in [1, 2, 4] {
        let out = run_bulk(&build_cc_bulk(), &g.bulk_inputs(), &config(p)).unwrap();
        assert_eq!(components(&out.result), vec![(1, 1), (2, 1), (3, 1), (5, 5), (6, 5), (7, 7)]);
    }
}

#[test]
fn simulated_incremental_cc_matches_bulk() {
    let edges: Vec<(i64, i64)> = (0..40).map(|i| (i, (i * 13 + 5) % 60)).collect();
    let g = UndirectedGraph::from_edges(&edges);
    let bulk = run_bulk(&build_cc_bulk(), &g.bulk_inputs(), &config(3)).unwrap();
    let sim = run_bulk(&build_cc_simulated_incremental(), &g.flagged_inputs(), &config(3)).unwrap();
    assert_eq!(components(&bulk.result), components(&sim.result));
    assert_eq!(bulk.supersteps(), sim.supersteps());
}
