use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use iterflow::algorithms::cc::{build_cc_incremental, components, CcVariant, UndirectedGraph};
use iterflow::incremental::{
    run_incremental, run_incremental_with, AsyncSettings, ChannelDelay, ExecutionMode, IncrementalInputs, IncrementalOptions,
};
use iterflow::{EngineConfig, EngineError, Record};

fn union_find(g: &UndirectedGraph) -> Vec<(i64, i64)> {
    let mut parent: BTreeMap<i64, i64> = g.vertices.iter().map(|&v| (v, v)).collect();
    fn find(p: &mut BTreeMap<i64, i64>, v: i64) -> i64 {
        let mut r = v;
        while p[&r] != r {
            r = p[&r];
        }
        p.insert(v, r);
        r
    }
    for &(a, b) in &g.neighbors {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent.insert(ra.max(rb), ra.min(rb));
        }
    }
    g.vertices.iter().map(|&v| (v, find(&mut parent, v))).collect()
}

fn inputs(g: &UndirectedGraph) -> IncrementalInputs {
    IncrementalInputs {
        solution: g.initial_components(),
        workset: g.initial_workset(),
        sources: g.sources(),
    }
}

fn pseudo_random_graph(n: i64, m: i64, salt: i64) -> UndirectedGraph {
    let edges: Vec<(i64, i64)> = (0..m).map(|i| ((i * 7919 + salt) % n, (i * i * 31 + salt * 17 + 3) % n)).collect();
    UndirectedGraph::from_edges(&edges)
}

#[test]
fn path_graph_is_one_component() {
    let g = UndirectedGraph::from_edges(&[(1, 2), (2, 3)]);
    let out = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inputs(&g), &EngineConfig::new(2).unwrap()).unwrap();
    assert_eq!(components(&out.solution), vec![(1, 1), (2, 1), (3, 1)]);
}

#[test]
fn all_modes_match_union_find() {
    for salt in 0..4 {
        let g = pseudo_random_graph(300, 260, salt);
        let expected = union_find(&g);
        let cfg = EngineConfig::new(4).unwrap();
        let cog = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inputs(&g), &cfg).unwrap();
        assert_eq!(components(&cog.solution), expected);
        assert_eq!(cog.isolation_violations, 0);
        let matched = build_cc_incremental(CcVariant::Match);
        for mode in [
            ExecutionMode::Superstep,
            ExecutionMode::MicrostepSync,
            ExecutionMode::MicrostepAsync(AsyncSettings::default()),
            ExecutionMode::MicrostepAsync(AsyncSettings {
                ack_batch: 1,
                delay: Some(ChannelDelay { seed: salt as u64, max_micros: 50 }),
            }),
        ] {
            let opts = IncrementalOptions { mode, ..Default::default() };
            let out = run_incremental_with(&matched, &inputs(&g), &cfg, opts).unwrap();
            assert_eq!(components(&out.solution), expected, "{mode:?}");
        }
    }
}

#[test]
fn component_ids_only_decrease() {
    let g = pseudo_random_graph(200, 300, 5);
    let violations = AtomicU64::new(0);
    let updates = AtomicU64::new(0);
    let hook = |old: Option<&Record>, new: &Record| {
        updates.fetch_add(1, Ordering::Relaxed);
        if old.and_then(|o| o.int(1)).is_some_and(|o| new.int(1).unwrap() >= o) {
            violations.fetch_add(1, Ordering::Relaxed);
        }
    };
    for mode in [ExecutionMode::Superstep, ExecutionMode::MicrostepAsync(AsyncSettings::default())] {
        let opts = IncrementalOptions { mode, update_hook: Some(&hook), ..Default::default() };
        run_incremental_with(&build_cc_incremental(CcVariant::Match), &inputs(&g), &EngineConfig::new(3).unwrap(), opts).unwrap();
    }
    assert!(updates.load(Ordering::Relaxed) > 0);
    assert_eq!(violations.load(Ordering::Relaxed), 0);
}

#[test]
fn superstep_runs_are_deterministic() {
    let g = pseudo_random_graph(150, 200, 2);
    let cfg = EngineConfig::new(4).unwrap();
    let plan = build_cc_incremental(CcVariant::CoGroup);
    let a = run_incremental(&plan, &inputs(&g), &cfg).unwrap();
    let b = run_incremental(&plan, &inputs(&g), &cfg).unwrap();
    let counters = |r: &iterflow::incremental::IncrementalResult| r.metrics.iter().map(|m| m.counters()).collect::<Vec<_>>();
    assert_eq!(counters(&a), counters(&b));
    assert_eq!(a.solution, b.solution);
}

#[test]
fn solution_reads_track_the_workset() {
    let g = pseudo_random_graph(400, 300, 9);
    let out = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inputs(&g), &EngineConfig::new(4).unwrap()).unwrap();
    for m in &out.metrics {
        assert!(m.solution_reads <= m.workset_size);
    }
    assert_eq!(out.metrics[0].workset_size, g.neighbors.len() as u64);
    assert_eq!(out.metrics.last().unwrap().t_changes, 0);
}

#[test]
fn microstep_on_cogroup_variant_is_rejected() {
    let g = UndirectedGraph::from_edges(&[(1, 2)]);
    let opts = IncrementalOptions { mode: ExecutionMode::MicrostepSync, ..Default::default() };
    let err = run_incremental_with(&build_cc_incremental(CcVariant::CoGroup), &inputs(&g), &EngineConfig::new(2).unwrap(), opts).unwrap_err();
    match err {
        EngineError::EligibilityViolation(v) => assert_eq!(v[0].condition(), 'a'),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn iteration_cap_applies_to_supersteps() {
    let g = UndirectedGraph::from_edges(&(0..20).map(|i| (i, i + 1)).collect::<Vec<_>>());
    let cfg = EngineConfig::new(2).unwrap().with_max_iterations(3);
    let err = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inputs(&g), &cfg).unwrap_err();
    assert!(matches!(err, EngineError::IterationLimitExceeded { limit: 3 }));
}

#[test]
fn empty_workset_returns_initial_solution() {
    let g = UndirectedGraph::from_edges(&[(1, 2)]);
    let mut inp = inputs(&g);
    inp.workset.clear();
    let out = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inp, &EngineConfig::new(2).unwrap()).unwrap();
    assert_eq!(components(&out.solution), vec![(1, 1), (2, 2)]);
    assert_eq!(out.supersteps, 0);
}

#[test]
fn sources_are_required() {
    let g = UndirectedGraph::from_edges(&[(1, 2)]);
    let mut inp = inputs(&g);
    inp.sources = HashMap::new();
    let err = run_incremental(&build_cc_incremental(CcVariant::CoGroup), &inp, &EngineConfig::new(2).unwrap()).unwrap_err();
    assert!(matches!(err, EngineError::MissingInput(_)), "{err:?}");
}
