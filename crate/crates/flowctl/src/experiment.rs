//! Runs one algorithm variant on an edge list and records per-superstep
//! work counters.

use std::io::Write;
use std::path::Path;

use iterflow::algorithms::cc::{
    build_cc_bulk, build_cc_incremental, build_cc_simulated_incremental, components, CcVariant, UndirectedGraph,
};
use iterflow::algorithms::pagerank::{build_pagerank, pagerank_inputs, pagerank_plan, ranks, PageRankStop, PlanHint, MATRIX, VECTOR};
use iterflow::bulk::{run_bulk_with, BulkOptions};
use iterflow::incremental::{run_incremental_with, ExecutionMode, IncrementalInputs, IncrementalOptions};
use iterflow::optimizer::{explain, optimize, OptimizerConfig};
use iterflow::physical::PlanContext;
use iterflow::runtime::SuperstepMetrics;
use iterflow::EngineConfig;

use crate::{HarnessError, Result};

pub const METRICS_HEADER: [&str; 7] = [
    "iteration",
    "workset_size",
    "solution_reads",
    "solution_updates",
    "records_shipped",
    "t_changes",
    "elapsed_ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    PageRank,
    Cc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Bulk,
    CoGroup,
    Match,
    Simulated,
}

#[derive(Clone, Copy, Debug)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub variant: Variant,
    pub mode: ExecutionMode,
    pub parallelism: usize,
    /// Superstep cap; also the iteration count of PageRank without epsilon.
    pub max_iters: u64,
    pub epsilon: Option<f64>,
    pub expected_iters: f64,
    pub plan: PlanHint,
    pub damping: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(algo: Algo, variant: Variant) -> Self {
        ExperimentConfig {
            algo,
            variant,
            mode: ExecutionMode::Superstep,
            parallelism: 4,
            max_iters: 20,
            epsilon: None,
            expected_iters: 20.0,
            plan: PlanHint::Auto,
            damping: None,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::InvalidParams(m.to_string()));
        match (self.algo, self.variant) {
            (Algo::PageRank, Variant::Bulk) | (Algo::Cc, _) => {}
            (Algo::PageRank, _) => return bad("pagerank only has the bulk variant"),
        }
        if self.mode.is_microstep() && self.variant != Variant::Match {
            return bad("microstep modes need the match variant");
        }
        if self.algo == Algo::Cc && self.plan != PlanHint::Auto {
            return bad("--plan applies to pagerank only");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum ExperimentResult {
    Ranks(Vec<(i64, f64)>),
    Components(Vec<(i64, i64)>),
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub metrics: Vec<SuperstepMetrics>,
    pub result: ExperimentResult,
}

pub fn run_experiment(cfg: &ExperimentConfig, edges: &[(i64, i64)]) -> Result<ExperimentOutput> {
    cfg.check()?;
    if edges.is_empty() {
        return Err(HarnessError::EmptyGraph);
    }
    let engine = EngineConfig::new(cfg.parallelism)?.with_max_iterations(cfg.max_iters);
    match cfg.algo {
        Algo::PageRank => {
            let stop = match cfg.epsilon {
                Some(e) => PageRankStop::Epsilon(e),
                None => PageRankStop::Iterations(cfg.max_iters),
            };
            let it = build_pagerank(stop);
            let inputs = pagerank_inputs(edges, cfg.damping);
            let opt = OptimizerConfig::new(cfg.parallelism)
                .with_expected_iterations(cfg.expected_iters)
                .with_cardinality(MATRIX, inputs.sources[MATRIX].len() as f64)
                .with_cardinality(VECTOR, inputs.initial.len() as f64);
            let plan = pagerank_plan(&it, cfg.plan, &opt)?;
            let opts = BulkOptions { plan: Some(&plan), observer: None };
            let out = run_bulk_with(&it, &inputs, &engine, opts)?;
            Ok(ExperimentOutput {
                metrics: out.metrics,
                result: ExperimentResult::Ranks(ranks(&out.result)),
            })
        }
        Algo::Cc => {
            let g = UndirectedGraph::from_edges(edges);
            let (metrics, result) = match cfg.variant {
                Variant::Bulk => {
                    let out = run_bulk_with(&build_cc_bulk(), &g.bulk_inputs(), &engine, BulkOptions::default())?;
                    (out.metrics, out.result)
                }
                Variant::Simulated => {
                    let it = build_cc_simulated_incremental();
                    let out = run_bulk_with(&it, &g.flagged_inputs(), &engine, BulkOptions::default())?;
                    (out.metrics, out.result)
                }
                Variant::CoGroup | Variant::Match => {
                    let v = if cfg.variant == Variant::CoGroup { CcVariant::CoGroup } else { CcVariant::Match };
                    let inputs = IncrementalInputs {
                        solution: g.initial_components(),
                        workset: g.initial_workset(),
                        sources: g.sources(),
                    };
                    let opts = IncrementalOptions { mode: cfg.mode, ..Default::default() };
                    let out = run_incremental_with(&build_cc_incremental(v), &inputs, &engine, opts)?;
                    (out.metrics, out.solution)
                }
            };
            Ok(ExperimentOutput {
                metrics,
                result: ExperimentResult::Components(components(&result)),
            })
        }
    }
}

/// Optimizer plan for the configured algorithm under the given source
/// cardinalities, rendered by `explain`.
pub fn explain_plan(cfg: &ExperimentConfig, cards: &[(String, f64)]) -> Result<String> {
    cfg.check()?;
    let mut opt = OptimizerConfig::new(cfg.parallelism).with_expected_iterations(cfg.expected_iters);
    for (name, n) in cards {
        opt = opt.with_cardinality(name, *n);
    }
    let text = match (cfg.algo, cfg.variant) {
        (Algo::PageRank, _) => {
            let stop = match cfg.epsilon {
                Some(e) => PageRankStop::Epsilon(e),
                None => PageRankStop::Iterations(cfg.max_iters),
            };
            let it = build_pagerank(stop);
            let plan = pagerank_plan(&it, cfg.plan, &opt)?;
            explain(&it.step, &plan, &PlanContext::from(&it), &opt)?
        }
        (Algo::Cc, Variant::Bulk | Variant::Simulated) => {
            let it = if cfg.variant == Variant::Bulk { build_cc_bulk() } else { build_cc_simulated_incremental() };
            let ctx = PlanContext::from(&it);
            explain(&it.step, &optimize(&it.step, &ctx, &opt)?, &ctx, &opt)?
        }
        (Algo::Cc, v) => {
            let it = build_cc_incremental(if v == Variant::CoGroup { CcVariant::CoGroup } else { CcVariant::Match });
            let ctx = PlanContext::from(&it);
            explain(&it.step, &optimize(&it.step, &ctx, &opt)?, &ctx, &opt)?
        }
    };
    Ok(text)
}

pub fn write_metrics<W: Write>(out: W, metrics: &[SuperstepMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        w.write_record([
            m.iteration.to_string(),
            m.workset_size.to_string(),
            m.solution_reads.to_string(),
            m.solution_updates.to_string(),
            m.records_shipped.to_string(),
            m.t_changes.to_string(),
            format!("{:.3}", m.elapsed_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `key<TAB>value` per record, sorted by key.
pub fn write_result<W: Write>(mut out: W, result: &ExperimentResult) -> Result<()> {
    match result {
        ExperimentResult::Ranks(r) => {
            for (k, v) in r {
                writeln!(out, "{k}\t{v}")?;
            }
        }
        ExperimentResult::Components(c) => {
            for (k, v) in c {
                writeln!(out, "{k}\t{v}")?;
            }
        }
    }
    Ok(())
}

pub fn write_outputs(output: &ExperimentOutput, metrics: Option<&Path>, result: Option<&Path>) -> Result<()> {
    if let Some(p) = metrics {
        write_metrics(std::fs::File::create(p)?, &output.metrics)?;
    }
    if let Some(p) = result {
        write_result(std::io::BufWriter::new(std::fs::File::create(p)?), &output.result)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{incr_cc_trace, oracle_cc};

    #[test]
    fn rejects_invalid_combinations() {
        let mut cfg = ExperimentConfig::new(Algo::PageRank, Variant::Match);
        assert!(matches!(run_experiment(&cfg, &[(1, 2)]), Err(HarnessError::InvalidParams(_))));
        cfg = ExperimentConfig::new(Algo::Cc, Variant::CoGroup);
        cfg.mode = ExecutionMode::MicrostepSync;
        assert!(matches!(run_experiment(&cfg, &[(1, 2)]), Err(HarnessError::InvalidParams(_))));
    }

    #[test]
    fn empty_graph_is_an_error() {
        let cfg = ExperimentConfig::new(Algo::Cc, Variant::Bulk);
        assert!(matches!(run_experiment(&cfg, &[]), Err(HarnessError::EmptyGraph)));
    }

    #[test]
    fn cogroup_metrics_follow_trace() {
        let edges = [(1, 2), (2, 3), (3, 4), (7, 3), (8, 9)];
        let out = run_experiment(&ExperimentConfig::new(Algo::Cc, Variant::CoGroup), &edges).unwrap();
        let trace = incr_cc_trace(&edges);
        assert_eq!(out.metrics.len(), trace.len());
        for (m, t) in out.metrics.iter().zip(&trace) {
            assert_eq!((m.workset_size, m.solution_updates), (t.workset_size, t.updates));
        }
        let ExperimentResult::Components(c) = out.result else { panic!() };
        assert_eq!(c, oracle_cc(&edges).into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn csv_has_fixed_header() {
        let m = SuperstepMetrics {
            iteration: 1,
            workset_size: 2,
            solution_reads: 3,
            solution_updates: 4,
            records_shipped: 5,
            t_changes: 6,
            elapsed_ms: 0.5,
        };
        let mut buf = Vec::new();
        write_metrics(&mut buf, &[m]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,workset_size,solution_reads,solution_updates,records_shipped,t_changes,elapsed_ms\n1,2,3,4,5,6,0.500\n"
        );
    }
}
