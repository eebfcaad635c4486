//! Bulk iteration driver.
//!
//! Each worker evaluates the constant path once, then runs the dynamic path
//! once per superstep. Its share of O is held back by the feedback channel
//! and becomes its share of I once the coordinator has decided, from the
//! workers' T counts, that another superstep is needed.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::error::{EngineError, Result};
use crate::physical::{check_plan, naive_plan, PhysicalPlan, PlanContext};
use crate::plan::paths::classify_paths;
use crate::plan::{BulkIteration, SinkRole, TerminationCriterion};
use crate::record::{EngineConfig, Record};
use crate::runtime::exchange::mesh;
use crate::runtime::step::{StepPlan, Worker};
use crate::runtime::{distribute, first_cause, panic_message, split_evenly, SuperstepMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Decides after superstep `iteration` (1-based) whether to run another.
pub fn evaluate_termination(crit: TerminationCriterion, t_count: u64, iteration: u64) -> Decision {
    let stop = match crit {
        TerminationCriterion::FixedCount(n) => iteration >= n,
        TerminationCriterion::CriterionSink => t_count == 0,
    };
    if stop {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// Inputs of a bulk iteration: the initial partial solution and the named
/// datasets read by sources inside the step plan.
#[derive(Clone, Debug, Default)]
pub struct BulkInputs {
    pub initial: Vec<Record>,
    pub sources: HashMap<String, Vec<Record>>,
}

/// Called after every superstep with the superstep index and the complete
/// contents of O.
pub type SuperstepObserver<'a> = &'a (dyn Fn(u64, &[Record]) + Sync);

#[derive(Clone, Copy, Default)]
pub struct BulkOptions<'a> {
    /// Physical plan to execute; a default plan is derived when absent.
    pub plan: Option<&'a PhysicalPlan>,
    pub observer: Option<SuperstepObserver<'a>>,
}

#[derive(Clone, Debug)]
pub struct BulkResult {
    /// Contents of O after the last superstep.
    pub result: Vec<Record>,
    pub metrics: Vec<SuperstepMetrics>,
    /// Evaluations per operator name, summed over workers.
    pub invocations: HashMap<String, u64>,
    /// Exchange packets that arrived tagged with an already finished
    /// superstep.
    pub stale_packets: u64,
    pub spilled_caches: usize,
}

impl BulkResult {
    pub fn supersteps(&self) -> u64 {
        self.metrics.len() as u64
    }
}

struct Report {
    worker: usize,
    input: u64,
    o: Vec<Record>,
    o_count: u64,
    t: u64,
    shipped: u64,
}

enum Message {
    Report(Report),
    Failed,
}

#[derive(Clone, Copy)]
enum Command {
    Continue,
    Stop,
    Abort,
}

struct WorkerEnd {
    result: Vec<Record>,
    stale_packets: u64,
    spilled: usize,
}

pub fn run_bulk(construct: &BulkIteration, inputs: &BulkInputs, config: &EngineConfig) -> Result<BulkResult> {
    run_bulk_with(construct, inputs, config, BulkOptions::default())
}

pub fn run_bulk_with(construct: &BulkIteration, inputs: &BulkInputs, config: &EngineConfig, options: BulkOptions<'_>) -> Result<BulkResult> {
    let diags = construct.validate();
    if !diags.is_empty() {
        return Err(EngineError::InvalidPlan(diags));
    }
    let graph = &construct.step;
    let class = classify_paths(graph);
    let ctx = PlanContext::from(construct);
    let owned_plan;
    let plan = match options.plan {
        Some(p) => p,
        None => {
            owned_plan = naive_plan(graph, &class, &ctx);
            &owned_plan
        }
    };
    let problems = check_plan(graph, plan, &class, &ctx);
    if !problems.is_empty() {
        return Err(EngineError::InvalidConfig(problems.join("; ")));
    }
    let o_node = graph.sinks_with(&SinkRole::NextPartialSolution)[0];
    let t_node = graph.termination_nodes().first().copied();

    let p = config.parallelism();
    let shared = StepPlan::new(graph, plan, &class);
    let abort = Arc::new(AtomicBool::new(false));
    let endpoints = mesh(p, abort.clone());
    let externals = distribute(&inputs.sources, p);
    let initial = split_evenly(&inputs.initial, p);
    let observe = options.observer.is_some();
    let (report_tx, report_rx) = unbounded::<Message>();
    let (cmd_txs, cmd_rxs): (Vec<Sender<Command>>, Vec<Receiver<Command>>) = (0..p).map(|_| unbounded()).unzip();

    let (coordinated, ends) = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(p);
        for (((w, mut ep), ext), (init, cmd_rx)) in endpoints.into_iter().enumerate().zip(externals).zip(initial.into_iter().zip(cmd_rxs)) {
            let tx = report_tx.clone();
            let shared = &shared;
            let abort = abort.clone();
            handles.push(s.spawn(move || -> Result<WorkerEnd> {
                let run = || -> Result<WorkerEnd> {
                    let mut worker = Worker::new(shared, w, ext, config.memory_budget);
                    let mut extra_shipped = worker.setup(&mut ep)?;
                    let mut input = init;
                    let mut superstep = 0u64;
                    loop {
                        superstep += 1;
                        let n_in = input.len() as u64;
                        let mut out = worker.step(superstep, input, None, &mut Default::default(), &mut ep)?;
                        let o = out.sinks.remove(&o_node).unwrap_or_default();
                        let t = t_node.and_then(|t| out.sinks.get(&t)).map_or(0, |v| v.len() as u64);
                        let report = Report {
                            worker: w,
                            input: n_in,
                            o: if observe { o.clone() } else { Vec::new() },
                            o_count: o.len() as u64,
                            t,
                            shipped: out.shipped + std::mem::take(&mut extra_shipped),
                        };
                        let _ = tx.send(Message::Report(report));
                        match cmd_rx.recv() {
                            Ok(Command::Continue) => input = o,
                            Ok(Command::Stop) => {
                                return Ok(WorkerEnd {
                                    result: o,
                                    stale_packets: ep.stale_packets,
                                    spilled: worker.spilled_caches(),
                                })
                            }
                            Ok(Command::Abort) | Err(_) => return Err(EngineError::Aborted),
                        }
                    }
                };
                let r = run();
                if r.is_err() {
                    abort.store(true, Ordering::Relaxed);
                    let _ = tx.send(Message::Failed);
                }
                r
            }));
        }
        drop(report_tx);
        let coordinated = coordinate(construct.termination, config, p, &report_rx, &cmd_txs, &abort, options.observer);
        let ends: Vec<Result<WorkerEnd>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| Err(panic_message(e))))
            .collect();
        (coordinated, ends)
    });

    let mut errors = Vec::new();
    let mut result = Vec::new();
    let (mut stale, mut spilled) = (0, 0);
    for e in ends {
        match e {
            Ok(end) => {
                result.extend(end.result);
                stale += end.stale_packets;
                spilled += end.spilled;
            }
            Err(e) => errors.push(e),
        }
    }
    let metrics = match coordinated {
        Ok(m) if errors.is_empty() => m,
        Ok(_) => return Err(first_cause(errors)),
        Err(e) => {
            errors.insert(0, e);
            return Err(first_cause(errors));
        }
    };
    let invocations = graph
        .nodes()
        .iter()
        .zip(shared.invocation_counts())
        .map(|(n, c)| (n.name.clone(), c))
        .collect();
    Ok(BulkResult {
        result,
        metrics,
        invocations,
        stale_packets: stale,
        spilled_caches: spilled,
    })
}

fn coordinate(
    crit: TerminationCriterion,
    config: &EngineConfig,
    p: usize,
    reports: &Receiver<Message>,
    commands: &[Sender<Command>],
    abort: &AtomicBool,
    observer: Option<SuperstepObserver<'_>>,
) -> Result<Vec<SuperstepMetrics>> {
    let broadcast = |c: Command| {
        for tx in commands {
            let _ = tx.send(c);
        }
    };
    let fail = |e: EngineError| {
        abort.store(true, Ordering::Relaxed);
        broadcast(Command::Abort);
        Err(e)
    };
    let mut metrics = Vec::new();
    let mut superstep = 0u64;
    loop {
        superstep += 1;
        let started = Instant::now();
        let mut got: Vec<Option<Report>> = (0..p).map(|_| None).collect();
        for _ in 0..p {
            match reports.recv() {
                Ok(Message::Report(r)) => {
                    let w = r.worker;
                    got[w] = Some(r);
                }
                // the failing worker's own error is returned from its thread
                Ok(Message::Failed) | Err(_) => return fail(EngineError::Aborted),
            }
        }
        let got: Vec<Report> = got.into_iter().flatten().collect();
        let t_total: u64 = got.iter().map(|r| r.t).sum();
        let input: u64 = got.iter().map(|r| r.input).sum();
        let row = SuperstepMetrics {
            iteration: superstep,
            workset_size: input,
            solution_reads: input,
            solution_updates: got.iter().map(|r| r.o_count).sum(),
            records_shipped: got.iter().map(|r| r.shipped).sum(),
            t_changes: t_total,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        metrics.push(row);
        if let Some(obs) = observer {
            let all: Vec<Record> = got.iter().flat_map(|r| r.o.iter().cloned()).collect();
            obs(superstep, &all);
        }
        match evaluate_termination(crit, t_total, superstep) {
            Decision::Stop => {
                broadcast(Command::Stop);
                return Ok(metrics);
            }
            Decision::Continue if superstep >= config.max_iterations => {
                return fail(EngineError::IterationLimitExceeded {
                    limit: config.max_iterations,
                });
            }
            Decision::Continue => broadcast(Command::Continue),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn termination_rules() {
        assert_eq!(evaluate_termination(TerminationCriterion::FixedCount(3), 7, 3), Decision::Stop);
        assert_eq!(evaluate_termination(TerminationCriterion::FixedCount(3), 0, 2), Decision::Continue);
        assert_eq!(evaluate_termination(TerminationCriterion::CriterionSink, 0, 1), Decision::Stop);
        assert_eq!(evaluate_termination(TerminationCriterion::CriterionSink, 5, 1), Decision::Continue);
    }
}
