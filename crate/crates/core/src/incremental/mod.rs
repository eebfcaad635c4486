//! Incremental iteration driver.
//!
//! The solution set is split by key over the workers, each of which owns
//! one partition and one workset queue. In superstep mode Δ runs over a
//! worker's whole current workset, deltas are merged at the barrier and the
//! next workset is served one superstep later. In microstep mode every
//! workset record is pushed through Δ on its own and its deltas are merged
//! right away; the asynchronous variant drops the barrier altogether and
//! stops on quiescence.

pub mod queue;
pub mod quiescence;
pub mod store;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EngineError, Result};
use crate::operators::LocalStrategy;
use crate::physical::{check_plan, naive_plan, PhysicalPlan, PlanContext, ShipStrategy};
use crate::plan::paths::classify_paths;
use crate::plan::{check_microstep_eligibility, IncrementalIteration, NodeId, SolutionComparator};
use crate::record::{extract_key, partition_of, EngineConfig, Key, KeySpec, Record};
use crate::runtime::exchange::{mesh, LocalShipper, Shipper};
use crate::runtime::step::{StepPlan, Worker};
use crate::runtime::{distribute, first_cause, panic_message, SuperstepMetrics};

pub use queue::{advance_superstep, Advance, WorksetQueue};
pub use quiescence::{detect_quiescence_async, AckCounters, Quiescence, QuiescenceDetector, Snapshot};
pub use store::{merge_delta, DuplicatePolicy, IndexKind, MergeOutcome, SolutionPartition, SolutionStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Superstep,
    MicrostepSync,
    MicrostepAsync(AsyncSettings),
}

impl ExecutionMode {
    pub fn is_microstep(&self) -> bool {
        !matches!(self, ExecutionMode::Superstep)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AsyncSettings {
    /// Acknowledgements are sent after this many processed records, or
    /// earlier when the queue runs empty.
    pub ack_batch: usize,
    pub delay: Option<ChannelDelay>,
}

impl Default for AsyncSettings {
    fn default() -> Self {
        AsyncSettings { ack_batch: 64, delay: None }
    }
}

/// Holds every shipped workset record back for a random time below
/// `max_micros` before it enters the destination queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelDelay {
    pub seed: u64,
    pub max_micros: u64,
}

/// Called for every applied delta with the record it replaced.
pub type UpdateHook<'a> = &'a (dyn Fn(Option<&Record>, &Record) + Sync);

#[derive(Clone, Copy, Default)]
pub struct IncrementalOptions<'a> {
    pub plan: Option<&'a PhysicalPlan>,
    pub mode: ExecutionMode,
    pub duplicates: DuplicatePolicy,
    pub update_hook: Option<UpdateHook<'a>>,
}

#[derive(Clone, Debug, Default)]
pub struct IncrementalInputs {
    pub solution: Vec<Record>,
    pub workset: Vec<Record>,
    pub sources: HashMap<String, Vec<Record>>,
}

#[derive(Clone, Debug)]
pub struct IncrementalResult {
    /// Final solution set, ordered by key.
    pub solution: Vec<Record>,
    /// One row per superstep, or per probe interval in asynchronous mode.
    pub metrics: Vec<SuperstepMetrics>,
    /// Barrier-separated supersteps; zero in asynchronous mode.
    pub supersteps: u64,
    /// Workset records processed one at a time in microstep modes.
    pub microsteps: u64,
    pub invocations: HashMap<String, u64>,
    pub stale_packets: u64,
    pub spilled_caches: usize,
    /// Reads that observed a record merged in the same superstep.
    pub isolation_violations: u64,
    pub merge_warnings: u64,
}

pub fn run_incremental(construct: &IncrementalIteration, inputs: &IncrementalInputs, config: &EngineConfig) -> Result<IncrementalResult> {
    run_incremental_with(construct, inputs, config, IncrementalOptions::default())
}

struct Prepared<'a> {
    construct: &'a IncrementalIteration,
    shared: StepPlan<'a>,
    delta: NodeId,
    next_workset: NodeId,
    worksets: Vec<Vec<Record>>,
    externals: Vec<HashMap<String, Vec<Record>>>,
}

/// Per-worker counters sent to the coordinator.
#[derive(Clone, Copy, Default)]
struct Tally {
    input: u64,
    reads: u64,
    updates: u64,
    shipped: u64,
    produced: u64,
    warnings: u64,
}

struct WorkerEnd {
    partition: SolutionPartition,
    stale_packets: u64,
    spilled: usize,
    microsteps: u64,
    warnings: u64,
}

pub fn run_incremental_with(
    construct: &IncrementalIteration,
    inputs: &IncrementalInputs,
    config: &EngineConfig,
    options: IncrementalOptions<'_>,
) -> Result<IncrementalResult> {
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
    if options.mode.is_microstep() {
        let violations = check_microstep_eligibility(construct);
        if !violations.is_empty() {
            return Err(EngineError::EligibilityViolation(violations));
        }
        for e in graph.edges() {
            if class.is_dynamic(e.id) && plan.edges[e.id].ship != ShipStrategy::Forward {
                return Err(EngineError::InvalidConfig(format!(
                    "microstep execution needs a forward edge at {}",
                    graph.edge_label(e)
                )));
            }
        }
    }

    let p = config.parallelism();
    let kind = match construct.solution_consumer() {
        Some((n, _)) if plan.locals[n] == LocalStrategy::SortMerge => IndexKind::Sorted,
        _ => IndexKind::Hash,
    };
    let mut store = SolutionStore::new(p, construct.solution_key.clone(), kind);
    store.load(inputs.solution.iter().cloned())?;
    let mut worksets = vec![Vec::new(); p];
    for r in &inputs.workset {
        worksets[owner(r, &construct.workset_key, p)?].push(r.clone());
    }
    let prepared = Prepared {
        construct,
        shared: StepPlan::new(graph, plan, &class),
        delta: construct.delta_sink().expect("validated"),
        next_workset: construct.next_workset_sink().expect("validated"),
        worksets,
        externals: distribute(&inputs.sources, p),
    };
    let partitions = store.into_partitions();
    let (ends, metrics, supersteps) = match options.mode {
        ExecutionMode::MicrostepAsync(settings) => {
            let (ends, metrics) = run_async(&prepared, partitions, config, settings, &options)?;
            (ends, metrics, 0)
        }
        mode => {
            let (ends, metrics) = run_synchronous(&prepared, partitions, config, mode, &options)?;
            let n = metrics.len() as u64;
            (ends, metrics, n)
        }
    };

    let mut partitions = Vec::with_capacity(p);
    let (mut stale, mut spilled, mut microsteps, mut warnings, mut isolation) = (0, 0, 0, 0, 0);
    for end in ends {
        stale += end.stale_packets;
        spilled += end.spilled;
        microsteps += end.microsteps;
        warnings += end.warnings;
        isolation += end.partition.isolation_violations();
        partitions.push(end.partition);
    }
    let invocations = graph
        .nodes()
        .iter()
        .zip(prepared.shared.invocation_counts())
        .map(|(n, c)| (n.name.clone(), c))
        .collect();
    Ok(IncrementalResult {
        solution: SolutionStore::from_partitions(partitions).records(),
        metrics,
        supersteps,
        microsteps,
        invocations,
        stale_packets: stale,
        spilled_caches: spilled,
        isolation_violations: isolation,
        merge_warnings: warnings,
    })
}

fn owner(r: &Record, key: &KeySpec, p: usize) -> Result<usize> {
    Ok(partition_of(&extract_key(r, key)?, p))
}

/// Merges `delta` into `part` after checking that this worker owns every key.
fn merge_local(
    part: &mut SolutionPartition,
    me: usize,
    p: usize,
    delta: Vec<Record>,
    cmp: Option<&SolutionComparator>,
    options: &IncrementalOptions<'_>,
) -> Result<MergeOutcome> {
    let mut foreign = 0;
    for d in &delta {
        if owner(d, part.key_spec(), p)? != me {
            foreign += 1;
        }
    }
    if foreign > 0 {
        return Err(EngineError::LocalityViolation { count: foreign });
    }
    let outcome = part.merge_delta(delta, cmp, options.duplicates)?;
    if let Some(hook) = options.update_hook {
        for (new, old) in outcome.applied.iter().zip(&outcome.previous) {
            hook(old.as_ref(), new);
        }
    }
    Ok(outcome)
}

/// Distinct solution keys probed and modified within one superstep.
#[derive(Default)]
struct Seen {
    probes: HashSet<Key>,
    modified: HashSet<Key>,
}

/// Runs Δ for one worker over `input` and returns the next-workset records.
#[allow(clippy::too_many_arguments)]
fn evaluate_delta(
    prep: &Prepared<'_>,
    worker: &mut Worker<'_>,
    part: &mut SolutionPartition,
    superstep: u64,
    input: Vec<Record>,
    seen: &mut Seen,
    shipper: &mut dyn Shipper,
    tally: &mut Tally,
    options: &IncrementalOptions<'_>,
    p: usize,
) -> Result<Vec<Record>> {
    let mut out = worker.step(superstep, input, Some(part), &mut seen.probes, shipper)?;
    let delta = out.sinks.remove(&prep.delta).unwrap_or_default();
    let merged = merge_local(part, worker.me, p, delta, prep.construct.comparator.as_ref(), options)?;
    for r in &merged.applied {
        seen.modified.insert(extract_key(r, part.key_spec())?);
    }
    tally.warnings += merged.warnings;
    tally.shipped += out.shipped;
    Ok(out.sinks.remove(&prep.next_workset).unwrap_or_default())
}

enum Message {
    Report(Tally),
    Failed,
}

#[derive(Clone, Copy)]
enum Command {
    Continue,
    Stop,
    Abort,
}

fn run_synchronous(
    prep: &Prepared<'_>,
    partitions: Vec<SolutionPartition>,
    config: &EngineConfig,
    mode: ExecutionMode,
    options: &IncrementalOptions<'_>,
) -> Result<(Vec<WorkerEnd>, Vec<SuperstepMetrics>)> {
    let p = config.parallelism();
    let wkey = &prep.construct.workset_key;
    let abort = Arc::new(AtomicBool::new(false));
    let queues: Vec<Mutex<WorksetQueue>> = (0..p).map(|_| Mutex::new(WorksetQueue::new(p))).collect();
    for (q, w) in queues.iter().zip(&prep.worksets) {
        q.lock().unwrap().push(0, w.iter().cloned());
    }
    let first = advance_superstep(&queues);
    let (report_tx, report_rx) = unbounded::<Message>();
    let (cmd_txs, cmd_rxs): (Vec<Sender<Command>>, Vec<Receiver<Command>>) = (0..p).map(|_| unbounded()).unzip();
    if first == Advance::Terminate {
        for tx in &cmd_txs {
            let _ = tx.send(Command::Stop);
        }
    }

    let (coordinated, ends) = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(p);
        for (w, (((mut ep, ext), cmd_rx), mut part)) in mesh(p, abort.clone())
            .into_iter()
            .zip(prep.externals.iter().cloned())
            .zip(cmd_rxs)
            .zip(partitions)
            .enumerate()
        {
            let tx = report_tx.clone();
            let abort = abort.clone();
            let queues = &queues;
            let started = first != Advance::Terminate;
            handles.push(s.spawn(move || -> Result<WorkerEnd> {
                let mut microsteps = 0u64;
                let mut warnings = 0u64;
                let run = || -> Result<(u64, usize)> {
                    let mut worker = Worker::new(&prep.shared, w, ext, config.memory_budget);
                    let mut setup_shipped = worker.setup(&mut ep)?;
                    if !started {
                        return Ok((ep.stale_packets, worker.spilled_caches()));
                    }
                    let mut superstep = 0u64;
                    loop {
                        superstep += 1;
                        let input = queues[w].lock().unwrap().take_current();
                        let mut tally = Tally {
                            input: input.len() as u64,
                            shipped: std::mem::take(&mut setup_shipped),
                            ..Tally::default()
                        };
                        let mut seen = Seen::default();
                        let next = if mode == ExecutionMode::Superstep {
                            part.begin_superstep(superstep, true);
                            evaluate_delta(prep, &mut worker, &mut part, superstep, input, &mut seen, &mut ep, &mut tally, options, p)?
                        } else {
                            part.begin_superstep(superstep, false);
                            let mut local = LocalShipper { me: w, p, violations: 0 };
                            let mut next = Vec::new();
                            for r in input {
                                microsteps += 1;
                                next.extend(evaluate_delta(
                                    prep, &mut worker, &mut part, superstep, vec![r], &mut seen, &mut local, &mut tally, options, p,
                                )?);
                            }
                            if local.violations > 0 {
                                return Err(EngineError::LocalityViolation { count: local.violations });
                            }
                            next
                        };
                        tally.reads = seen.probes.len() as u64;
                        tally.updates = seen.modified.len() as u64;
                        tally.produced = next.len() as u64;
                        tally.shipped += next.len() as u64;
                        warnings += tally.warnings;
                        let mut routed = vec![Vec::new(); p];
                        for r in next {
                            routed[owner(&r, wkey, p)?].push(r);
                        }
                        for (dest, recs) in routed.into_iter().enumerate() {
                            if !recs.is_empty() {
                                queues[dest].lock().unwrap().push(w, recs);
                            }
                        }
                        let _ = tx.send(Message::Report(tally));
                        match cmd_rx.recv() {
                            Ok(Command::Continue) => {}
                            Ok(Command::Stop) => return Ok((ep.stale_packets, worker.spilled_caches())),
                            Ok(Command::Abort) | Err(_) => return Err(EngineError::Aborted),
                        }
                    }
                };
                match run() {
                    Ok((stale_packets, spilled)) => Ok(WorkerEnd {
                        partition: part,
                        stale_packets,
                        spilled,
                        microsteps,
                        warnings,
                    }),
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        let _ = tx.send(Message::Failed);
                        Err(e)
                    }
                }
            }));
        }
        drop(report_tx);
        let coordinated = match first {
            Advance::Terminate => Ok(Vec::new()),
            Advance::Continue { .. } => coordinate(config, p, &queues, &report_rx, &cmd_txs, &abort),
        };
        let ends: Vec<Result<WorkerEnd>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| Err(panic_message(e))))
            .collect();
        (coordinated, ends)
    });
    collect(coordinated, ends)
}

fn collect<M>(coordinated: Result<M>, ends: Vec<Result<WorkerEnd>>) -> Result<(Vec<WorkerEnd>, M)> {
    let mut errors = Vec::new();
    let mut ok = Vec::new();
    for e in ends {
        match e {
            Ok(end) => ok.push(end),
            Err(e) => errors.push(e),
        }
    }
    match coordinated {
        Ok(m) if errors.is_empty() => Ok((ok, m)),
        Ok(_) => Err(first_cause(errors)),
        Err(e) => {
            errors.insert(0, e);
            Err(first_cause(errors))
        }
    }
}

fn coordinate(
    config: &EngineConfig,
    p: usize,
    queues: &[Mutex<WorksetQueue>],
    reports: &Receiver<Message>,
    commands: &[Sender<Command>],
    abort: &AtomicBool,
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
        let mut total = Tally::default();
        for _ in 0..p {
            match reports.recv() {
                Ok(Message::Report(t)) => {
                    total.input += t.input;
                    total.reads += t.reads;
                    total.updates += t.updates;
                    total.shipped += t.shipped;
                    total.produced += t.produced;
                }
                Ok(Message::Failed) | Err(_) => return fail(EngineError::Aborted),
            }
        }
        metrics.push(SuperstepMetrics {
            iteration: superstep,
            workset_size: total.input,
            solution_reads: total.reads,
            solution_updates: total.updates,
            records_shipped: total.shipped,
            t_changes: total.produced,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        match advance_superstep(queues) {
            Advance::Terminate => {
                broadcast(Command::Stop);
                return Ok(metrics);
            }
            Advance::Continue { .. } if superstep >= config.max_iterations => {
                return fail(EngineError::IterationLimitExceeded {
                    limit: config.max_iterations,
                })
            }
            Advance::Continue { .. } => broadcast(Command::Continue),
        }
    }
}

enum AsyncMessage {
    Record { from: usize, record: Record },
    Stop,
}

/// Shared counters behind the asynchronous metrics rows.
#[derive(Default)]
struct AsyncStats {
    processed: AtomicU64,
    reads: AtomicU64,
    updates: AtomicU64,
    shipped: AtomicU64,
}

impl AsyncStats {
    fn add(&self, t: &Tally, processed: u64) {
        self.processed.fetch_add(processed, Ordering::Relaxed);
        self.reads.fetch_add(t.reads, Ordering::Relaxed);
        self.updates.fetch_add(t.updates, Ordering::Relaxed);
        self.shipped.fetch_add(t.shipped, Ordering::Relaxed);
    }

    fn load(&self) -> [u64; 4] {
        [&self.processed, &self.reads, &self.updates, &self.shipped].map(|c| c.load(Ordering::Relaxed))
    }
}

const PROBE_INTERVAL: Duration = Duration::from_micros(500);

fn run_async(
    prep: &Prepared<'_>,
    partitions: Vec<SolutionPartition>,
    config: &EngineConfig,
    settings: AsyncSettings,
    options: &IncrementalOptions<'_>,
) -> Result<(Vec<WorkerEnd>, Vec<SuperstepMetrics>)> {
    let p = config.parallelism();
    let wkey = &prep.construct.workset_key;
    let abort = Arc::new(AtomicBool::new(false));
    let counters = AckCounters::new(p + 1);
    let stats = AsyncStats::default();
    let (txs, rxs): (Vec<Sender<AsyncMessage>>, Vec<Receiver<AsyncMessage>>) = (0..p).map(|_| unbounded()).unzip();
    let (fail_tx, fail_rx) = unbounded::<()>();
    let batch = settings.ack_batch.max(1) as u64;

    // the coordinator is sender `p` for the initial workset
    for (dest, w) in prep.worksets.iter().enumerate() {
        counters.sent(p, w.len() as u64);
        for r in w {
            let _ = txs[dest].send(AsyncMessage::Record { from: p, record: r.clone() });
        }
    }

    let (coordinated, ends) = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(p);
        for (w, (((mut ep, ext), rx), mut part)) in mesh(p, abort.clone())
            .into_iter()
            .zip(prep.externals.iter().cloned())
            .zip(rxs)
            .zip(partitions)
            .enumerate()
        {
            let abort = abort.clone();
            let fail_tx = fail_tx.clone();
            let (txs, counters, stats) = (&txs, &counters, &stats);
            handles.push(s.spawn(move || -> Result<WorkerEnd> {
                let mut microsteps = 0u64;
                let mut warnings = 0u64;
                let run = || -> Result<(u64, usize)> {
                    let mut worker = Worker::new(&prep.shared, w, ext, config.memory_budget);
                    let setup = worker.setup(&mut ep)?;
                    stats.shipped.fetch_add(setup, Ordering::Relaxed);
                    part.begin_superstep(0, false);
                    let mut rng = settings.delay.map(|d| (ChaCha8Rng::seed_from_u64(d.seed ^ (w as u64).wrapping_mul(0x9E37_79B9)), d.max_micros));
                    let mut outbox: Vec<(Instant, usize, Record)> = Vec::new();
                    let mut pending = vec![0u64; p + 1];
                    let mut pending_total = 0u64;
                    let mut local = LocalShipper { me: w, p, violations: 0 };
                    loop {
                        if abort.load(Ordering::Relaxed) {
                            return Err(EngineError::Aborted);
                        }
                        let now = Instant::now();
                        let mut wait = Duration::from_millis(5);
                        outbox.retain(|(at, dest, r)| {
                            if *at <= now {
                                let _ = txs[*dest].send(AsyncMessage::Record { from: w, record: r.clone() });
                                false
                            } else {
                                wait = wait.min(*at - now);
                                true
                            }
                        });
                        match rx.recv_timeout(wait) {
                            Ok(AsyncMessage::Record { from, record }) => {
                                counters.touch();
                                microsteps += 1;
                                let mut tally = Tally::default();
                                let mut seen = Seen::default();
                                let next = evaluate_delta(
                                    prep, &mut worker, &mut part, 0, vec![record], &mut seen, &mut local, &mut tally, options, p,
                                )?;
                                if local.violations > 0 {
                                    return Err(EngineError::LocalityViolation { count: local.violations });
                                }
                                tally.reads = seen.probes.len() as u64;
                        tally.updates = seen.modified.len() as u64;
                                tally.shipped += next.len() as u64;
                                warnings += tally.warnings;
                                counters.sent(w, next.len() as u64);
                                for r in next {
                                    let dest = owner(&r, wkey, p)?;
                                    match rng.as_mut() {
                                        Some((rng, max)) => {
                                            let d = Duration::from_micros(rng.gen_range(0..=*max));
                                            outbox.push((Instant::now() + d, dest, r));
                                        }
                                        None => {
                                            let _ = txs[dest].send(AsyncMessage::Record { from: w, record: r });
                                        }
                                    }
                                }
                                stats.add(&tally, 1);
                                pending[from] += 1;
                                pending_total += 1;
                            }
                            Ok(AsyncMessage::Stop) => return Ok((ep.stale_packets, worker.spilled_caches())),
                            Err(RecvTimeoutError::Timeout) => {}
                            Err(RecvTimeoutError::Disconnected) => return Err(EngineError::Aborted),
                        }
                        if pending_total >= batch || (pending_total > 0 && rx.is_empty()) {
                            for (sender, n) in pending.iter_mut().enumerate() {
                                if *n > 0 {
                                    counters.acked(sender, std::mem::take(n));
                                }
                            }
                            pending_total = 0;
                        }
                    }
                };
                match run() {
                    Ok((stale_packets, spilled)) => Ok(WorkerEnd {
                        partition: part,
                        stale_packets,
                        spilled,
                        microsteps,
                        warnings,
                    }),
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        let _ = fail_tx.send(());
                        Err(e)
                    }
                }
            }));
        }
        drop(fail_tx);
        let coordinated = watch(&counters, &stats, &txs, &fail_rx, &abort);
        let ends: Vec<Result<WorkerEnd>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| Err(panic_message(e))))
            .collect();
        (coordinated, ends)
    });
    collect(coordinated, ends)
}

/// Probes for quiescence and records one metrics row per active interval.
fn watch(
    counters: &AckCounters,
    stats: &AsyncStats,
    queues: &[Sender<AsyncMessage>],
    failures: &Receiver<()>,
    abort: &AtomicBool,
) -> Result<Vec<SuperstepMetrics>> {
    let mut detector = QuiescenceDetector::new();
    let mut metrics = Vec::new();
    let mut last = stats.load();
    let mut interval_start = Instant::now();
    loop {
        std::thread::sleep(PROBE_INTERVAL);
        if failures.try_recv().is_ok() || abort.load(Ordering::Relaxed) {
            abort.store(true, Ordering::Relaxed);
            return Err(EngineError::Aborted);
        }
        let queued = queues.iter().map(Sender::len).sum();
        let verdict = detector.probe(counters.snapshot(queued));
        let now = stats.load();
        if now[0] > last[0] {
            metrics.push(SuperstepMetrics {
                iteration: metrics.len() as u64 + 1,
                workset_size: now[0] - last[0],
                solution_reads: now[1] - last[1],
                solution_updates: now[2] - last[2],
                records_shipped: now[3] - last[3],
                t_changes: queued as u64,
                elapsed_ms: interval_start.elapsed().as_secs_f64() * 1e3,
            });
            last = now;
            interval_start = Instant::now();
        }
        if verdict == Quiescence::Terminated {
            for tx in queues {
                let _ = tx.send(AsyncMessage::Stop);
            }
            return Ok(metrics);
        }
    }
}
