//! Per-worker evaluation of a step plan.
//!
//! The constant path is evaluated once in [`Worker::setup`] and its results
//! are cached at the meet points. Each call to [`Worker::step`] then
//! evaluates only the dynamic operators, reading constant inputs from the
//! caches and the solution set (if any) from the worker's partition.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};

use super::cache::{build_constant_cache, ConstantCache};
use super::exchange::Shipper;
use crate::error::{EngineError, Result};
use crate::incremental::store::SolutionPartition;
use crate::operators::{
    apply_cogroup, apply_cross, apply_map, apply_match, apply_reduce, hash_group, merge_join_sorted, probe_join, sort_by_key,
    Collector, LocalStrategy,
};
use crate::physical::PhysicalPlan;
use crate::plan::paths::PathClassification;
use crate::plan::{EdgeId, NodeId, Operator, PlanGraph, SourceBinding};
use crate::record::{extract_key, Key, Record};

/// Immutable facts about a step plan shared by all workers.
pub(crate) struct StepPlan<'a> {
    pub graph: &'a PlanGraph,
    pub plan: &'a PhysicalPlan,
    order: Vec<NodeId>,
    dynamic: Vec<bool>,
    /// Indexed by edge id.
    meet: Vec<bool>,
    ins: Vec<Vec<EdgeId>>,
    outs: Vec<Vec<EdgeId>>,
    /// Per-node evaluation counters, summed over workers.
    pub invocations: Vec<AtomicU64>,
}

impl<'a> StepPlan<'a> {
    pub fn new(graph: &'a PlanGraph, plan: &'a PhysicalPlan, class: &PathClassification) -> Self {
        let dyn_nodes = class.dynamic_nodes(graph);
        StepPlan {
            graph,
            plan,
            order: graph.topological_order().unwrap_or_default(),
            dynamic: (0..graph.nodes().len()).map(|n| dyn_nodes.contains(&n)).collect(),
            meet: (0..graph.edges().len()).map(|e| class.meet_points.iter().any(|m| m.edge == e)).collect(),
            ins: (0..graph.nodes().len()).map(|n| graph.in_edges(n).iter().map(|e| e.id).collect()).collect(),
            outs: (0..graph.nodes().len()).map(|n| graph.out_edges(n).iter().map(|e| e.id).collect()).collect(),
            invocations: graph.nodes().iter().map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn invocation_counts(&self) -> Vec<u64> {
        self.invocations.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }
}

enum Input<'c> {
    Records(Vec<Record>),
    Cached(&'c ConstantCache),
    Solution,
}

impl<'c> Input<'c> {
    fn cache(&self) -> Option<&'c ConstantCache> {
        match self {
            Input::Cached(c) => Some(*c),
            _ => None,
        }
    }

    fn into_records(self) -> Result<Vec<Record>> {
        match self {
            Input::Records(r) => Ok(r),
            Input::Cached(c) => Ok(c.load()?.records.clone()),
            Input::Solution => Ok(Vec::new()),
        }
    }
}

#[derive(Default)]
pub(crate) struct StepOutput {
    /// Records that reached each sink or termination node.
    pub sinks: HashMap<NodeId, Vec<Record>>,
    pub shipped: u64,
}

pub(crate) struct Worker<'a> {
    pub shared: &'a StepPlan<'a>,
    pub me: usize,
    externals: HashMap<String, Vec<Record>>,
    /// Indexed by edge id.
    caches: Vec<Option<ConstantCache>>,
    budget: usize,
}

impl<'a> Worker<'a> {
    pub fn new(shared: &'a StepPlan<'a>, me: usize, externals: HashMap<String, Vec<Record>>, memory_budget: usize) -> Self {
        Worker {
            shared,
            me,
            externals,
            caches: (0..shared.graph.edges().len()).map(|_| None).collect(),
            budget: memory_budget,
        }
    }

    pub fn spilled_caches(&self) -> usize {
        self.caches.iter().flatten().filter(|c| c.is_spilled()).count()
    }

    /// Evaluates the constant path and fills the caches. Returns the number
    /// of shipped records.
    pub fn setup(&mut self, shipper: &mut dyn Shipper) -> Result<u64> {
        let mut out = StepOutput::default();
        self.pass(false, 0, Vec::new(), None, &mut HashSet::new(), shipper, &mut out)?;
        Ok(out.shipped)
    }

    /// Evaluates the dynamic path once.
    pub fn step(
        &mut self,
        superstep: u64,
        iteration_input: Vec<Record>,
        solution: Option<&SolutionPartition>,
        probes: &mut HashSet<Key>,
        shipper: &mut dyn Shipper,
    ) -> Result<StepOutput> {
        let mut out = StepOutput::default();
        self.pass(true, superstep, iteration_input, solution, probes, shipper, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn pass(
        &mut self,
        dynamic: bool,
        superstep: u64,
        iteration_input: Vec<Record>,
        solution: Option<&SolutionPartition>,
        probes: &mut HashSet<Key>,
        shipper: &mut dyn Shipper,
        out: &mut StepOutput,
    ) -> Result<()> {
        let sp = self.shared;
        let graph = sp.graph;
        let mut data: Vec<Option<Vec<Record>>> = vec![None; graph.edges().len()];
        let mut iteration_input = Some(iteration_input);
        let mut new_caches = Vec::new();
        for &n in &sp.order {
            if sp.dynamic[n] != dynamic {
                continue;
            }
            let node = graph.node(n);
            let mut inputs = Vec::with_capacity(node.in_arities.len());
            for &id in &sp.ins[n] {
                let e = graph.edge(id);
                let is_solution = graph.node(e.src).source_binding() == Some(&SourceBinding::SolutionSet);
                inputs.push(if is_solution {
                    Input::Solution
                } else if dynamic && sp.meet[id] {
                    Input::Cached(self.caches[id].as_ref().ok_or_else(|| {
                        EngineError::InvalidConfig(format!("no cache for constant input {}", graph.edge_label(e)))
                    })?)
                } else {
                    Input::Records(data[id].take().unwrap_or_default())
                });
            }
            let result = match &node.op {
                Operator::Source(SourceBinding::External(name)) => self
                    .externals
                    .get(name)
                    .cloned()
                    .ok_or_else(|| EngineError::MissingInput(name.clone()))?,
                Operator::Source(SourceBinding::SolutionSet) => Vec::new(),
                Operator::Source(_) => iteration_input.take().unwrap_or_default(),
                Operator::Sink(_) | Operator::Termination => {
                    let recs = inputs.pop().map(Input::into_records).transpose()?.unwrap_or_default();
                    out.sinks.entry(n).or_default().extend(recs);
                    Vec::new()
                }
                _ => evaluate(graph, sp.plan.locals[n], n, inputs, solution, probes)?,
            };
            sp.invocations[n].fetch_add(1, Ordering::Relaxed);

            if node.source_binding() == Some(&SourceBinding::SolutionSet) {
                continue;
            }
            let edges = &sp.outs[n];
            let last = edges.len().saturating_sub(1);
            let mut result = Some(result);
            for (i, &id) in edges.iter().enumerate() {
                let e = graph.edge(id);
                let recs = if i == last { result.take().unwrap_or_default() } else { result.clone().unwrap_or_default() };
                let strategy = &sp.plan.edges[e.id];
                let (mut recs, shipped) = shipper.ship(e.id as u64, superstep, &strategy.ship, recs)?;
                out.shipped += shipped;
                if let Some(k) = &strategy.sort {
                    recs = sort_by_key(&recs, k)?.into_iter().map(|(_, r)| r).collect();
                }
                if !dynamic && sp.meet[id] {
                    new_caches.push((id, recs));
                } else {
                    data[id] = Some(recs);
                }
            }
        }
        for (e, recs) in new_caches {
            let placement = sp.plan.cache_on(e).ok_or_else(|| {
                EngineError::InvalidConfig(format!("no cache placed on constant input {}", graph.edge_label(graph.edge(e))))
            })?;
            let cache = build_constant_cache(&placement.structure, recs, &mut self.budget)?;
            self.caches[e] = Some(cache);
        }
        Ok(())
    }
}

fn evaluate(
    graph: &PlanGraph,
    local: LocalStrategy,
    n: NodeId,
    mut inputs: Vec<Input<'_>>,
    solution: Option<&SolutionPartition>,
    probes: &mut HashSet<Key>,
) -> Result<Vec<Record>> {
    let node = graph.node(n);
    let name = node.name.as_str();
    if let Some(s_input) = inputs.iter().position(|i| matches!(i, Input::Solution)) {
        let other = inputs.swap_remove(1 - s_input).into_records()?;
        let sol = solution.ok_or_else(|| EngineError::InvalidConfig("solution set read outside an incremental iteration".into()))?;
        return solution_join(graph, n, s_input, other, sol, probes);
    }
    let second = if inputs.len() == 2 { inputs.pop() } else { None };
    let first = inputs.pop().expect("every operator has an input");
    match &node.op {
        Operator::Map(f) => apply_map(&first.into_records()?, f, name),
        Operator::Dam => first.into_records(),
        Operator::Reduce { key, udf } => apply_reduce(&first.into_records()?, key, udf, local, name),
        Operator::Cross(f) => apply_cross(&first.into_records()?, &second.expect("binary").into_records()?, f, name),
        Operator::Match { keys, udf } => {
            let second = second.expect("binary");
            let (cl, cr) = (first.cache(), second.cache());
            // a cache shaped for this strategy is used without rebuilding
            let table_side = match local {
                LocalStrategy::HashBuildLeft => cl.map(|c| (c, true)),
                LocalStrategy::HashBuildRight => cr.map(|c| (c, false)),
                _ => None,
            };
            if let Some((c, left_is_table)) = table_side {
                let data = c.load()?;
                if let Some(table) = &data.table {
                    let (probe, pk) = if left_is_table {
                        (second.into_records()?, &keys[1])
                    } else {
                        (first.into_records()?, &keys[0])
                    };
                    return probe_join(table, &probe, pk, left_is_table, udf, name);
                }
            }
            if local == LocalStrategy::SortMerge && (cl.is_some() || cr.is_some()) {
                let l = sorted_side(first, &keys[0])?;
                let r = sorted_side(second, &keys[1])?;
                return merge_join_sorted(&l, &r, udf, name);
            }
            apply_match(&first.into_records()?, &second.into_records()?, &keys[0], &keys[1], udf, local, name)
        }
        Operator::CoGroup { keys, udf } | Operator::InnerCoGroup { keys, udf } => {
            let inner = matches!(node.op, Operator::InnerCoGroup { .. });
            let l = first.into_records()?;
            let r = second.expect("binary").into_records()?;
            apply_cogroup(&l, &r, &keys[0], &keys[1], udf, local, inner, name)
        }
        Operator::Source(_) | Operator::Sink(_) | Operator::Termination => unreachable!("handled by the caller"),
    }
}

fn sorted_side(input: Input<'_>, key: &crate::record::KeySpec) -> Result<Vec<(Key, Record)>> {
    match input {
        Input::Cached(c) => {
            let d = c.load()?;
            match &d.sorted {
                Some(s) => Ok(s.clone()),
                None => sort_by_key(&d.records, key),
            }
        }
        other => sort_by_key(&other.into_records()?, key),
    }
}

/// Joins `other` against the solution index, one lookup per distinct key.
fn solution_join(
    graph: &PlanGraph,
    n: NodeId,
    s_input: usize,
    other: Vec<Record>,
    sol: &SolutionPartition,
    probes: &mut HashSet<Key>,
) -> Result<Vec<Record>> {
    let node = graph.node(n);
    let name = node.name.as_str();
    let other_key = node.op.key_for_input(1 - s_input).expect("keyed operator");
    let mut out = Collector::new();
    let fail = |r: &Record, e| EngineError::UdfFailure {
        operator: name.to_string(),
        record: r.clone(),
        source: e,
    };
    let groups = match other.as_slice() {
        [r] => vec![(extract_key(r, other_key)?, vec![r])],
        _ => hash_group(&other, other_key)?.into_iter().collect(),
    };
    for (k, group) in groups {
        let s = sol.get(&k);
        probes.insert(k);
        let Some(s) = s else { continue };
        match &node.op {
            Operator::Match { udf, .. } => {
                for r in group {
                    let res = if s_input == 0 { udf(s, r, &mut out) } else { udf(r, s, &mut out) };
                    res.map_err(|e| fail(r, e))?;
                }
            }
            Operator::InnerCoGroup { udf, .. } => {
                let g: Vec<Record> = group.into_iter().cloned().collect();
                let sv = std::slice::from_ref(s);
                let res = if s_input == 0 { udf(sv, &g, &mut out) } else { udf(&g, sv, &mut out) };
                res.map_err(|e| fail(&g[0], e))?;
            }
            _ => return Err(EngineError::InvalidConfig(format!("`{name}` cannot read the solution set"))),
        }
    }
    Ok(out.into_records())
}

