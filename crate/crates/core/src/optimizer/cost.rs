//! Abstract cost units: records shipped and records touched by local work.

use std::collections::{BTreeMap, HashSet};
use std::ops::AddAssign;

use crate::error::{EngineError, Result};
use crate::operators::LocalStrategy;
use crate::physical::{delivered_properties, is_solution_edge, CostEstimate, EdgeStrategy, PhysicalPlan, PlanContext, Property, PropertySet, ShipStrategy};
use crate::plan::paths::PathClassification;
use crate::plan::{CardinalityHint, EdgeId, NodeId, Operator, PlanGraph};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub parallelism: usize,
    /// Weight of the dynamic path.
    pub expected_iterations: f64,
    /// Estimated record counts, keyed by source node name.
    pub cardinalities: BTreeMap<String, f64>,
}

impl OptimizerConfig {
    pub fn new(parallelism: usize) -> Self {
        OptimizerConfig {
            parallelism: parallelism.max(1),
            expected_iterations: 10.0,
            cardinalities: BTreeMap::new(),
        }
    }

    pub fn with_expected_iterations(mut self, k: f64) -> Self {
        self.expected_iterations = k;
        self
    }

    pub fn with_cardinality(mut self, source: &str, records: f64) -> Self {
        self.cardinalities.insert(source.to_string(), records);
        self
    }
}

/// Network and local units, split by path.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostParts {
    pub constant_network: f64,
    pub constant_local: f64,
    pub dynamic_network: f64,
    pub dynamic_local: f64,
}

impl AddAssign for CostParts {
    fn add_assign(&mut self, o: CostParts) {
        self.constant_network += o.constant_network;
        self.constant_local += o.constant_local;
        self.dynamic_network += o.dynamic_network;
        self.dynamic_local += o.dynamic_local;
    }
}

impl CostParts {
    fn add(&mut self, dynamic: bool, network: f64, local: f64) {
        if dynamic {
            self.dynamic_network += network;
            self.dynamic_local += local;
        } else {
            self.constant_network += network;
            self.constant_local += local;
        }
    }

    pub fn total(&self, k: f64) -> f64 {
        self.constant_network + self.constant_local + k * (self.dynamic_network + self.dynamic_local)
    }

    pub fn estimate(&self, k: f64) -> CostEstimate {
        let constant = self.constant_network + self.constant_local;
        let dynamic = self.dynamic_network + self.dynamic_local;
        CostEstimate {
            network: self.constant_network + k * self.dynamic_network,
            local: self.constant_local + k * self.dynamic_local,
            constant,
            dynamic,
            expected_iterations: k,
            total: constant + k * dynamic,
        }
    }
}

/// `n · ⌈log₂ n⌉`.
pub fn sort_units(n: f64) -> f64 {
    if n <= 1.0 {
        0.0
    } else {
        n * n.log2().ceil()
    }
}

pub fn ship_units(n: f64, ship: &ShipStrategy, p: usize) -> f64 {
    match ship {
        ShipStrategy::Forward => 0.0,
        ShipStrategy::Partition(_) => n,
        ShipStrategy::Broadcast => n * p as f64,
    }
}

/// Records arriving at the consumer, summed over workers.
fn arriving(n: f64, ship: &ShipStrategy, p: usize) -> f64 {
    match ship {
        ShipStrategy::Broadcast => n * p as f64,
        _ => n,
    }
}

/// Output cardinality estimate of every node. First-iteration estimates are
/// used for the dynamic path throughout.
pub fn estimate_cardinalities(graph: &PlanGraph, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    let mut cards = vec![0.0; graph.nodes().len()];
    let lookup = |name: &str| {
        cfg.cardinalities
            .get(name)
            .copied()
            .ok_or_else(|| EngineError::MissingInput(format!("cardinality of `{name}`")))
    };
    for n in graph.topological_order().unwrap_or_default() {
        let node = graph.node(n);
        let ins: Vec<f64> = graph.in_edges(n).iter().map(|e| cards[e.src]).collect();
        cards[n] = match &node.cardinality {
            CardinalityHint::Fixed(x) => *x,
            CardinalityHint::SameAsSource(s) => lookup(s)?,
            CardinalityHint::FromInputs => match &node.op {
                Operator::Source(_) => lookup(&node.name)?,
                Operator::Match { .. } | Operator::CoGroup { .. } => ins[0].max(ins[1]),
                Operator::InnerCoGroup { .. } => ins[0].min(ins[1]),
                Operator::Cross(_) => ins[0] * ins[1],
                _ => ins.first().copied().unwrap_or(0.0),
            },
        };
    }
    Ok(cards)
}

/// Facts shared by all cost evaluations of one logical plan.
pub(crate) struct CostModel<'a> {
    pub graph: &'a PlanGraph,
    pub cards: Vec<f64>,
    pub p: usize,
    dynamic_nodes: HashSet<NodeId>,
    dynamic_edges: HashSet<EdgeId>,
    meet: HashSet<EdgeId>,
}

impl<'a> CostModel<'a> {
    pub fn new(graph: &'a PlanGraph, class: &PathClassification, cfg: &OptimizerConfig) -> Result<Self> {
        Ok(CostModel {
            graph,
            cards: estimate_cardinalities(graph, cfg)?,
            p: cfg.parallelism,
            dynamic_nodes: class.dynamic_nodes(graph).into_iter().collect(),
            dynamic_edges: class.dynamic_edges.iter().copied().collect(),
            meet: class.meet_points.iter().map(|m| m.edge).collect(),
        })
    }

    /// Cost of shipping `n`'s inputs and running `n` with `local`. `props`
    /// are the properties arriving on each input.
    pub fn node_cost(&self, n: NodeId, local: LocalStrategy, ships: &[&EdgeStrategy], props: &[&PropertySet]) -> CostParts {
        let graph = self.graph;
        let node = graph.node(n);
        let node_dynamic = self.dynamic_nodes.contains(&n);
        let mut c = CostParts::default();
        let ins = graph.in_edges(n);
        let mut m = Vec::with_capacity(ins.len());
        let mut solution = Vec::with_capacity(ins.len());
        for (e, s) in ins.iter().zip(ships) {
            let card = self.cards[e.src];
            let here = arriving(card, &s.ship, self.p);
            let dynamic = self.dynamic_edges.contains(&e.id);
            let sort = if s.sort.is_some() { sort_units(here) } else { 0.0 };
            c.add(dynamic, ship_units(card, &s.ship, self.p), sort);
            m.push(here);
            solution.push(is_solution_edge(graph, e.id));
        }
        // materializing a cached input is paid once, on the constant path
        let input_work = |c: &mut CostParts, i: usize, units: f64| {
            let cached = self.meet.contains(&ins[i].id);
            c.add(node_dynamic && !cached, 0.0, units);
        };
        let sorted_on = |i: usize| {
            node.op
                .key_for_input(i)
                .is_some_and(|k| props[i].iter().any(|p| matches!(p, Property::Sorted(s, _) if s == k)))
        };
        if let Some(s) = solution.iter().position(|&b| b) {
            // the solution index is probed in place
            c.add(node_dynamic, 0.0, m[1 - s]);
            return c;
        }
        match (&node.op, local) {
            (Operator::Match { .. } | Operator::InnerCoGroup { .. }, LocalStrategy::HashBuildLeft) => {
                input_work(&mut c, 0, m[0]);
                c.add(node_dynamic, 0.0, m[1]);
            }
            (Operator::Match { .. } | Operator::InnerCoGroup { .. }, LocalStrategy::HashBuildRight) => {
                input_work(&mut c, 1, m[1]);
                c.add(node_dynamic, 0.0, m[0]);
            }
            (Operator::Match { .. } | Operator::InnerCoGroup { .. } | Operator::CoGroup { .. }, LocalStrategy::SortMerge) => {
                for i in 0..2 {
                    if !sorted_on(i) {
                        input_work(&mut c, i, sort_units(m[i]));
                    }
                }
                c.add(node_dynamic, 0.0, m[0] + m[1]);
            }
            (Operator::CoGroup { .. }, LocalStrategy::HashAggregate) => {
                input_work(&mut c, 0, m[0]);
                input_work(&mut c, 1, m[1]);
            }
            (Operator::Reduce { .. }, LocalStrategy::HashAggregate) => input_work(&mut c, 0, m[0]),
            (Operator::Reduce { .. }, LocalStrategy::SortGroup) => {
                if !sorted_on(0) {
                    input_work(&mut c, 0, sort_units(m[0]));
                }
            }
            (Operator::Cross(_), _) => c.add(node_dynamic, 0.0, m[0] * m[1]),
            _ => {}
        }
        c
    }
}

/// Cost of a complete plan.
pub fn estimate_cost(graph: &PlanGraph, plan: &PhysicalPlan, class: &PathClassification, ctx: &PlanContext, cfg: &OptimizerConfig) -> Result<CostEstimate> {
    Ok(plan_parts(&CostModel::new(graph, class, cfg)?, plan, ctx).estimate(cfg.expected_iterations))
}

pub(crate) fn plan_parts(model: &CostModel<'_>, plan: &PhysicalPlan, ctx: &PlanContext) -> CostParts {
    let graph = model.graph;
    let (_, at) = delivered_properties(graph, plan, ctx);
    let mut total = CostParts::default();
    for n in graph.nodes() {
        let ins = graph.in_edges(n.id);
        let ships: Vec<&EdgeStrategy> = ins.iter().map(|e| &plan.edges[e.id]).collect();
        let props: Vec<&PropertySet> = ins.iter().map(|e| &at[e.id]).collect();
        total += model.node_cost(n.id, plan.locals[n.id], &ships, &props);
    }
    total
}
