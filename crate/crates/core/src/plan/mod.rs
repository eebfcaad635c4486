//! Logical dataflow plans and the iteration constructs embedded in them.
//!
//! A [`PlanGraph`] is a DAG of [`OperatorNode`]s. Iterations are not cycles in
//! the graph: the step function of an iteration is a plan whose special
//! sources ([`SourceBinding::PartialSolution`], [`SourceBinding::SolutionSet`],
//! [`SourceBinding::Workset`]) and sinks ([`SinkRole`]) mark where the
//! feedback connects.

pub mod dams;
pub mod microstep;
pub mod paths;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::operators::{CoGroupFn, LocalStrategy, MapFn, OperatorKind, PairFn, ReduceFn};
use crate::record::{KeySpec, Record};

pub use dams::{insert_dams, DamPlacement};
pub use microstep::{check_microstep_eligibility, Violation};
pub use paths::{classify_paths, render_paths, PathClassification};

pub type NodeId = usize;
pub type EdgeId = usize;

/// Where a source's records come from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SourceBinding {
    /// A named dataset supplied when the plan runs.
    External(String),
    /// The bulk iteration input I.
    PartialSolution,
    /// The incremental iteration's solution set S, accessed through its index.
    SolutionSet,
    /// The incremental iteration's working set W.
    Workset,
}

impl SourceBinding {
    pub fn is_iteration_input(&self) -> bool {
        !matches!(self, SourceBinding::External(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SinkRole {
    Output(String),
    /// The bulk iteration output O.
    NextPartialSolution,
    /// The delta set D merged into S.
    Delta,
    /// The next working set.
    NextWorkset,
}

/// Total order over same-key solution records; the greater record wins a merge.
pub type SolutionComparator = Arc<dyn Fn(&Record, &Record) -> Ordering + Send + Sync>;

#[derive(Clone)]
pub enum Operator {
    Source(SourceBinding),
    Sink(SinkRole),
    Termination,
    Map(MapFn),
    Reduce { key: KeySpec, udf: ReduceFn },
    Match { keys: [KeySpec; 2], udf: PairFn },
    Cross(PairFn),
    CoGroup { keys: [KeySpec; 2], udf: CoGroupFn },
    InnerCoGroup { keys: [KeySpec; 2], udf: CoGroupFn },
    Dam,
}

impl Operator {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Operator::Source(_) => OperatorKind::Source,
            Operator::Sink(_) => OperatorKind::Sink,
            Operator::Termination => OperatorKind::TerminationCriterion,
            Operator::Map(_) => OperatorKind::Map,
            Operator::Reduce { .. } => OperatorKind::Reduce,
            Operator::Match { .. } => OperatorKind::Match,
            Operator::Cross(_) => OperatorKind::Cross,
            Operator::CoGroup { .. } => OperatorKind::CoGroup,
            Operator::InnerCoGroup { .. } => OperatorKind::InnerCoGroup,
            Operator::Dam => OperatorKind::Dam,
        }
    }

    /// Key fields the operator uses on `input`, if it is keyed.
    pub fn key_for_input(&self, input: usize) -> Option<&KeySpec> {
        match self {
            Operator::Reduce { key, .. } if input == 0 => Some(key),
            Operator::Match { keys, .. } | Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } => {
                keys.get(input)
            }
            _ => None,
        }
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Source(b) => write!(f, "Source({b:?})"),
            Operator::Sink(r) => write!(f, "Sink({r:?})"),
            Operator::Reduce { key, .. } => write!(f, "Reduce({key})"),
            Operator::Match { keys, .. } => write!(f, "Match({}, {})", keys[0], keys[1]),
            Operator::CoGroup { keys, .. } => write!(f, "CoGroup({}, {})", keys[0], keys[1]),
            Operator::InnerCoGroup { keys, .. } => write!(f, "InnerCoGroup({}, {})", keys[0], keys[1]),
            other => write!(f, "{}", other.kind()),
        }
    }
}

/// Output field `output` is copied unchanged from field `field` of input `input`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Forward {
    pub output: usize,
    pub input: usize,
    pub field: usize,
}

/// Output-size estimate used by the optimizer.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum CardinalityHint {
    /// Derived from the inputs: same as input for unary operators, the larger
    /// input for joins and co-groups, the product for Cross.
    #[default]
    FromInputs,
    /// Same as the named source's cardinality.
    SameAsSource(String),
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct OperatorNode {
    pub id: NodeId,
    pub name: String,
    pub op: Operator,
    /// Expected arity of each input.
    pub in_arities: Vec<usize>,
    pub out_arity: usize,
    pub forwarded: Vec<Forward>,
    pub cardinality: CardinalityHint,
}

impl OperatorNode {
    pub fn kind(&self) -> OperatorKind {
        self.op.kind()
    }

    /// Input field copied into output field `output`, if declared.
    pub fn forwarded_from(&self, output: usize) -> Option<(usize, usize)> {
        self.forwarded
            .iter()
            .find(|f| f.output == output)
            .map(|f| (f.input, f.field))
    }

    /// Output field that carries `field` of `input` unchanged, if any.
    pub fn forwarded_to(&self, input: usize, field: usize) -> Option<usize> {
        self.forwarded
            .iter()
            .find(|f| f.input == input && f.field == field)
            .map(|f| f.output)
    }

    pub fn source_binding(&self) -> Option<&SourceBinding> {
        match &self.op {
            Operator::Source(b) => Some(b),
            _ => None,
        }
    }

    pub fn sink_role(&self) -> Option<&SinkRole> {
        match &self.op {
            Operator::Sink(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Input slot of `dst`.
    pub input: usize,
    /// Arity of the records carried, taken from the producer.
    pub arity: usize,
}

/// A logical dataflow DAG.
#[derive(Clone, Debug, Default)]
pub struct PlanGraph {
    nodes: Vec<OperatorNode>,
    edges: Vec<Edge>,
}

impl PlanGraph {
    pub fn nodes(&self) -> &[OperatorNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &OperatorNode {
        &self.nodes[id]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn node_by_name(&self, name: &str) -> Option<&OperatorNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn in_edges(&self, node: NodeId) -> Vec<&Edge> {
        let mut v: Vec<&Edge> = self.edges.iter().filter(|e| e.dst == node).collect();
        v.sort_by_key(|e| e.input);
        v
    }

    /// The edge feeding input slot `input` of `node`.
    pub fn input_edge(&self, node: NodeId, input: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.dst == node && e.input == input)
    }

    pub fn out_edges(&self, node: NodeId) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.src == node).collect()
    }

    pub fn sources_with(&self, binding: &SourceBinding) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.source_binding() == Some(binding))
            .map(|n| n.id)
            .collect()
    }

    pub fn sinks_with(&self, role: &SinkRole) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.sink_role() == Some(role))
            .map(|n| n.id)
            .collect()
    }

    pub fn termination_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.kind() == OperatorKind::TerminationCriterion)
            .map(|n| n.id)
            .collect()
    }

    pub fn edge_label(&self, e: &Edge) -> String {
        format!("{} -> {}", self.nodes[e.src].name, self.nodes[e.dst].name)
    }

    /// Kahn topological order with ties broken by node id, or `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indeg[e.dst] += 1;
        }
        let mut ready: BTreeSet<NodeId> = (0..self.nodes.len()).filter(|&n| indeg[n] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for e in self.edges.iter().filter(|e| e.src == n) {
                indeg[e.dst] -= 1;
                if indeg[e.dst] == 0 {
                    ready.insert(e.dst);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Inserts `node` on `edge`, which is split into `src -> node -> dst`.
    /// The new node must be unary with matching in/out arity.
    pub(crate) fn splice(&mut self, edge: EdgeId, mut node: OperatorNode) -> NodeId {
        let id = self.nodes.len();
        node.id = id;
        let old = self.edges[edge];
        node.in_arities = vec![old.arity];
        node.out_arity = old.arity;
        node.forwarded = (0..old.arity).map(|f| Forward { output: f, input: 0, field: f }).collect();
        self.nodes.push(node);
        self.edges[edge].dst = id;
        self.edges[edge].input = 0;
        self.edges.push(Edge {
            id: self.edges.len(),
            src: id,
            dst: old.dst,
            input: old.input,
            arity: old.arity,
        });
        id
    }

    /// Checks structure: acyclicity, input wiring, arities, keys and
    /// forwarded-field metadata.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        if self.topological_order().is_none() {
            diags.push(Diagnostic::new(DiagnosticKind::Cycle, "plan graph contains a cycle"));
        }
        let mut names: HashMap<&str, usize> = HashMap::new();
        for n in &self.nodes {
            *names.entry(n.name.as_str()).or_default() += 1;
        }
        for (name, count) in names {
            if count > 1 {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateName,
                    format!("operator name `{name}` used {count} times"),
                ));
            }
        }
        for n in &self.nodes {
            let kind = n.kind();
            if n.in_arities.len() != kind.arity() {
                diags.push(Diagnostic::new(
                    DiagnosticKind::Wiring,
                    format!("operator `{}` ({kind}) declares {} inputs, expected {}", n.name, n.in_arities.len(), kind.arity()),
                ));
            }
            for input in 0..kind.arity() {
                let count = self.edges.iter().filter(|e| e.dst == n.id && e.input == input).count();
                if count != 1 {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::Wiring,
                        format!("input {input} of operator `{}` has {count} incoming edges, expected 1", n.name),
                    ));
                }
            }
            let produces = !matches!(kind, OperatorKind::Sink | OperatorKind::TerminationCriterion);
            if !produces && !self.out_edges(n.id).is_empty() {
                diags.push(Diagnostic::new(
                    DiagnosticKind::Wiring,
                    format!("operator `{}` ({kind}) cannot have consumers", n.name),
                ));
            }
            for input in 0..n.in_arities.len() {
                if let Some(key) = n.op.key_for_input(input) {
                    if key.is_empty() || !key.valid_for(n.in_arities[input]) {
                        diags.push(Diagnostic::new(
                            DiagnosticKind::InvalidKey,
                            format!("key {key} of operator `{}` is invalid for input {input} of arity {}", n.name, n.in_arities[input]),
                        ));
                    }
                }
            }
            if let Operator::Match { keys, .. } | Operator::CoGroup { keys, .. } | Operator::InnerCoGroup { keys, .. } = &n.op {
                if keys[0].fields().len() != keys[1].fields().len() {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::InvalidKey,
                        format!("operator `{}` joins keys of different lengths", n.name),
                    ));
                }
            }
            for f in &n.forwarded {
                let ok = f.output < n.out_arity
                    && f.input < n.in_arities.len()
                    && f.field < n.in_arities[f.input];
                if !ok {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::InvalidKey,
                        format!("operator `{}` forwards out-of-range field {:?}", n.name, f),
                    ));
                }
            }
        }
        for e in &self.edges {
            let producer = &self.nodes[e.src];
            let consumer = &self.nodes[e.dst];
            let expected = consumer.in_arities.get(e.input).copied();
            if e.arity != producer.out_arity || expected != Some(e.arity) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::ArityMismatch { edge: e.id },
                    format!(
                        "edge {} ({}) carries arity {} but `{}` expects {}",
                        e.id,
                        self.edge_label(e),
                        e.arity,
                        consumer.name,
                        expected.map_or("no input".to_string(), |a| a.to_string())
                    ),
                ));
            }
        }
        diags
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    Cycle,
    DuplicateName,
    Wiring,
    ArityMismatch { edge: EdgeId },
    InvalidKey,
    IterationWiring,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Incremental builder for [`PlanGraph`]s.
#[derive(Default)]
pub struct PlanBuilder {
    graph: PlanGraph,
}

impl PlanBuilder {
    pub fn new() -> Self {
        PlanBuilder::default()
    }

    /// Adds `node` with explicit arities and connects `inputs` in order.
    /// Edge arities are taken from the producers.
    pub fn add_node(&mut self, name: &str, op: Operator, in_arities: Vec<usize>, out_arity: usize, inputs: &[NodeId]) -> NodeId {
        let id = self.graph.nodes.len();
        self.graph.nodes.push(OperatorNode {
            id,
            name: name.to_string(),
            op,
            in_arities,
            out_arity,
            forwarded: Vec::new(),
            cardinality: CardinalityHint::FromInputs,
        });
        for (slot, &src) in inputs.iter().enumerate() {
            self.connect(src, id, slot);
        }
        id
    }

    pub fn connect(&mut self, src: NodeId, dst: NodeId, input: usize) -> EdgeId {
        let id = self.graph.edges.len();
        let arity = self.graph.nodes[src].out_arity;
        self.graph.edges.push(Edge { id, src, dst, input, arity });
        id
    }

    fn arities(&self, inputs: &[NodeId]) -> Vec<usize> {
        inputs.iter().map(|&i| self.graph.nodes[i].out_arity).collect()
    }

    pub fn source(&mut self, name: &str, binding: SourceBinding, arity: usize) -> NodeId {
        self.add_node(name, Operator::Source(binding), vec![], arity, &[])
    }

    pub fn sink(&mut self, name: &str, role: SinkRole, input: NodeId) -> NodeId {
        let a = self.arities(&[input]);
        self.add_node(name, Operator::Sink(role), a, 0, &[input])
    }

    pub fn termination(&mut self, name: &str, input: NodeId) -> NodeId {
        let a = self.arities(&[input]);
        self.add_node(name, Operator::Termination, a, 0, &[input])
    }

    pub fn dam(&mut self, name: &str, input: NodeId) -> NodeId {
        let a = self.graph.nodes[input].out_arity;
        let id = self.add_node(name, Operator::Dam, vec![a], a, &[input]);
        self.forward_all(id, 0);
        id
    }

    pub fn map(&mut self, name: &str, input: NodeId, out_arity: usize, udf: MapFn) -> NodeId {
        let a = self.arities(&[input]);
        self.add_node(name, Operator::Map(udf), a, out_arity, &[input])
    }

    pub fn reduce(&mut self, name: &str, input: NodeId, key: KeySpec, out_arity: usize, udf: ReduceFn) -> NodeId {
        let a = self.arities(&[input]);
        self.add_node(name, Operator::Reduce { key, udf }, a, out_arity, &[input])
    }

    pub fn match_(&mut self, name: &str, inputs: [NodeId; 2], keys: [KeySpec; 2], out_arity: usize, udf: PairFn) -> NodeId {
        let a = self.arities(&inputs);
        self.add_node(name, Operator::Match { keys, udf }, a, out_arity, &inputs)
    }

    pub fn cross(&mut self, name: &str, inputs: [NodeId; 2], out_arity: usize, udf: PairFn) -> NodeId {
        let a = self.arities(&inputs);
        self.add_node(name, Operator::Cross(udf), a, out_arity, &inputs)
    }

    pub fn cogroup(&mut self, name: &str, inputs: [NodeId; 2], keys: [KeySpec; 2], out_arity: usize, udf: CoGroupFn) -> NodeId {
        let a = self.arities(&inputs);
        self.add_node(name, Operator::CoGroup { keys, udf }, a, out_arity, &inputs)
    }

    pub fn inner_cogroup(&mut self, name: &str, inputs: [NodeId; 2], keys: [KeySpec; 2], out_arity: usize, udf: CoGroupFn) -> NodeId {
        let a = self.arities(&inputs);
        self.add_node(name, Operator::InnerCoGroup { keys, udf }, a, out_arity, &inputs)
    }

    /// Declares output fields copied unchanged from inputs, as
    /// `(output_field, input, input_field)` triples.
    pub fn forwards(&mut self, node: NodeId, fields: &[(usize, usize, usize)]) -> &mut Self {
        let n = &mut self.graph.nodes[node];
        n.forwarded.extend(fields.iter().map(|&(output, input, field)| Forward { output, input, field }));
        self
    }

    /// Declares that `input` is copied field-for-field into the output prefix.
    pub fn forward_all(&mut self, node: NodeId, input: usize) -> &mut Self {
        let arity = self.graph.nodes[node].in_arities[input].min(self.graph.nodes[node].out_arity);
        let fields: Vec<_> = (0..arity).map(|f| (f, input, f)).collect();
        self.forwards(node, &fields)
    }

    pub fn cardinality(&mut self, node: NodeId, hint: CardinalityHint) -> &mut Self {
        self.graph.nodes[node].cardinality = hint;
        self
    }

    pub fn local_strategy_hint(&self, node: NodeId) -> LocalStrategy {
        LocalStrategy::default_for(self.graph.nodes[node].kind())
    }

    pub fn build(self) -> PlanGraph {
        self.graph
    }
}

/// How a bulk iteration decides to stop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationCriterion {
    /// Run exactly `n` supersteps.
    FixedCount(u64),
    /// Stop after the first superstep in which the plan's termination sink
    /// receives no records.
    CriterionSink,
}

/// A bulk iteration `(G, I, O, T)` or `(G, I, O, n)`.
#[derive(Clone, Debug)]
pub struct BulkIteration {
    pub step: PlanGraph,
    pub termination: TerminationCriterion,
}

impl BulkIteration {
    pub fn new(step: PlanGraph, termination: TerminationCriterion) -> Self {
        BulkIteration { step, termination }
    }

    /// Edges leaving the partial-solution input I.
    pub fn input_edges(&self) -> Vec<EdgeId> {
        let src = self.step.sources_with(&SourceBinding::PartialSolution);
        self.step
            .edges()
            .iter()
            .filter(|e| src.contains(&e.src))
            .map(|e| e.id)
            .collect()
    }

    /// The edge into the output sink O.
    pub fn output_edge(&self) -> Option<EdgeId> {
        let o = self.step.sinks_with(&SinkRole::NextPartialSolution);
        o.first().and_then(|&o| self.step.input_edge(o, 0)).map(|e| e.id)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = self.step.validate();
        let wiring = |m: String| Diagnostic::new(DiagnosticKind::IterationWiring, m);
        let inputs = self.step.sources_with(&SourceBinding::PartialSolution);
        let outputs = self.step.sinks_with(&SinkRole::NextPartialSolution);
        if inputs.len() != 1 {
            diags.push(wiring(format!("bulk iteration needs exactly one partial-solution input, found {}", inputs.len())));
        }
        if outputs.len() != 1 {
            diags.push(wiring(format!("bulk iteration needs exactly one partial-solution output, found {}", outputs.len())));
        }
        if let (Some(&i), Some(&o)) = (inputs.first(), outputs.first()) {
            let ia = self.step.node(i).out_arity;
            let oa = self.step.node(o).in_arities.first().copied().unwrap_or(0);
            if ia != oa {
                diags.push(wiring(format!("partial solution arity {ia} on input but {oa} on output")));
            }
        }
        for b in [SourceBinding::SolutionSet, SourceBinding::Workset] {
            if !self.step.sources_with(&b).is_empty() {
                diags.push(wiring(format!("bulk iteration cannot read {b:?}")));
            }
        }
        for r in [SinkRole::Delta, SinkRole::NextWorkset] {
            if !self.step.sinks_with(&r).is_empty() {
                diags.push(wiring(format!("bulk iteration cannot produce {r:?}")));
            }
        }
        let ts = self.step.termination_nodes();
        match self.termination {
            TerminationCriterion::FixedCount(0) => diags.push(wiring("fixed iteration count must be at least 1".into())),
            TerminationCriterion::FixedCount(_) if !ts.is_empty() => {
                diags.push(wiring("fixed-count iteration must not contain a termination criterion".into()))
            }
            TerminationCriterion::CriterionSink if ts.len() != 1 => {
                diags.push(wiring(format!("criterion iteration needs exactly one termination sink, found {}", ts.len())))
            }
            _ => {}
        }
        if diags.is_empty() {
            diags.extend(paths::dead_branches(&self.step));
        }
        diags
    }
}

/// An incremental iteration `(Δ, S0, W0)`.
#[derive(Clone)]
pub struct IncrementalIteration {
    pub step: PlanGraph,
    /// The key k(s) identifying solution records.
    pub solution_key: KeySpec,
    /// Key by which working-set records are partitioned into the queues.
    pub workset_key: KeySpec,
    pub comparator: Option<SolutionComparator>,
}

impl fmt::Debug for IncrementalIteration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IncrementalIteration")
            .field("step", &self.step)
            .field("solution_key", &self.solution_key)
            .field("workset_key", &self.workset_key)
            .field("comparator", &self.comparator.is_some())
            .finish()
    }
}

impl IncrementalIteration {
    pub fn new(step: PlanGraph, solution_key: KeySpec, workset_key: KeySpec, comparator: Option<SolutionComparator>) -> Self {
        IncrementalIteration {
            step,
            solution_key,
            workset_key,
            comparator,
        }
    }

    pub fn solution_source(&self) -> Option<NodeId> {
        self.step.sources_with(&SourceBinding::SolutionSet).first().copied()
    }

    pub fn workset_source(&self) -> Option<NodeId> {
        self.step.sources_with(&SourceBinding::Workset).first().copied()
    }

    pub fn delta_sink(&self) -> Option<NodeId> {
        self.step.sinks_with(&SinkRole::Delta).first().copied()
    }

    pub fn next_workset_sink(&self) -> Option<NodeId> {
        self.step.sinks_with(&SinkRole::NextWorkset).first().copied()
    }

    /// The operator that joins against the solution-set index and the input
    /// slot S occupies.
    pub fn solution_consumer(&self) -> Option<(NodeId, usize)> {
        let s = self.solution_source()?;
        self.step.out_edges(s).first().map(|e| (e.dst, e.input))
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = self.step.validate();
        let wiring = |m: String| Diagnostic::new(DiagnosticKind::IterationWiring, m);
        let count = |v: Vec<NodeId>| v.len();
        for (b, what) in [(SourceBinding::SolutionSet, "solution-set input S"), (SourceBinding::Workset, "working-set input W")] {
            let c = count(self.step.sources_with(&b));
            if c != 1 {
                diags.push(wiring(format!("incremental iteration needs exactly one {what}, found {c}")));
            }
        }
        for (r, what) in [(SinkRole::Delta, "delta output D"), (SinkRole::NextWorkset, "next working-set output W_next")] {
            let c = count(self.step.sinks_with(&r));
            if c != 1 {
                diags.push(wiring(format!("incremental iteration needs exactly one {what}, found {c}")));
            }
        }
        if !self.step.sources_with(&SourceBinding::PartialSolution).is_empty()
            || !self.step.sinks_with(&SinkRole::NextPartialSolution).is_empty()
            || !self.step.termination_nodes().is_empty()
        {
            diags.push(wiring("incremental iteration cannot use bulk partial-solution inputs, outputs or termination sinks".into()));
        }
        if !diags.is_empty() {
            return diags;
        }
        let s = self.solution_source().expect("checked");
        let s_arity = self.step.node(s).out_arity;
        if !self.solution_key.valid_for(s_arity) || self.solution_key.is_empty() {
            diags.push(wiring(format!("solution key {} invalid for arity {s_arity}", self.solution_key)));
        }
        let d = self.delta_sink().expect("checked");
        let d_arity = self.step.node(d).in_arities[0];
        if d_arity != s_arity {
            diags.push(wiring(format!("delta arity {d_arity} differs from solution arity {s_arity}")));
        }
        let w = self.workset_source().expect("checked");
        let w_arity = self.step.node(w).out_arity;
        let wn = self.next_workset_sink().expect("checked");
        let wn_arity = self.step.node(wn).in_arities[0];
        if wn_arity != w_arity {
            diags.push(wiring(format!("next working set arity {wn_arity} differs from working set arity {w_arity}")));
        }
        if !self.workset_key.valid_for(w_arity) || self.workset_key.fields().len() != self.solution_key.fields().len() {
            diags.push(wiring(format!("working-set key {} invalid for arity {w_arity}", self.workset_key)));
        }
        let consumers = self.step.out_edges(s);
        if consumers.len() != 1 {
            diags.push(wiring(format!("solution set must feed exactly one operator, feeds {}", consumers.len())));
        } else {
            let e = consumers[0];
            let node = self.step.node(e.dst);
            match &node.op {
                Operator::Match { keys, .. } | Operator::InnerCoGroup { keys, .. } => {
                    if keys[e.input] != self.solution_key {
                        diags.push(wiring(format!(
                            "operator `{}` must access the solution set by its key {}, uses {}",
                            node.name, self.solution_key, keys[e.input]
                        )));
                    }
                }
                _ => diags.push(wiring(format!(
                    "solution set can only be joined through Match or InnerCoGroup, `{}` is {}",
                    node.name,
                    node.kind()
                ))),
            }
        }
        if diags.is_empty() {
            diags.extend(paths::dead_branches(&self.step));
        }
        diags
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rec;

    fn ident() -> MapFn {
        Arc::new(|r, out| {
            out.emit(r.clone());
            Ok(())
        })
    }

    #[test]
    fn detects_arity_mismatch_by_edge() {
        let mut b = PlanBuilder::new();
        let s = b.source("in", SourceBinding::External("x".into()), 2);
        let m = b.add_node("m", Operator::Map(ident()), vec![3], 3, &[s]);
        b.sink("out", SinkRole::Output("o".into()), m);
        let g = b.build();
        let d = g.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::ArityMismatch { edge: 0 });
        assert!(d[0].message.contains("in -> m"), "{}", d[0].message);
    }

    #[test]
    fn detects_invalid_key_and_missing_input() {
        let mut b = PlanBuilder::new();
        let s = b.source("in", SourceBinding::External("x".into()), 2);
        let r = b.reduce("r", s, KeySpec::single(4), 2, Arc::new(|_, _| Ok(())));
        b.add_node("j", Operator::Cross(Arc::new(|_, _, _| Ok(()))), vec![2, 2], 2, &[r]);
        let kinds: Vec<_> = b.build().validate().into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::InvalidKey));
        assert!(kinds.contains(&DiagnosticKind::Wiring));
    }

    #[test]
    fn splice_inserts_node() {
        let mut b = PlanBuilder::new();
        let s = b.source("in", SourceBinding::External("x".into()), 1);
        b.sink("out", SinkRole::Output("o".into()), s);
        let mut g = b.build();
        let dam = g.splice(0, OperatorNode {
            id: 0,
            name: "dam".into(),
            op: Operator::Dam,
            in_arities: vec![],
            out_arity: 0,
            forwarded: vec![],
            cardinality: CardinalityHint::FromInputs,
        });
        assert!(g.validate().is_empty());
        assert_eq!(g.topological_order().unwrap(), vec![0, dam, 1]);
        let _ = rec![1i64];
    }
}
