//! Connected components: bulk fixpoint, incremental (InnerCoGroup or
//! Match update) and a bulk plan that mimics incremental behaviour with a
//! changed flag.
//!
//! Component records are `(vid, cid)`, neighbor records `(vid1, vid2)` with
//! both orientations present. Every vertex starts with `cid = vid`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::bulk::BulkInputs;
use crate::error::UdfError;
use crate::plan::{
    BulkIteration, IncrementalIteration, PlanBuilder, SinkRole, SolutionComparator, SourceBinding, TerminationCriterion,
};
use crate::record::{KeySpec, Record, Value};

pub const NEIGHBORS: &str = "neighbors";

fn int(r: &Record, i: usize) -> Result<i64, UdfError> {
    r.int(i).ok_or_else(|| UdfError::new(format!("field {i} of {r} is not an integer")))
}

fn pair(a: i64, b: i64) -> Record {
    Record(vec![Value::Int(a), Value::Int(b)])
}

/// An undirected graph: sorted vertex ids and symmetric, deduplicated
/// neighbor pairs without self-loops.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct UndirectedGraph {
    pub vertices: Vec<i64>,
    pub neighbors: Vec<(i64, i64)>,
}

impl UndirectedGraph {
    /// Symmetrizes a directed edge list. Self-loops only contribute their
    /// vertex.
    pub fn from_edges(edges: &[(i64, i64)]) -> Self {
        let vertices: BTreeSet<i64> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        let neighbors: BTreeSet<(i64, i64)> = edges
            .iter()
            .filter(|(a, b)| a != b)
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        UndirectedGraph {
            vertices: vertices.into_iter().collect(),
            neighbors: neighbors.into_iter().collect(),
        }
    }

    pub fn neighbor_records(&self) -> Vec<Record> {
        self.neighbors.iter().map(|&(a, b)| pair(a, b)).collect()
    }

    /// `(v, v)` for every vertex.
    pub fn initial_components(&self) -> Vec<Record> {
        self.vertices.iter().map(|&v| pair(v, v)).collect()
    }

    /// `(v, cid(u))` for every neighbor u of v, i.e. `(v, u)`.
    pub fn initial_workset(&self) -> Vec<Record> {
        self.neighbor_records()
    }

    pub fn bulk_inputs(&self) -> BulkInputs {
        BulkInputs {
            initial: self.initial_components(),
            sources: HashMap::from([(NEIGHBORS.to_string(), self.neighbor_records())]),
        }
    }

    /// Initial state `(v, v, true)` for the simulated-incremental plan.
    pub fn flagged_inputs(&self) -> BulkInputs {
        BulkInputs {
            initial: self
                .vertices
                .iter()
                .map(|&v| Record(vec![Value::Int(v), Value::Int(v), Value::Bool(true)]))
                .collect(),
            sources: HashMap::from([(NEIGHBORS.to_string(), self.neighbor_records())]),
        }
    }

    pub fn sources(&self) -> HashMap<String, Vec<Record>> {
        HashMap::from([(NEIGHBORS.to_string(), self.neighbor_records())])
    }
}

/// A lower component id is the greater (later) state.
pub fn lower_cid_wins() -> SolutionComparator {
    Arc::new(|a: &Record, b: &Record| match (a.int(1), b.int(1)) {
        (Some(x), Some(y)) => y.cmp(&x),
        _ => Ordering::Equal,
    })
}

/// `(vid, cid)` pairs sorted by vid.
pub fn components(result: &[Record]) -> Vec<(i64, i64)> {
    let mut v: Vec<(i64, i64)> = result.iter().filter_map(|r| Some((r.int(0)?, r.int(1)?))).collect();
    v.sort_unstable();
    v
}

/// Every superstep recomputes each vertex's cid as the minimum over itself
/// and its neighbors; T receives one record per changed vertex.
pub fn build_cc_bulk() -> BulkIteration {
    let mut b = PlanBuilder::new();
    let s = b.source("components", SourceBinding::PartialSolution, 2);
    let n = b.source(NEIGHBORS, SourceBinding::External(NEIGHBORS.into()), 2);
    let candidates = b.match_(
        "candidates",
        [s, n],
        [KeySpec::single(0), KeySpec::single(0)],
        2,
        Arc::new(|state, edge, out| {
            out.emit(pair(int(edge, 1)?, int(state, 1)?));
            Ok(())
        }),
    );
    b.forwards(candidates, &[(0, 1, 1)]);
    let update = b.cogroup(
        "update",
        [s, candidates],
        [KeySpec::single(0), KeySpec::single(0)],
        2,
        Arc::new(|state, cands, out| {
            for st in state {
                let mut best = int(st, 1)?;
                for c in cands {
                    best = best.min(int(c, 1)?);
                }
                out.emit(pair(int(st, 0)?, best));
            }
            Ok(())
        }),
    );
    b.forwards(update, &[(0, 0, 0)]);
    b.sink("next", SinkRole::NextPartialSolution, update);
    let changed = b.match_(
        "changed",
        [update, s],
        [KeySpec::single(0), KeySpec::single(0)],
        2,
        Arc::new(|new, old, out| {
            if int(new, 1)? != int(old, 1)? {
                out.emit(new.clone());
            }
            Ok(())
        }),
    );
    b.forwards(changed, &[(0, 0, 0), (1, 0, 1)]);
    b.termination("converged", changed);
    BulkIteration::new(b.build(), TerminationCriterion::CriterionSink)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcVariant {
    /// One update per vertex and superstep from the minimum candidate; the
    /// next workset holds no duplicate candidates.
    CoGroup,
    /// One update per improving candidate; eligible for microsteps.
    Match,
}

pub fn build_cc_incremental(variant: CcVariant) -> IncrementalIteration {
    let mut b = PlanBuilder::new();
    let s = b.source("solution", SourceBinding::SolutionSet, 2);
    let w = b.source("workset", SourceBinding::Workset, 2);
    let n = b.source(NEIGHBORS, SourceBinding::External(NEIGHBORS.into()), 2);
    let keys = [KeySpec::single(0), KeySpec::single(0)];
    let update = match variant {
        CcVariant::CoGroup => b.inner_cogroup(
            "update",
            [s, w],
            keys.clone(),
            2,
            Arc::new(|state, cands, out| {
                let st = &state[0];
                let mut best: Option<i64> = None;
                for c in cands {
                    let c = int(c, 1)?;
                    best = Some(best.map_or(c, |b| b.min(c)));
                }
                if let Some(c) = best.filter(|&c| c < int(st, 1).unwrap_or(i64::MAX)) {
                    out.emit(pair(int(st, 0)?, c));
                }
                Ok(())
            }),
        ),
        CcVariant::Match => b.match_(
            "update",
            [s, w],
            keys.clone(),
            2,
            Arc::new(|state, cand, out| {
                let c = int(cand, 1)?;
                if c < int(state, 1)? {
                    out.emit(pair(int(state, 0)?, c));
                }
                Ok(())
            }),
        ),
    };
    b.forwards(update, &[(0, 0, 0)]);
    b.sink("delta", SinkRole::Delta, update);
    let propagate = b.match_(
        "propagate",
        [update, n],
        keys,
        2,
        Arc::new(|d, edge, out| {
            out.emit(pair(int(edge, 1)?, int(d, 1)?));
            Ok(())
        }),
    );
    b.forwards(propagate, &[(0, 1, 1)]);
    let next = match variant {
        CcVariant::Match => propagate,
        // the workset is a set of candidates
        CcVariant::CoGroup => {
            let distinct = b.reduce(
                "distinct",
                propagate,
                KeySpec::new(vec![0, 1]),
                2,
                Arc::new(|group, out| {
                    out.emit(group[0].clone());
                    Ok(())
                }),
            );
            b.forward_all(distinct, 0);
            distinct
        }
    };
    b.sink("next_workset", SinkRole::NextWorkset, next);
    IncrementalIteration::new(b.build(), KeySpec::single(0), KeySpec::single(0), Some(lower_cid_wins()))
}

/// Bulk plan over `(vid, cid, changed)`: only changed vertices message their
/// neighbors, and every vertex copies its state forward.
pub fn build_cc_simulated_incremental() -> BulkIteration {
    let mut b = PlanBuilder::new();
    let s = b.source("state", SourceBinding::PartialSolution, 3);
    let n = b.source(NEIGHBORS, SourceBinding::External(NEIGHBORS.into()), 2);
    let messages = b.match_(
        "messages",
        [s, n],
        [KeySpec::single(0), KeySpec::single(0)],
        2,
        Arc::new(|state, edge, out| {
            if state.field(2).and_then(Value::as_bool) == Some(true) {
                out.emit(pair(int(edge, 1)?, int(state, 1)?));
            }
            Ok(())
        }),
    );
    b.forwards(messages, &[(0, 1, 1)]);
    let update = b.cogroup(
        "update",
        [s, messages],
        [KeySpec::single(0), KeySpec::single(0)],
        3,
        Arc::new(|state, msgs, out| {
            for st in state {
                let old = int(st, 1)?;
                let mut best = old;
                for m in msgs {
                    best = best.min(int(m, 1)?);
                }
                out.emit(Record(vec![Value::Int(int(st, 0)?), Value::Int(best), Value::Bool(best < old)]));
            }
            Ok(())
        }),
    );
    b.forwards(update, &[(0, 0, 0)]);
    b.sink("next", SinkRole::NextPartialSolution, update);
    let changed = b.map(
        "changed",
        update,
        3,
        Arc::new(|r, out| {
            if r.field(2).and_then(Value::as_bool) == Some(true) {
                out.emit(r.clone());
            }
            Ok(())
        }),
    );
    b.forward_all(changed, 0);
    b.termination("converged", changed);
    BulkIteration::new(b.build(), TerminationCriterion::CriterionSink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::check_microstep_eligibility;

    #[test]
    fn graph_is_symmetrized() {
        let g = UndirectedGraph::from_edges(&[(1, 2), (2, 1), (3, 3)]);
        assert_eq!(g.vertices, vec![1, 2, 3]);
        assert_eq!(g.neighbors, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn plans_validate() {
        assert!(build_cc_bulk().validate().is_empty());
        assert!(build_cc_simulated_incremental().validate().is_empty());
        for v in [CcVariant::CoGroup, CcVariant::Match] {
            let it = build_cc_incremental(v);
            assert!(it.validate().is_empty(), "{:?}", it.validate());
        }
    }

    #[test]
    fn eligibility_by_variant() {
        assert!(check_microstep_eligibility(&build_cc_incremental(CcVariant::Match)).is_empty());
        let v = check_microstep_eligibility(&build_cc_incremental(CcVariant::CoGroup));
        let conditions: BTreeSet<char> = v.iter().map(|v| v.condition()).collect();
        assert_eq!(conditions, BTreeSet::from(['a']));
    }
}
