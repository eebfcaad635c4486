//! Second-order operators wrapping user-defined first-order functions.
//!
//! Each `apply_*` function runs one operator instance over local bags of
//! records. The parallel runtime calls them once per worker with that worker's
//! partition of the inputs; shipping has already happened by then.
//!
//! Group order for the group-at-a-time operators is first-seen order under the
//! hash strategies and key order under the sort strategies. Callers must not
//! depend on either.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{EngineError, Result, UdfResult};
use crate::record::{extract_key, Key, KeySpec, Record};

/// Output sink handed to every UDF invocation.
#[derive(Debug, Default)]
pub struct Collector {
    out: Vec<Record>,
}

impl Collector {
    pub fn new() -> Self {
        Collector::default()
    }

    pub fn emit(&mut self, record: Record) {
        self.out.push(record);
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.out
    }
}

pub type MapFn = Arc<dyn Fn(&Record, &mut Collector) -> UdfResult + Send + Sync>;
pub type ReduceFn = Arc<dyn Fn(&[Record], &mut Collector) -> UdfResult + Send + Sync>;
pub type PairFn = Arc<dyn Fn(&Record, &Record, &mut Collector) -> UdfResult + Send + Sync>;
pub type CoGroupFn = Arc<dyn Fn(&[Record], &[Record], &mut Collector) -> UdfResult + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorKind {
    Map,
    Reduce,
    Match,
    Cross,
    CoGroup,
    InnerCoGroup,
    Source,
    Sink,
    TerminationCriterion,
    Dam,
    Cache,
}

impl OperatorKind {
    pub fn arity(self) -> usize {
        match self {
            OperatorKind::Source => 0,
            OperatorKind::Match | OperatorKind::Cross | OperatorKind::CoGroup | OperatorKind::InnerCoGroup => 2,
            _ => 1,
        }
    }

    pub fn is_record_at_a_time(self) -> bool {
        matches!(self, OperatorKind::Map | OperatorKind::Match | OperatorKind::Cross)
    }

    pub fn is_group_at_a_time(self) -> bool {
        matches!(
            self,
            OperatorKind::Reduce | OperatorKind::CoGroup | OperatorKind::InnerCoGroup
        )
    }

    /// True if the operator groups or joins by key fields.
    pub fn is_keyed(self) -> bool {
        matches!(
            self,
            OperatorKind::Reduce | OperatorKind::Match | OperatorKind::CoGroup | OperatorKind::InnerCoGroup
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Map => "Map",
            OperatorKind::Reduce => "Reduce",
            OperatorKind::Match => "Match",
            OperatorKind::Cross => "Cross",
            OperatorKind::CoGroup => "CoGroup",
            OperatorKind::InnerCoGroup => "InnerCoGroup",
            OperatorKind::Source => "Source",
            OperatorKind::Sink => "Sink",
            OperatorKind::TerminationCriterion => "Termination",
            OperatorKind::Dam => "Dam",
            OperatorKind::Cache => "Cache",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Local execution strategy of one operator instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalStrategy {
    /// Hash table built on input 0, input 1 probes.
    HashBuildLeft,
    /// Hash table built on input 1, input 0 probes.
    HashBuildRight,
    SortMerge,
    HashAggregate,
    SortGroup,
    /// Nested loops (Cross) or record-at-a-time streaming (Map, sinks).
    Pipeline,
}

impl LocalStrategy {
    pub fn name(self) -> &'static str {
        match self {
            LocalStrategy::HashBuildLeft => "hash-build-left",
            LocalStrategy::HashBuildRight => "hash-build-right",
            LocalStrategy::SortMerge => "sort-merge",
            LocalStrategy::HashAggregate => "hash-aggregate",
            LocalStrategy::SortGroup => "sort-group",
            LocalStrategy::Pipeline => "pipeline",
        }
    }

    /// Strategies that type-check for `kind`. The first entry is the default.
    pub fn candidates(kind: OperatorKind) -> &'static [LocalStrategy] {
        match kind {
            OperatorKind::Match | OperatorKind::InnerCoGroup => &[
                LocalStrategy::HashBuildLeft,
                LocalStrategy::HashBuildRight,
                LocalStrategy::SortMerge,
            ],
            OperatorKind::CoGroup => &[LocalStrategy::HashAggregate, LocalStrategy::SortMerge],
            OperatorKind::Reduce => &[LocalStrategy::HashAggregate, LocalStrategy::SortGroup],
            _ => &[LocalStrategy::Pipeline],
        }
    }

    pub fn default_for(kind: OperatorKind) -> LocalStrategy {
        LocalStrategy::candidates(kind)[0]
    }

    /// Index of the input this strategy fully materializes, if any.
    pub fn materialized_inputs(self, kind: OperatorKind) -> Vec<usize> {
        match (kind, self) {
            (_, LocalStrategy::HashBuildLeft) => vec![0],
            (_, LocalStrategy::HashBuildRight) => vec![1],
            (OperatorKind::Reduce, LocalStrategy::HashAggregate | LocalStrategy::SortGroup) => vec![0],
            (
                OperatorKind::CoGroup | OperatorKind::InnerCoGroup | OperatorKind::Match,
                LocalStrategy::SortMerge | LocalStrategy::HashAggregate,
            ) => vec![0, 1],
            (OperatorKind::Dam | OperatorKind::Cache, _) => vec![0],
            _ => vec![],
        }
    }
}

impl fmt::Display for LocalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn udf_failure(operator: &str, record: &Record, source: crate::error::UdfError) -> EngineError {
    EngineError::UdfFailure {
        operator: operator.to_string(),
        record: record.clone(),
        source,
    }
}

pub fn apply_map(input: &[Record], udf: &MapFn, operator: &str) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    for r in input {
        udf(r, &mut out).map_err(|e| udf_failure(operator, r, e))?;
    }
    Ok(out.into_records())
}

/// Groups `input` by `key`, preserving first-seen group order and record order
/// within each group.
pub fn hash_group<'a>(input: &'a [Record], key: &KeySpec) -> Result<IndexMap<Key, Vec<&'a Record>>> {
    let mut groups: IndexMap<Key, Vec<&Record>> = IndexMap::new();
    for r in input {
        groups.entry(extract_key(r, key)?).or_default().push(r);
    }
    Ok(groups)
}

/// Groups by key in ascending key order. The sort is stable.
pub fn sort_group<'a>(input: &'a [Record], key: &KeySpec) -> Result<Vec<(Key, Vec<&'a Record>)>> {
    let mut keyed = input
        .iter()
        .map(|r| Ok((extract_key(r, key)?, r)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut groups: Vec<(Key, Vec<&Record>)> = Vec::new();
    for (k, r) in keyed {
        match groups.last_mut() {
            Some((last, members)) if *last == k => members.push(r),
            _ => groups.push((k, vec![r])),
        }
    }
    Ok(groups)
}

fn owned(group: &[&Record]) -> Vec<Record> {
    group.iter().map(|r| (*r).clone()).collect()
}

pub fn apply_reduce(
    input: &[Record],
    key: &KeySpec,
    udf: &ReduceFn,
    strategy: LocalStrategy,
    operator: &str,
) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    let mut call = |group: &[&Record]| -> Result<()> {
        let g = owned(group);
        udf(&g, &mut out).map_err(|e| udf_failure(operator, &g[0], e))
    };
    match strategy {
        LocalStrategy::SortGroup => {
            for (_, g) in sort_group(input, key)? {
                call(&g)?;
            }
        }
        _ => {
            for (_, g) in hash_group(input, key)? {
                call(&g)?;
            }
        }
    }
    Ok(out.into_records())
}

/// Hash table over one join input. Duplicate keys are chained in insertion
/// order.
#[derive(Debug, Default, Clone)]
pub struct JoinTable {
    map: HashMap<Key, Vec<Record>>,
    len: usize,
}

impl JoinTable {
    pub fn build(records: impl IntoIterator<Item = Record>, key: &KeySpec) -> Result<Self> {
        let mut t = JoinTable::default();
        for r in records {
            t.insert(extract_key(&r, key)?, r);
        }
        Ok(t)
    }

    pub fn insert(&mut self, key: Key, record: Record) {
        self.map.entry(key).or_default().push(record);
        self.len += 1;
    }

    pub fn get(&self, key: &Key) -> &[Record] {
        self.map.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Joins `probe` records against a prebuilt table. `table_is_left` decides
/// the argument order handed to the UDF.
pub fn probe_join(
    table: &JoinTable,
    probe: &[Record],
    probe_key: &KeySpec,
    table_is_left: bool,
    udf: &PairFn,
    operator: &str,
) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    for p in probe {
        let k = extract_key(p, probe_key)?;
        for b in table.get(&k) {
            let res = if table_is_left { udf(b, p, &mut out) } else { udf(p, b, &mut out) };
            res.map_err(|e| udf_failure(operator, p, e))?;
        }
    }
    Ok(out.into_records())
}

/// Merge-joins two inputs already sorted by their keys.
pub fn merge_join_sorted(
    left: &[(Key, Record)],
    right: &[(Key, Record)],
    udf: &PairFn,
    operator: &str,
) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        match left[i].0.cmp(&right[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let k = &left[i].0;
                let i_end = i + left[i..].iter().take_while(|(lk, _)| lk == k).count();
                let j_end = j + right[j..].iter().take_while(|(rk, _)| rk == k).count();
                for (_, l) in &left[i..i_end] {
                    for (_, r) in &right[j..j_end] {
                        udf(l, r, &mut out).map_err(|e| udf_failure(operator, l, e))?;
                    }
                }
                i = i_end;
                j = j_end;
            }
        }
    }
    Ok(out.into_records())
}

/// Pairs each record with its key and stably sorts by key.
pub fn sort_by_key(records: &[Record], key: &KeySpec) -> Result<Vec<(Key, Record)>> {
    let mut v = records
        .iter()
        .map(|r| Ok((extract_key(r, key)?, r.clone())))
        .collect::<Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(v)
}

pub fn apply_match(
    left: &[Record],
    right: &[Record],
    key_left: &KeySpec,
    key_right: &KeySpec,
    udf: &PairFn,
    strategy: LocalStrategy,
    operator: &str,
) -> Result<Vec<Record>> {
    match strategy {
        LocalStrategy::HashBuildRight => {
            let table = JoinTable::build(right.iter().cloned(), key_right)?;
            probe_join(&table, left, key_left, false, udf, operator)
        }
        LocalStrategy::SortMerge => {
            let l = sort_by_key(left, key_left)?;
            let r = sort_by_key(right, key_right)?;
            merge_join_sorted(&l, &r, udf, operator)
        }
        _ => {
            let table = JoinTable::build(left.iter().cloned(), key_left)?;
            probe_join(&table, right, key_right, true, udf, operator)
        }
    }
}

pub fn apply_cross(left: &[Record], right: &[Record], udf: &PairFn, operator: &str) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    for l in left {
        for r in right {
            udf(l, r, &mut out).map_err(|e| udf_failure(operator, l, e))?;
        }
    }
    Ok(out.into_records())
}

/// Shared implementation of CoGroup and InnerCoGroup. `inner` drops keys that
/// are missing on either side.
#[allow(clippy::too_many_arguments)]
pub fn apply_cogroup(
    left: &[Record],
    right: &[Record],
    key_left: &KeySpec,
    key_right: &KeySpec,
    udf: &CoGroupFn,
    strategy: LocalStrategy,
    inner: bool,
    operator: &str,
) -> Result<Vec<Record>> {
    let mut out = Collector::new();
    let mut call = |l: &[&Record], r: &[&Record]| -> Result<()> {
        if inner && (l.is_empty() || r.is_empty()) {
            return Ok(());
        }
        let (lo, ro) = (owned(l), owned(r));
        udf(&lo, &ro, &mut out).map_err(|e| {
            let first = lo.first().or(ro.first()).cloned().unwrap_or_else(|| Record(Vec::new()));
            udf_failure(operator, &first, e)
        })
    };
    if strategy == LocalStrategy::SortMerge {
        let lg = sort_group(left, key_left)?;
        let rg = sort_group(right, key_right)?;
        let (mut i, mut j) = (0, 0);
        while i < lg.len() || j < rg.len() {
            let ord = match (lg.get(i), rg.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    call(&lg[i].1, &[])?;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    call(&[], &rg[j].1)?;
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    call(&lg[i].1, &rg[j].1)?;
                    i += 1;
                    j += 1;
                }
            }
        }
    } else {
        let lg = hash_group(left, key_left)?;
        let rg = hash_group(right, key_right)?;
        for (k, rs) in &rg {
            let ls = lg.get(k).map(Vec::as_slice).unwrap_or(&[]);
            call(ls, rs)?;
        }
        for (k, ls) in &lg {
            if !rg.contains_key(k) {
                call(ls, &[])?;
            }
        }
    }
    Ok(out.into_records())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::UdfError;
    use crate::rec;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn pair_concat() -> PairFn {
        Arc::new(|l, r, out| {
            let mut f = l.0.clone();
            f.extend(r.0.iter().cloned());
            out.emit(Record(f));
            Ok(())
        })
    }

    fn sorted(mut v: Vec<Record>) -> Vec<Record> {
        v.sort();
        v
    }

    #[test]
    fn map_doubles() {
        let f: MapFn = Arc::new(|r, out| {
            out.emit(rec![r.int(0).unwrap() * 2]);
            Ok(())
        });
        let out = apply_map(&[rec![1i64], rec![2i64], rec![3i64]], &f, "m").unwrap();
        assert_eq!(sorted(out), vec![rec![2i64], rec![4i64], rec![6i64]]);
        assert!(apply_map(&[], &f, "m").unwrap().is_empty());
    }

    #[test]
    fn map_multi_emit() {
        let f: MapFn = Arc::new(|r, out| {
            out.emit(r.clone());
            out.emit(r.clone());
            Ok(())
        });
        assert_eq!(apply_map(&[rec![1i64]], &f, "m").unwrap(), vec![rec![1i64], rec![1i64]]);
    }

    #[test]
    fn map_failure_carries_record() {
        let f: MapFn = Arc::new(|r, _| {
            if r.int(0) == Some(2) {
                Err(UdfError::new("boom"))
            } else {
                Ok(())
            }
        });
        match apply_map(&[rec![1i64], rec![2i64]], &f, "bad") {
            Err(EngineError::UdfFailure { operator, record, .. }) => {
                assert_eq!(operator, "bad");
                assert_eq!(record, rec![2i64]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn sum_field1() -> ReduceFn {
        Arc::new(|g, out| {
            let s: i64 = g.iter().map(|r| r.int(1).unwrap()).sum();
            out.emit(rec![g[0].int(0).unwrap(), s]);
            Ok(())
        })
    }

    #[test]
    fn reduce_sums_per_key_both_strategies() {
        let input = [rec![1i64, 2i64], rec![1i64, 3i64], rec![2i64, 5i64]];
        for s in [LocalStrategy::HashAggregate, LocalStrategy::SortGroup] {
            let out = apply_reduce(&input, &KeySpec::single(0), &sum_field1(), s, "r").unwrap();
            assert_eq!(sorted(out), vec![rec![1i64, 5i64], rec![2i64, 5i64]]);
        }
    }

    #[test]
    fn reduce_singleton_group() {
        let sizes: ReduceFn = Arc::new(|g, out| {
            out.emit(rec![g.len() as i64]);
            Ok(())
        });
        let out = apply_reduce(&[rec![9i64]], &KeySpec::single(0), &sizes, LocalStrategy::HashAggregate, "r").unwrap();
        assert_eq!(out, vec![rec![1i64]]);
    }

    #[test]
    fn match_equi_join() {
        let l = [rec![1i64, "a"]];
        let r = [rec![1i64, "x"], rec![2i64, "y"]];
        for s in LocalStrategy::candidates(OperatorKind::Match) {
            let out = apply_match(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &pair_concat(), *s, "j").unwrap();
            assert_eq!(out, vec![rec![1i64, "a", 1i64, "x"]]);
        }
    }

    #[test]
    fn match_bag_semantics() {
        let l = [rec![1i64], rec![1i64]];
        let r = [rec![1i64]];
        for s in LocalStrategy::candidates(OperatorKind::Match) {
            let out = apply_match(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &pair_concat(), *s, "j").unwrap();
            assert_eq!(out.len(), 2);
        }
    }

    #[test]
    fn match_probe_emits_in_build_insertion_order() {
        let l = [rec![1i64, 1i64], rec![1i64, 2i64], rec![1i64, 3i64]];
        let r = [rec![1i64, 0i64]];
        let out = apply_match(
            &l,
            &r,
            &KeySpec::single(0),
            &KeySpec::single(0),
            &pair_concat(),
            LocalStrategy::HashBuildLeft,
            "j",
        )
        .unwrap();
        let seconds: Vec<i64> = out.iter().map(|x| x.int(1).unwrap()).collect();
        assert_eq!(seconds, vec![1, 2, 3]);
    }

    #[test]
    fn cross_products() {
        let l = [rec![1i64], rec![2i64]];
        let r = [rec![3i64], rec![4i64], rec![5i64]];
        assert_eq!(apply_cross(&l, &r, &pair_concat(), "x").unwrap().len(), 6);
        assert!(apply_cross(&[], &r, &pair_concat(), "x").unwrap().is_empty());
        assert_eq!(apply_cross(&[rec![1i64]], &[rec![2i64]], &pair_concat(), "x").unwrap(), vec![rec![1i64, 2i64]]);
    }

    fn group_sizes() -> CoGroupFn {
        Arc::new(|l, r, out| {
            let k = l.first().or(r.first()).unwrap().0[0].clone();
            out.emit(Record(vec![k, (l.len() as i64).into(), (r.len() as i64).into()]));
            Ok(())
        })
    }

    #[test]
    fn cogroup_outer_semantics() {
        let l = [rec![1i64, "a"]];
        let r = [rec![2i64, "b"]];
        for s in LocalStrategy::candidates(OperatorKind::CoGroup) {
            let out = apply_cogroup(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), *s, false, "c").unwrap();
            assert_eq!(sorted(out), vec![rec![1i64, 1i64, 0i64], rec![2i64, 0i64, 1i64]]);
            let out = apply_cogroup(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), *s, true, "c").unwrap();
            assert!(out.is_empty());
        }
    }

    #[test]
    fn cogroup_shared_key_and_empty() {
        let l = [rec![1i64, "a"]];
        let r = [rec![1i64, "x"], rec![1i64, "y"]];
        for inner in [false, true] {
            let out = apply_cogroup(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), LocalStrategy::HashAggregate, inner, "c").unwrap();
            assert_eq!(out, vec![rec![1i64, 1i64, 2i64]]);
            let out = apply_cogroup(&[], &[], &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), LocalStrategy::SortMerge, inner, "c").unwrap();
            assert!(out.is_empty());
        }
    }

    fn small_bag() -> impl Strategy<Value = Vec<Record>> {
        prop::collection::vec((0i64..5, 0i64..100).prop_map(|(k, v)| rec![k, v]), 0..12)
    }

    proptest! {
        #[test]
        fn cross_invocations_is_product(l in small_bag(), r in small_bag()) {
            let out = apply_cross(&l, &r, &pair_concat(), "x").unwrap();
            prop_assert_eq!(out.len(), l.len() * r.len());
        }

        #[test]
        fn match_equals_nested_loop(l in small_bag(), r in small_bag()) {
            let mut expected = Vec::new();
            for a in &l {
                for b in &r {
                    if a.0[0] == b.0[0] {
                        let mut f = a.0.clone();
                        f.extend(b.0.iter().cloned());
                        expected.push(Record(f));
                    }
                }
            }
            expected.sort();
            for s in LocalStrategy::candidates(OperatorKind::Match) {
                let out = apply_match(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &pair_concat(), *s, "j").unwrap();
                prop_assert_eq!(sorted(out), expected.clone());
            }
        }

        #[test]
        fn inner_cogroup_keys_are_intersection(l in small_bag(), r in small_bag()) {
            let keys = |v: Vec<Record>| v.into_iter().map(|x| x.0[0].clone()).collect::<std::collections::BTreeSet<_>>();
            let outer = apply_cogroup(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), LocalStrategy::HashAggregate, false, "c").unwrap();
            let inner = apply_cogroup(&l, &r, &KeySpec::single(0), &KeySpec::single(0), &group_sizes(), LocalStrategy::SortMerge, true, "c").unwrap();
            let lk = keys(l.clone());
            let rk = keys(r.clone());
            let expected: std::collections::BTreeSet<_> = keys(outer).into_iter().filter(|k| lk.contains(k) && rk.contains(k)).collect();
            prop_assert_eq!(keys(inner), expected);
        }

        #[test]
        fn groups_invoked_once_per_key(l in small_bag()) {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            let f: ReduceFn = Arc::new(|g, out| { out.emit(rec![g[0].int(0).unwrap()]); Ok(()) });
            for s in [LocalStrategy::HashAggregate, LocalStrategy::SortGroup] {
                counts.clear();
                for r in apply_reduce(&l, &KeySpec::single(0), &f, s, "r").unwrap() {
                    *counts.entry(r.int(0).unwrap()).or_default() += 1;
                }
                prop_assert!(counts.values().all(|&c| c == 1));
            }
        }
    }
}
