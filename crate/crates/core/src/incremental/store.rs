//! Keyed, partitioned solution set with the delta merge.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{EngineError, Result};
use crate::plan::SolutionComparator;
use crate::record::{extract_key, partition_of, Key, KeySpec, Record};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IndexKind {
    #[default]
    Hash,
    Sorted,
}

#[derive(Debug)]
enum Index {
    Hash(HashMap<Key, Record>),
    Sorted(BTreeMap<Key, Record>),
}

/// What to do with several delta records for one key when no comparator
/// decides between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Strict,
    /// Keep the first record merged and count a warning for each later one.
    Permissive,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeOutcome {
    /// Delta records that changed the solution, in merge order.
    pub applied: Vec<Record>,
    /// The record each applied delta replaced, parallel to `applied`.
    pub previous: Vec<Option<Record>>,
    pub warnings: u64,
}

/// One worker's share of the solution set: exactly one record per key.
#[derive(Debug)]
pub struct SolutionPartition {
    key: KeySpec,
    index: Index,
    merged_in: HashMap<Key, u64>,
    superstep: u64,
    check_isolation: bool,
    isolation_violations: Cell<u64>,
}

impl SolutionPartition {
    pub fn new(key: KeySpec, kind: IndexKind) -> Self {
        SolutionPartition {
            key,
            index: match kind {
                IndexKind::Hash => Index::Hash(HashMap::new()),
                IndexKind::Sorted => Index::Sorted(BTreeMap::new()),
            },
            merged_in: HashMap::new(),
            superstep: 0,
            check_isolation: false,
            isolation_violations: Cell::new(0),
        }
    }

    pub fn key_spec(&self) -> &KeySpec {
        &self.key
    }

    pub fn len(&self) -> usize {
        match &self.index {
            Index::Hash(m) => m.len(),
            Index::Sorted(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &Key) -> Option<&Record> {
        if self.check_isolation && self.merged_in.get(key) == Some(&self.superstep) {
            self.isolation_violations.set(self.isolation_violations.get() + 1);
        }
        match &self.index {
            Index::Hash(m) => m.get(key),
            Index::Sorted(m) => m.get(key),
        }
    }

    fn put(&mut self, key: Key, record: Record) -> Option<Record> {
        self.merged_in.insert(key.clone(), self.superstep);
        match &mut self.index {
            Index::Hash(m) => m.insert(key, record),
            Index::Sorted(m) => m.insert(key, record),
        }
    }

    /// Inserts or replaces without merge semantics; used to load S0.
    pub fn insert(&mut self, record: Record) -> Result<()> {
        let k = extract_key(&record, &self.key)?;
        self.put(k, record);
        Ok(())
    }

    /// Starts superstep `i`. With `isolate`, reads of keys merged during `i`
    /// are counted as isolation violations.
    pub fn begin_superstep(&mut self, i: u64, isolate: bool) {
        self.superstep = i;
        self.check_isolation = isolate;
    }

    /// Reads that observed a record merged in the current superstep.
    pub fn isolation_violations(&self) -> u64 {
        self.isolation_violations.get()
    }

    /// All stored records, ordered by key.
    pub fn records(&self) -> Vec<Record> {
        match &self.index {
            Index::Sorted(m) => m.values().cloned().collect(),
            Index::Hash(m) => {
                let mut v: Vec<(&Key, &Record)> = m.iter().collect();
                v.sort_by(|a, b| a.0.cmp(b.0));
                v.into_iter().map(|(_, r)| r.clone()).collect()
            }
        }
    }

    /// Merges `delta` into this partition (the ∪̇ operation).
    pub fn merge_delta(&mut self, delta: Vec<Record>, cmp: Option<&SolutionComparator>, policy: DuplicatePolicy) -> Result<MergeOutcome> {
        let keyed = delta
            .into_iter()
            .map(|d| Ok((extract_key(&d, &self.key)?, d)))
            .collect::<Result<Vec<_>>>()?;
        if cmp.is_none() && policy == DuplicatePolicy::Strict {
            let mut seen = HashSet::new();
            for (k, _) in &keyed {
                if !seen.insert(k) {
                    return Err(EngineError::DuplicateDeltaKey { key: k.clone() });
                }
            }
        }
        let mut out = MergeOutcome::default();
        let mut seen = HashSet::new();
        for (k, d) in keyed {
            if cmp.is_none() && !seen.insert(k.clone()) {
                out.warnings += 1;
                continue;
            }
            let existing = match &self.index {
                Index::Hash(m) => m.get(&k),
                Index::Sorted(m) => m.get(&k),
            };
            let wins = match (existing, cmp) {
                (None, _) | (Some(_), None) => true,
                (Some(old), Some(c)) => c(old, &d) == Ordering::Less,
            };
            if wins {
                let prev = self.put(k, d.clone());
                out.applied.push(d);
                out.previous.push(prev);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`SolutionPartition::merge_delta`].
pub fn merge_delta(
    partition: &mut SolutionPartition,
    delta: Vec<Record>,
    cmp: Option<&SolutionComparator>,
    policy: DuplicatePolicy,
) -> Result<MergeOutcome> {
    partition.merge_delta(delta, cmp, policy)
}

/// The solution set split over `P` partitions by `partition_of(key)`.
#[derive(Debug)]
pub struct SolutionStore {
    partitions: Vec<SolutionPartition>,
}

impl SolutionStore {
    pub fn new(parallelism: usize, key: KeySpec, kind: IndexKind) -> Self {
        SolutionStore {
            partitions: (0..parallelism.max(1)).map(|_| SolutionPartition::new(key.clone(), kind)).collect(),
        }
    }

    pub fn parallelism(&self) -> usize {
        self.partitions.len()
    }

    /// Routes every record to the partition owning its key.
    pub fn load(&mut self, records: impl IntoIterator<Item = Record>) -> Result<()> {
        let p = self.partitions.len();
        for r in records {
            let k = extract_key(&r, self.partitions[0].key_spec())?;
            self.partitions[partition_of(&k, p)].insert(r)?;
        }
        Ok(())
    }

    pub fn owner(&self, record: &Record) -> Result<usize> {
        let k = extract_key(record, self.partitions[0].key_spec())?;
        Ok(partition_of(&k, self.partitions.len()))
    }

    pub fn partition(&self, i: usize) -> &SolutionPartition {
        &self.partitions[i]
    }

    pub fn partition_mut(&mut self, i: usize) -> &mut SolutionPartition {
        &mut self.partitions[i]
    }

    pub fn into_partitions(self) -> Vec<SolutionPartition> {
        self.partitions
    }

    pub fn from_partitions(partitions: Vec<SolutionPartition>) -> Self {
        SolutionStore { partitions }
    }

    /// All records, ordered by key.
    pub fn records(&self) -> Vec<Record> {
        let mut v: Vec<Record> = self.partitions.iter().flat_map(|p| p.records()).collect();
        let key = self.partitions[0].key_spec().clone();
        v.sort_by_cached_key(|r| extract_key(r, &key).ok());
        v
    }
}
