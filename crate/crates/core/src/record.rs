//! Records, values, key projection and hash partitioning.
//!
//! Datasets are untyped bags of [`Record`]s. Arity is checked when a plan is
//! validated instead of through schemas. Keys are projections of a record's
//! fields described by a [`KeySpec`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// A single field value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(Arc<str>),
    Bool(bool),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Text(_) => 2,
            Value::Bool(_) => 3,
        }
    }

    // -0.0 and 0.0 compare equal, so they must hash identically.
    fn float_bits(v: f64) -> u64 {
        if v == 0.0 {
            0u64
        } else {
            v.to_bits()
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => {
                if *a == 0.0 && *b == 0.0 {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u8(self.rank());
        match self {
            Value::Int(v) => v.hash(state),
            Value::Float(v) => Value::float_bits(*v).hash(state),
            Value::Text(s) => s.hash(state),
            Value::Bool(b) => b.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(Arc::from(v))
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

/// An ordered tuple of values.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Record(pub Vec<Value>);

impl Record {
    pub fn new(fields: Vec<Value>) -> Self {
        Record(fields)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn field(&self, i: usize) -> Option<&Value> {
        self.0.get(i)
    }

    pub fn fields(&self) -> &[Value] {
        &self.0
    }

    /// Integer field accessor for UDFs over integer records.
    pub fn int(&self, i: usize) -> Option<i64> {
        self.0.get(i).and_then(Value::as_int)
    }

    pub fn float(&self, i: usize) -> Option<f64> {
        self.0.get(i).and_then(Value::as_float)
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Builds a record from a list of values convertible into [`Value`].
#[macro_export]
macro_rules! rec {
    ($($v:expr),* $(,)?) => {
        $crate::record::Record::new(vec![$($crate::record::Value::from($v)),*])
    };
}

/// Projected key fields of a record.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(pub Vec<Value>);

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Record(self.0.clone()).fmt(f)
    }
}

/// Ordered list of field indices forming a key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct KeySpec(pub Vec<usize>);

impl KeySpec {
    pub fn new(fields: impl Into<Vec<usize>>) -> Self {
        KeySpec(fields.into())
    }

    pub fn single(field: usize) -> Self {
        KeySpec(vec![field])
    }

    pub fn fields(&self) -> &[usize] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True if every index is below `arity`.
    pub fn valid_for(&self, arity: usize) -> bool {
        self.0.iter().all(|&i| i < arity)
    }
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// Projects the fields named by `spec` out of `record`, in `spec` order.
pub fn extract_key(record: &Record, spec: &KeySpec) -> Result<Key> {
    let mut out = Vec::with_capacity(spec.0.len());
    for &i in &spec.0 {
        match record.0.get(i) {
            Some(Value::Float(f)) if f.is_nan() => return Err(EngineError::NanKey { index: i }),
            Some(v) => out.push(v.clone()),
            None => {
                return Err(EngineError::IndexOutOfRange {
                    index: i,
                    arity: record.arity(),
                })
            }
        }
    }
    Ok(Key(out))
}

/// Stable 64-bit hash of a key. Fixed per build.
pub fn key_hash(key: &Key) -> u64 {
    // DefaultHasher::new() uses fixed zero keys, unlike RandomState.
    let mut h = std::collections::hash_map::DefaultHasher::new();
    key.hash(&mut h);
    h.finish()
}

/// Maps a key onto one of `parallelism` partitions.
pub fn partition_of(key: &Key, parallelism: usize) -> usize {
    debug_assert!(parallelism >= 1);
    if parallelism <= 1 {
        return 0;
    }
    (key_hash(key) % parallelism as u64) as usize
}

/// Engine-wide execution settings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    parallelism: usize,
    /// Abstract per-worker record budget for constant-path caches.
    pub memory_budget: usize,
    /// Hard cap on supersteps.
    pub max_iterations: u64,
}

pub const DEFAULT_ITERATION_CAP: u64 = 10_000;

impl EngineConfig {
    pub fn new(parallelism: usize) -> Result<Self> {
        if parallelism == 0 {
            return Err(EngineError::InvalidConfig("parallelism must be at least 1".into()));
        }
        Ok(EngineConfig {
            parallelism,
            memory_budget: usize::MAX,
            max_iterations: DEFAULT_ITERATION_CAP,
        })
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn with_memory_budget(mut self, budget: usize) -> Self {
        self.memory_budget = budget;
        self
    }

    pub fn with_max_iterations(mut self, cap: u64) -> Self {
        self.max_iterations = cap;
        self
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::new(1).expect("parallelism 1 is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extract_single_field() {
        let r = rec![7i64, 42i64, "x"];
        assert_eq!(extract_key(&r, &KeySpec::single(0)).unwrap(), Key(vec![Value::Int(7)]));
    }

    #[test]
    fn extract_preserves_spec_order() {
        let r = rec![7i64, 42i64, "x"];
        let k = extract_key(&r, &KeySpec::new([2, 0])).unwrap();
        assert_eq!(k, Key(vec![Value::from("x"), Value::Int(7)]));
    }

    #[test]
    fn extract_out_of_range() {
        let r = rec![7i64, 42i64];
        assert!(matches!(
            extract_key(&r, &KeySpec::single(5)),
            Err(EngineError::IndexOutOfRange { index: 5, arity: 2 })
        ));
    }

    #[test]
    fn nan_keys_rejected() {
        let r = rec![f64::NAN, 1i64];
        assert!(matches!(extract_key(&r, &KeySpec::single(0)), Err(EngineError::NanKey { .. })));
        // non-key NaN fields are fine
        assert!(extract_key(&r, &KeySpec::single(1)).is_ok());
    }

    #[test]
    fn single_partition_is_zero() {
        for v in [-3i64, 0, 7, i64::MAX] {
            assert_eq!(partition_of(&Key(vec![Value::Int(v)]), 1), 0);
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let k = Key(vec![Value::Int(7)]);
        let first = partition_of(&k, 4);
        for _ in 0..100 {
            assert_eq!(partition_of(&k, 4), first);
        }
    }

    #[test]
    fn partition_spread_of_random_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let k = Key(vec![Value::Int(rng.gen())]);
            counts[partition_of(&k, 4)] += 1;
        }
        for c in counts {
            assert!((1500..=3500).contains(&c), "partition count {c} outside 15%..35%");
        }
    }

    #[test]
    fn signed_zero_keys_agree() {
        let a = Key(vec![Value::Float(0.0)]);
        let b = Key(vec![Value::Float(-0.0)]);
        assert_eq!(a, b);
        assert_eq!(key_hash(&a), key_hash(&b));
    }

    #[test]
    fn zero_parallelism_rejected() {
        assert!(EngineConfig::new(0).is_err());
    }
}
