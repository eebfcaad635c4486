//! Constant-path caches kept at meet points across supersteps.

use std::borrow::Cow;
use std::io::{BufReader, BufWriter, Seek, SeekFrom};

use tempfile::NamedTempFile;

use crate::error::{EngineError, Result};
use crate::operators::{sort_by_key, JoinTable};
use crate::physical::CacheStructure;
use crate::record::{Key, Record};

/// Cached records plus the structure the consuming operator reads.
#[derive(Clone, Debug)]
pub struct CacheData {
    pub records: Vec<Record>,
    pub table: Option<JoinTable>,
    pub sorted: Option<Vec<(Key, Record)>>,
}

impl CacheData {
    fn build(structure: &CacheStructure, records: Vec<Record>) -> Result<Self> {
        let (table, sorted) = match structure {
            CacheStructure::Unordered => (None, None),
            CacheStructure::HashTable(k) => (Some(JoinTable::build(records.iter().cloned(), k)?), None),
            CacheStructure::SortedRun(k) => (None, Some(sort_by_key(&records, k)?)),
        };
        Ok(CacheData { records, table, sorted })
    }
}

#[derive(Debug)]
enum Storage {
    Memory(CacheData),
    Spilled { file: NamedTempFile, len: usize },
}

/// Result of the constant path at one meet point, built once and read in
/// every superstep.
#[derive(Debug)]
pub struct ConstantCache {
    pub structure: CacheStructure,
    storage: Storage,
}

impl ConstantCache {
    pub fn is_spilled(&self) -> bool {
        matches!(self.storage, Storage::Spilled { .. })
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Memory(d) => d.records.len(),
            Storage::Spilled { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The cached data, read back from disk if the cache was spilled.
    pub fn load(&self) -> Result<Cow<'_, CacheData>> {
        match &self.storage {
            Storage::Memory(d) => Ok(Cow::Borrowed(d)),
            Storage::Spilled { file, .. } => {
                let mut f = file.reopen()?;
                f.seek(SeekFrom::Start(0))?;
                let records: Vec<Record> =
                    bincode::deserialize_from(BufReader::new(f)).map_err(|e| EngineError::Spill(e.to_string()))?;
                Ok(Cow::Owned(CacheData::build(&self.structure, records)?))
            }
        }
    }
}

/// Builds the cache for a meet point. Records beyond the remaining
/// `budget` are written to a temporary on-disk run instead of being held in
/// memory; the budget is reduced by what stays in memory.
pub fn build_constant_cache(structure: &CacheStructure, records: Vec<Record>, budget: &mut usize) -> Result<ConstantCache> {
    let storage = if records.len() > *budget {
        let len = records.len();
        let mut file = NamedTempFile::new()?;
        {
            let mut w = BufWriter::new(file.as_file_mut());
            bincode::serialize_into(&mut w, &records).map_err(|e| EngineError::Spill(e.to_string()))?;
        }
        Storage::Spilled { file, len }
    } else {
        *budget -= records.len();
        Storage::Memory(CacheData::build(structure, records)?)
    };
    Ok(ConstantCache {
        structure: structure.clone(),
        storage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rec;
    use crate::record::{KeySpec, Value};

    fn rows() -> Vec<Record> {
        vec![rec![3i64, 0.5], rec![1i64, 0.25], rec![3i64, 0.125]]
    }

    #[test]
    fn hash_table_keyed_by_consumer_key() {
        let mut budget = usize::MAX;
        let c = build_constant_cache(&CacheStructure::HashTable(KeySpec::single(0)), rows(), &mut budget).unwrap();
        let d = c.load().unwrap();
        assert_eq!(d.table.as_ref().unwrap().get(&Key(vec![Value::Int(3)])).len(), 2);
        assert!(!c.is_spilled());
    }

    #[test]
    fn sorted_run_is_ordered() {
        let mut budget = usize::MAX;
        let c = build_constant_cache(&CacheStructure::SortedRun(KeySpec::single(0)), rows(), &mut budget).unwrap();
        let d = c.load().unwrap();
        let keys: Vec<i64> = d.sorted.as_ref().unwrap().iter().map(|(_, r)| r.int(0).unwrap()).collect();
        assert_eq!(keys, vec![1, 3, 3]);
    }

    #[test]
    fn spilled_cache_reads_back_identically() {
        let mut budget = 2;
        let c = build_constant_cache(&CacheStructure::SortedRun(KeySpec::single(0)), rows(), &mut budget).unwrap();
        assert!(c.is_spilled());
        assert_eq!(budget, 2);
        let d = c.load().unwrap();
        assert_eq!(d.records, rows());
        assert_eq!(d.sorted.as_ref().unwrap().len(), 3);
    }
}
