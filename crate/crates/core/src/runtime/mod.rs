//! Parallel execution support shared by the iteration drivers.

pub mod cache;
pub(crate) mod exchange;
pub(crate) mod step;

use std::collections::HashMap;

use crate::error::EngineError;
use crate::record::Record;

pub use cache::{build_constant_cache, CacheData, ConstantCache};

/// Counters for one superstep (or one probe interval in asynchronous mode).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuperstepMetrics {
    pub iteration: u64,
    /// Records entering the step: |I| for bulk, |W_i| for incremental.
    pub workset_size: u64,
    /// Partial-solution records read (bulk) or distinct solution keys probed.
    pub solution_reads: u64,
    /// Records produced on O (bulk) or distinct solution keys modified
    /// (incremental).
    pub solution_updates: u64,
    /// Per-destination sends over partitioned or broadcast channels.
    pub records_shipped: u64,
    /// Records into T (bulk) or |W_{i+1}| (incremental).
    pub t_changes: u64,
    pub elapsed_ms: f64,
}

impl SuperstepMetrics {
    pub const CSV_HEADER: &'static str =
        "iteration,workset_size,solution_reads,solution_updates,records_shipped,t_changes,elapsed_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.iteration,
            self.workset_size,
            self.solution_reads,
            self.solution_updates,
            self.records_shipped,
            self.t_changes,
            self.elapsed_ms
        )
    }

    /// The deterministic counters, without wall time.
    pub fn counters(&self) -> [u64; 6] {
        [
            self.iteration,
            self.workset_size,
            self.solution_reads,
            self.solution_updates,
            self.records_shipped,
            self.t_changes,
        ]
    }
}

/// Splits `records` into `p` contiguous chunks of near-equal size.
pub fn split_evenly(records: &[Record], p: usize) -> Vec<Vec<Record>> {
    let n = records.len();
    (0..p).map(|w| records[w * n / p..(w + 1) * n / p].to_vec()).collect()
}

/// Local share of every named dataset for each of `p` workers.
pub(crate) fn distribute(sources: &HashMap<String, Vec<Record>>, p: usize) -> Vec<HashMap<String, Vec<Record>>> {
    let mut out = vec![HashMap::new(); p];
    for (name, recs) in sources {
        for (w, part) in split_evenly(recs, p).into_iter().enumerate() {
            out[w].insert(name.clone(), part);
        }
    }
    out
}

/// Picks the error to report when several workers failed: the root cause
/// rather than the aborts it triggered.
pub(crate) fn first_cause(errors: Vec<EngineError>) -> EngineError {
    let mut fallback = None;
    for e in errors {
        if matches!(e, EngineError::Aborted) {
            fallback.get_or_insert(e);
        } else {
            return e;
        }
    }
    fallback.unwrap_or(EngineError::Aborted)
}

pub(crate) fn panic_message(p: Box<dyn std::any::Any + Send>) -> EngineError {
    let msg = p
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    EngineError::WorkerPanic(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rec;

    #[test]
    fn split_covers_all_records_in_order() {
        let recs: Vec<Record> = (0..10i64).map(|i| rec![i]).collect();
        let parts = split_evenly(&recs, 3);
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 4]);
        assert_eq!(parts.concat(), recs);
    }

    #[test]
    fn csv_row_matches_header_width() {
        let m = SuperstepMetrics::default();
        assert_eq!(m.csv_row().split(',').count(), SuperstepMetrics::CSV_HEADER.split(',').count());
    }
}
