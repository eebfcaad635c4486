//! Double-buffered workset queues for superstep execution.

use std::sync::Mutex;

use crate::record::Record;

/// One partition's workset. Records added during superstep `i` land in the
/// next buffer (one slot per producer) and are served only in `i + 1`.
#[derive(Debug, Default)]
pub struct WorksetQueue {
    current: Vec<Record>,
    next: Vec<Vec<Record>>,
}

impl WorksetQueue {
    pub fn new(producers: usize) -> Self {
        WorksetQueue {
            current: Vec::new(),
            next: vec![Vec::new(); producers],
        }
    }

    pub fn push(&mut self, producer: usize, records: impl IntoIterator<Item = Record>) {
        self.next[producer].extend(records);
    }

    /// Hands out the current buffer, leaving it empty.
    pub fn take_current(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.current)
    }

    pub fn current_len(&self) -> usize {
        self.current.len()
    }

    pub fn next_len(&self) -> usize {
        self.next.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Advance {
    Continue { workset_size: usize },
    Terminate,
}

/// Switches every queue's next buffer to current, or signals termination
/// when all next buffers are empty. Producer slots are concatenated in
/// producer order.
pub fn advance_superstep(queues: &[Mutex<WorksetQueue>]) -> Advance {
    let mut guards: Vec<_> = queues.iter().map(|q| q.lock().unwrap_or_else(|e| e.into_inner())).collect();
    let total: usize = guards.iter().map(|q| q.next_len()).sum();
    if total == 0 {
        return Advance::Terminate;
    }
    for q in guards.iter_mut() {
        let next: Vec<Record> = q.next.iter_mut().flat_map(std::mem::take).collect();
        q.current = next;
    }
    Advance::Continue { workset_size: total }
}
