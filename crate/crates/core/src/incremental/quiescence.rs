//! Termination detection for asynchronous microstep execution.
//!
//! Every worker counts the records it sends and the acknowledgements it
//! receives for them. A receiver acknowledges a record only after the
//! records derived from it have been counted as sent, so balanced counters
//! mean no record is queued, in flight or being processed.

use std::sync::atomic::{AtomicU64, Ordering};

pub struct AckCounters {
    sent: Vec<AtomicU64>,
    acked: Vec<AtomicU64>,
    activity: AtomicU64,
}

impl AckCounters {
    pub fn new(senders: usize) -> Self {
        AckCounters {
            sent: (0..senders).map(|_| AtomicU64::new(0)).collect(),
            acked: (0..senders).map(|_| AtomicU64::new(0)).collect(),
            activity: AtomicU64::new(0),
        }
    }

    pub fn sent(&self, sender: usize, n: u64) {
        self.sent[sender].fetch_add(n, Ordering::SeqCst);
    }

    pub fn acked(&self, sender: usize, n: u64) {
        self.acked[sender].fetch_add(n, Ordering::SeqCst);
    }

    pub fn touch(&self) {
        self.activity.fetch_add(1, Ordering::SeqCst);
    }

    /// Acks are read before sends: a record that is unacknowledged at the
    /// first read was counted as sent before it, so a torn read can only
    /// look unbalanced, never balanced.
    pub fn snapshot(&self, queued: usize) -> Snapshot {
        let activity = self.activity.load(Ordering::SeqCst);
        let acked = self.acked.iter().map(|a| a.load(Ordering::SeqCst)).collect();
        let sent = self.sent.iter().map(|s| s.load(Ordering::SeqCst)).collect();
        Snapshot { sent, acked, queued, activity }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub sent: Vec<u64>,
    pub acked: Vec<u64>,
    pub queued: usize,
    pub activity: u64,
}

impl Snapshot {
    pub fn balanced(&self) -> bool {
        self.queued == 0 && self.sent == self.acked
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quiescence {
    Terminated,
    Active,
}

/// Declares termination once two consecutive probes are balanced and
/// identical, so any record that arrived in between invalidates the first.
#[derive(Debug, Default)]
pub struct QuiescenceDetector {
    last: Option<Snapshot>,
    pub probes: u64,
}

impl QuiescenceDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn probe(&mut self, snap: Snapshot) -> Quiescence {
        self.probes += 1;
        let done = snap.balanced() && self.last.as_ref() == Some(&snap);
        self.last = snap.balanced().then_some(snap);
        if done {
            Quiescence::Terminated
        } else {
            Quiescence::Active
        }
    }
}

/// One-shot form: probes `counters` twice.
pub fn detect_quiescence_async(counters: &AckCounters, queued: impl Fn() -> usize) -> Quiescence {
    let mut d = QuiescenceDetector::new();
    d.probe(counters.snapshot(queued()));
    d.probe(counters.snapshot(queued()))
}
