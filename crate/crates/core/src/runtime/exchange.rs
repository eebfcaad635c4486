//! All-to-all record exchange between workers.
//!
//! Every shipped edge is a logical channel. A worker sends one data packet
//! per destination followed by an end marker to every worker; a receiver has
//! the channel complete once it holds end markers from all `P` senders.
//! Packets are tagged with the superstep so early arrivals for a later
//! superstep are parked instead of being mixed in.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::error::{EngineError, Result};
use crate::physical::ShipStrategy;
use crate::record::{extract_key, partition_of, Record};

enum Packet {
    Data {
        channel: u64,
        superstep: u64,
        from: usize,
        records: Vec<Record>,
    },
    End {
        channel: u64,
        superstep: u64,
    },
}

#[derive(Default)]
struct Pending {
    parts: Vec<Vec<Record>>,
    ends: usize,
}

/// Moves records between workers according to a ship strategy.
pub(crate) trait Shipper {
    /// Returns the records this worker receives and the number of
    /// per-destination sends.
    fn ship(&mut self, channel: u64, superstep: u64, strategy: &ShipStrategy, records: Vec<Record>) -> Result<(Vec<Record>, u64)>;
}

pub(crate) struct Endpoint {
    me: usize,
    senders: Vec<Sender<Packet>>,
    rx: Receiver<Packet>,
    pending: HashMap<(u64, u64), Pending>,
    abort: Arc<AtomicBool>,
    /// Packets that arrived for a superstep already finished on this worker.
    pub stale_packets: u64,
    latest_superstep: u64,
}

/// Creates one connected endpoint per worker.
pub(crate) fn mesh(p: usize, abort: Arc<AtomicBool>) -> Vec<Endpoint> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..p).map(|_| unbounded()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(me, rx)| Endpoint {
            me,
            senders: senders.clone(),
            rx,
            pending: HashMap::new(),
            abort: abort.clone(),
            stale_packets: 0,
            latest_superstep: 0,
        })
        .collect()
}

impl Endpoint {
    fn p(&self) -> usize {
        self.senders.len()
    }

    fn park(&mut self, packet: Packet) {
        let p = self.p();
        match packet {
            Packet::Data {
                channel,
                superstep,
                from,
                records,
            } => {
                if superstep < self.latest_superstep {
                    self.stale_packets += 1;
                }
                let slot = self.pending.entry((channel, superstep)).or_default();
                if slot.parts.is_empty() {
                    slot.parts = vec![Vec::new(); p];
                }
                slot.parts[from].extend(records);
            }
            Packet::End { channel, superstep } => {
                if superstep < self.latest_superstep {
                    self.stale_packets += 1;
                }
                self.pending.entry((channel, superstep)).or_default().ends += 1;
            }
        }
    }

    fn exchange(&mut self, channel: u64, superstep: u64, outgoing: Vec<Vec<Record>>) -> Result<Vec<Record>> {
        self.latest_superstep = self.latest_superstep.max(superstep);
        for (to, records) in outgoing.into_iter().enumerate() {
            if !records.is_empty() {
                // a closed receiver means that worker has already failed
                let _ = self.senders[to].send(Packet::Data {
                    channel,
                    superstep,
                    from: self.me,
                    records,
                });
            }
        }
        for s in &self.senders {
            let _ = s.send(Packet::End { channel, superstep });
        }
        let p = self.p();
        loop {
            if self.pending.get(&(channel, superstep)).is_some_and(|x| x.ends == p) {
                let done = self.pending.remove(&(channel, superstep)).unwrap_or_default();
                return Ok(done.parts.into_iter().flatten().collect());
            }
            match self.rx.recv_timeout(Duration::from_millis(5)) {
                Ok(packet) => self.park(packet),
                Err(RecvTimeoutError::Timeout) => {
                    if self.abort.load(Ordering::Relaxed) {
                        return Err(EngineError::Aborted);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return Err(EngineError::Aborted),
            }
        }
    }
}

impl Shipper for Endpoint {
    fn ship(&mut self, channel: u64, superstep: u64, strategy: &ShipStrategy, records: Vec<Record>) -> Result<(Vec<Record>, u64)> {
        let p = self.p();
        match strategy {
            ShipStrategy::Forward => Ok((records, 0)),
            ShipStrategy::Partition(key) => {
                let n = records.len() as u64;
                let mut out = vec![Vec::new(); p];
                for r in records {
                    let k = extract_key(&r, key)?;
                    out[partition_of(&k, p)].push(r);
                }
                Ok((self.exchange(channel, superstep, out)?, n))
            }
            ShipStrategy::Broadcast => {
                let n = (records.len() * p) as u64;
                let out = vec![records; p];
                Ok((self.exchange(channel, superstep, out)?, n))
            }
        }
    }
}

/// Shipper for a single worker evaluating records it owns, with no peers
/// involved. Records that would have to move are counted as violations and
/// kept local.
pub(crate) struct LocalShipper {
    pub me: usize,
    pub p: usize,
    pub violations: u64,
}

impl Shipper for LocalShipper {
    fn ship(&mut self, _channel: u64, _superstep: u64, strategy: &ShipStrategy, records: Vec<Record>) -> Result<(Vec<Record>, u64)> {
        match strategy {
            ShipStrategy::Forward => {}
            ShipStrategy::Partition(key) => {
                for r in &records {
                    if partition_of(&extract_key(r, key)?, self.p) != self.me {
                        self.violations += 1;
                    }
                }
            }
            ShipStrategy::Broadcast => self.violations += records.len() as u64,
        }
        Ok((records, 0))
    }
}
