use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LccError, LogRecord, MessageLog, Packet};
use crate::framework::NodeId;

/// How pending packets are scheduled.
///
/// `Synchronous` delivers in rounds: everything sent during round `r` is
/// delivered in round `r + 1`, sorted by sender, receiver and send order.
/// `Shuffled` picks a random deliverable packet at every step, where a
/// packet is deliverable when nothing that causally precedes it is still
/// waiting for the same receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeliveryOrder {
    #[default]
    Synchronous,
    Shuffled { seed: u64 },
}

type Clock = BTreeMap<NodeId, u64>;

struct InFlight {
    seq: u64,
    round: u64,
    from: NodeId,
    to: NodeId,
    packet: Packet,
    clock: Clock,
}

impl InFlight {
    /// Happened-before on send events. Packets emitted by one handler
    /// invocation share an event and keep their send order.
    fn precedes(&self, other: &InFlight) -> bool {
        let mine = self.clock[&self.from];
        let seen = other.clock.get(&self.from).copied().unwrap_or(0);
        if self.from == other.from && mine == seen {
            return self.seq < other.seq;
        }
        seen >= mine
    }
}

pub(super) struct Bus {
    order: DeliveryOrder,
    rng: Option<ChaCha8Rng>,
    pending: Vec<InFlight>,
    clocks: BTreeMap<NodeId, Clock>,
    seq: u64,
}

impl Bus {
    pub fn new(order: DeliveryOrder, nodes: impl Iterator<Item = NodeId>) -> Self {
        let rng = match order {
            DeliveryOrder::Shuffled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            DeliveryOrder::Synchronous => None,
        };
        Bus {
            order,
            rng,
            pending: Vec::new(),
            clocks: nodes.map(|n| (n, Clock::new())).collect(),
            seq: 0,
        }
    }

    /// Emits everything one handler produced as a single event of `from`.
    fn emit(&mut self, from: NodeId, out: Vec<(NodeId, Packet)>, round: u64) {
        if out.is_empty() {
            return;
        }
        let clock = self.clocks.entry(from).or_default();
        *clock.entry(from).or_insert(0) += 1;
        let clock = clock.clone();
        for (to, packet) in out {
            self.pending.push(InFlight { seq: self.seq, round, from, to, packet, clock: clock.clone() });
            self.seq += 1;
        }
    }

    pub fn post(&mut self, from: NodeId, out: Vec<(NodeId, Packet)>) {
        self.emit(from, out, 0);
    }

    fn next_index(&mut self) -> usize {
        match self.order {
            DeliveryOrder::Synchronous => (0..self.pending.len())
                .min_by_key(|&k| {
                    let p = &self.pending[k];
                    (p.round, p.from, p.to, p.seq)
                })
                .unwrap(),
            DeliveryOrder::Shuffled { .. } => {
                let ready: Vec<usize> = (0..self.pending.len())
                    .filter(|&k| {
                        let q = &self.pending[k];
                        !self.pending.iter().any(|p| p.to == q.to && p.precedes(q))
                    })
                    .collect();
                ready[self.rng.as_mut().unwrap().gen_range(0..ready.len())]
            }
        }
    }

    /// Delivers until nothing is pending. `deliver` returns the packets the
    /// receiver emits in response.
    pub fn run<F>(&mut self, limit: usize, mut deliver: F) -> Result<MessageLog, LccError>
    where
        F: FnMut(NodeId, &Packet) -> Result<Vec<(NodeId, Packet)>, LccError>,
    {
        let mut log = MessageLog::default();
        while !self.pending.is_empty() {
            if log.len() >= limit {
                return Err(LccError::NoQuiescence(limit));
            }
            let k = self.next_index();
            let msg = self.pending.swap_remove(k);
            let (next, prev) = match &msg.packet {
                Packet::Forward(p) => (Some(p.next), p.prev),
                _ => (None, None),
            };
            log.records.push(LogRecord {
                step: log.len(),
                from: msg.from,
                to: msg.to,
                psi: msg.packet.psi(),
                self_id: msg.packet.self_id(),
                next,
                prev,
            });
            let receiver = self.clocks.entry(msg.to).or_default();
            for (&n, &c) in &msg.clock {
                let e = receiver.entry(n).or_insert(0);
                *e = (*e).max(c);
            }
            let replies = deliver(msg.to, &msg.packet)?;
            self.emit(msg.to, replies, msg.round + 1);
        }
        Ok(log)
    }
}
