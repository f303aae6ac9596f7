//! Localized communication for reconfiguration.
//!
//! Every node keeps only its own in-neighbour table (ids and weights) and its
//! out-neighbour set. Joining and leaving are carried out by exchanging three
//! kinds of packets between neighbours:
//!
//! * forward (`psi = +1`): a copy of the sender's tables, pushed along the
//!   inheritance chain to the sender's out-neighbours;
//! * break (`psi = -1`): "drop me from your out-neighbours";
//! * link (`psi = -2`): "add me to your out-neighbours".
//!
//! Nothing global is consulted. [`LccNetwork::matches`] checks afterwards
//! that the tables agree with the centrally repaired framework.

mod bus;
mod handlers;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::framework::{NodeId, NominalFramework};
use crate::reconfig::TieBreak;

pub use bus::DeliveryOrder;
pub use handlers::{
    added_node_operation, backward_receive, inherit_receive, non_inherit_receive, removed_node_operation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LccError {
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} is a leader")]
    LeaderRemoval(NodeId),
    #[error("forward packet routed to the backward handler of node {0}")]
    Misrouted(NodeId),
    #[error("node {node} received a forward packet meant for {expected}")]
    Misdelivered { node: NodeId, expected: NodeId },
    #[error("no quiescence after {0} deliveries")]
    NoQuiescence(usize),
    #[error("tables are inconsistent: {0}")]
    Inconsistent(String),
}

/// One row of an in-neighbour table. `touched` marks slots whose id has
/// already been rewritten during the current event, so a node renamed
/// twice along a chain is not renamed again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InSlot {
    pub id: NodeId,
    pub weight: f64,
    pub touched: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LocalInfoTable {
    pub in_table: Vec<InSlot>,
    pub out_table: BTreeSet<NodeId>,
}

impl LocalInfoTable {
    pub fn in_pairs(&self) -> Vec<(NodeId, f64)> {
        self.in_table.iter().map(|s| (s.id, s.weight)).collect()
    }

    pub fn in_ids(&self) -> Vec<NodeId> {
        self.in_table.iter().map(|s| s.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.in_table.is_empty() && self.out_table.is_empty()
    }

    fn clear_marks(&mut self) {
        for s in &mut self.in_table {
            s.touched = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardPayload {
    pub in_table: Vec<InSlot>,
    pub out_table: Vec<NodeId>,
    pub self_id: NodeId,
    pub next: NodeId,
    pub prev: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Packet {
    Forward(ForwardPayload),
    Break { self_id: NodeId },
    Link { self_id: NodeId },
}

impl Packet {
    pub fn psi(&self) -> i8 {
        match self {
            Packet::Forward(_) => 1,
            Packet::Break { .. } => -1,
            Packet::Link { .. } => -2,
        }
    }

    pub fn self_id(&self) -> NodeId {
        match self {
            Packet::Forward(p) => p.self_id,
            Packet::Break { self_id } | Packet::Link { self_id } => *self_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub psi: i8,
    #[serde(rename = "self")]
    pub self_id: NodeId,
    pub next: Option<NodeId>,
    pub prev: Option<NodeId>,
}

/// Delivered packets in delivery order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MessageLog {
    pub records: Vec<LogRecord>,
}

impl MessageLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn participants(&self) -> BTreeSet<NodeId> {
        self.records.iter().flat_map(|r| [r.from, r.to]).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            writeln!(s, "{}", serde_json::to_string(r).expect("record serializes")).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LccEvent {
    Add { node: NodeId, in_table: Vec<(NodeId, f64)> },
    Remove { node: NodeId, tie_break: TieBreak },
}

/// The per-node tables of a whole swarm, plus the leader set (leaders never
/// take part in inheritance).
#[derive(Debug, Clone, PartialEq)]
pub struct LccNetwork {
    tables: BTreeMap<NodeId, LocalInfoTable>,
    leaders: BTreeSet<NodeId>,
}

impl LccNetwork {
    /// Tables as a fresh EUC build would leave them.
    pub fn from_framework(fw: &NominalFramework) -> Self {
        let tables = fw
            .node_ids()
            .into_iter()
            .map(|id| {
                let in_table = fw
                    .in_table(id)
                    .iter()
                    .map(|&(j, w)| InSlot { id: j, weight: w, touched: false })
                    .collect();
                let out_table = fw.out_neighbors(id).into_iter().collect();
                (id, LocalInfoTable { in_table, out_table })
            })
            .collect();
        LccNetwork { tables, leaders: fw.leaders().iter().copied().collect() }
    }

    pub fn tables(&self) -> &BTreeMap<NodeId, LocalInfoTable> {
        &self.tables
    }

    pub fn table(&self, id: NodeId) -> Option<&LocalInfoTable> {
        self.tables.get(&id)
    }

    pub fn run_lcc(&mut self, event: &LccEvent, order: DeliveryOrder) -> Result<MessageLog, LccError> {
        for t in self.tables.values_mut() {
            t.clear_marks();
        }
        let mut bus = bus::Bus::new(order, self.tables.keys().copied());
        match event {
            LccEvent::Add { node, in_table } => {
                if self.tables.contains_key(node) {
                    return Err(LccError::DuplicateNode(*node));
                }
                for (j, _) in in_table {
                    if !self.tables.contains_key(j) {
                        return Err(LccError::UnknownNode(*j));
                    }
                }
                let (table, out) = added_node_operation(*node, in_table);
                self.tables.insert(*node, table);
                bus.post(*node, out);
            }
            LccEvent::Remove { node, tie_break } => {
                if self.leaders.contains(node) {
                    return Err(LccError::LeaderRemoval(*node));
                }
                let table = self.tables.get_mut(node).ok_or(LccError::UnknownNode(*node))?;
                let out = removed_node_operation(*node, table, *tie_break);
                bus.post(*node, out);
                self.tables.remove(node);
            }
        }
        let tie = match event {
            LccEvent::Remove { tie_break, .. } => *tie_break,
            LccEvent::Add { .. } => TieBreak::default(),
        };
        let n = self.tables.len();
        let edges: usize = self.tables.values().map(|t| t.in_table.len()).sum();
        let limit = (n * n).max(3 * edges + n);
        let log = bus.run(limit, |to, pkt| {
            let table = self.tables.get_mut(&to).ok_or(LccError::UnknownNode(to))?;
            match pkt {
                Packet::Forward(p) if p.next == to => Ok(inherit_receive(to, table, p, tie)),
                Packet::Forward(p) => {
                    non_inherit_receive(table, p);
                    Ok(Vec::new())
                }
                _ => backward_receive(to, table, pkt).map(|_| Vec::new()),
            }
        })?;
        for t in self.tables.values_mut() {
            t.clear_marks();
        }
        Ok(log)
    }

    /// `j` in `out(i)` exactly when `i` appears in the in-table of `j`, and
    /// no in-table repeats an id.
    pub fn check_consistency(&self) -> Result<(), LccError> {
        for (&i, t) in &self.tables {
            let ids: BTreeSet<NodeId> = t.in_ids().into_iter().collect();
            if ids.len() != t.in_table.len() {
                return Err(LccError::Inconsistent(format!("node {i} repeats an in-neighbour")));
            }
            for &j in &ids {
                let ok = self.tables.get(&j).map(|tj| tj.out_table.contains(&i)).unwrap_or(false);
                if !ok {
                    return Err(LccError::Inconsistent(format!("{j} is an in-neighbour of {i} but not linked")));
                }
            }
            for &j in &t.out_table {
                let ok = self.tables.get(&j).map(|tj| tj.in_ids().contains(&i)).unwrap_or(false);
                if !ok {
                    return Err(LccError::Inconsistent(format!("{i} lists out-neighbour {j} that does not read it")));
                }
            }
        }
        Ok(())
    }

    /// Same node set and bit-identical in-tables as `fw`.
    pub fn matches(&self, fw: &NominalFramework) -> Result<(), LccError> {
        let ours: BTreeSet<NodeId> = self.tables.keys().copied().collect();
        let theirs: BTreeSet<NodeId> = fw.node_ids().into_iter().collect();
        if ours != theirs {
            return Err(LccError::Inconsistent(format!("node sets differ: {ours:?} vs {theirs:?}")));
        }
        for (&i, t) in &self.tables {
            let a = t.in_pairs();
            let b = fw.in_table(i);
            let same = a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
            if !same {
                return Err(LccError::Inconsistent(format!("in-table of {i}: {a:?} vs {b:?}")));
            }
            let out: BTreeSet<NodeId> = fw.out_neighbors(i).into_iter().collect();
            if out != t.out_table {
                return Err(LccError::Inconsistent(format!("out-table of {i}: {:?} vs {out:?}", t.out_table)));
            }
        }
        Ok(())
    }
}
