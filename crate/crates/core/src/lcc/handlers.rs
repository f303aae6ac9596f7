use super::{ForwardPayload, InSlot, LccError, LocalInfoTable, Packet};
use crate::framework::NodeId;
use crate::reconfig::TieBreak;

pub type Outgoing = Vec<(NodeId, Packet)>;

fn forward_copy(table: &LocalInfoTable, self_id: NodeId, next: NodeId, prev: Option<NodeId>) -> Packet {
    Packet::Forward(ForwardPayload {
        in_table: table.in_table.clone(),
        out_table: table.out_table.iter().copied().collect(),
        self_id,
        next,
        prev,
    })
}

/// A joining node starts with the weights of its unit and asks each
/// in-neighbour to link back.
pub fn added_node_operation(node: NodeId, in_table: &[(NodeId, f64)]) -> (LocalInfoTable, Outgoing) {
    let table = LocalInfoTable {
        in_table: in_table.iter().map(|&(id, weight)| InSlot { id, weight, touched: false }).collect(),
        out_table: Default::default(),
    };
    let out = in_table.iter().map(|&(j, _)| (j, Packet::Link { self_id: node })).collect();
    (table, out)
}

pub fn backward_receive(node: NodeId, table: &mut LocalInfoTable, pkt: &Packet) -> Result<(), LccError> {
    match pkt {
        Packet::Break { self_id } => {
            table.out_table.remove(self_id);
        }
        Packet::Link { self_id } => {
            table.out_table.insert(*self_id);
        }
        Packet::Forward(_) => return Err(LccError::Misrouted(node)),
    }
    Ok(())
}

/// The leaving node hands its tables to its out-neighbours, unlinks from
/// its in-neighbours and forgets everything.
pub fn removed_node_operation(node: NodeId, table: &mut LocalInfoTable, tie_break: TieBreak) -> Outgoing {
    let mut out = Vec::new();
    let outs: Vec<NodeId> = table.out_table.iter().copied().collect();
    if let Some(next) = tie_break.pick(&outs) {
        let fwd = forward_copy(table, node, next, None);
        out.extend(outs.iter().map(|&j| (j, fwd.clone())));
    }
    out.extend(table.in_table.iter().map(|s| (s.id, Packet::Break { self_id: node })));
    *table = LocalInfoTable::default();
    out
}

/// The designated heir passes its own (old) tables further down the chain,
/// leaves its old in-neighbours and takes over the tables it received.
pub fn inherit_receive(
    node: NodeId,
    table: &mut LocalInfoTable,
    pkt: &ForwardPayload,
    tie_break: TieBreak,
) -> Outgoing {
    let mut out = Vec::new();
    let old_outs: Vec<NodeId> = table.out_table.iter().copied().collect();
    let my_next = tie_break.pick(&old_outs);
    if let Some(next) = my_next {
        let fwd = forward_copy(table, node, next, Some(pkt.self_id));
        out.extend(old_outs.iter().map(|&j| (j, fwd.clone())));
    }
    for s in &table.in_table {
        if s.id != pkt.self_id {
            out.push((s.id, Packet::Break { self_id: node }));
        }
    }

    let mut in_table = pkt.in_table.clone();
    if let Some(prev) = pkt.prev {
        for s in in_table.iter_mut().filter(|s| !s.touched && s.id == prev) {
            s.id = pkt.self_id;
            s.touched = true;
        }
    }
    let out_table = pkt
        .out_table
        .iter()
        .filter_map(|&j| if j == node { my_next } else { Some(j) })
        .collect();

    for s in &in_table {
        if pkt.prev.is_none() || s.id != pkt.self_id {
            out.push((s.id, Packet::Link { self_id: node }));
        }
    }
    *table = LocalInfoTable { in_table, out_table };
    out
}

/// Any other out-neighbour of the sender only renames the sender to its heir.
pub fn non_inherit_receive(table: &mut LocalInfoTable, pkt: &ForwardPayload) {
    for s in table.in_table.iter_mut().filter(|s| !s.touched && s.id == pkt.self_id) {
        s.id = pkt.next;
        s.touched = true;
    }
}
