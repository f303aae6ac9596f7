//! Building frameworks out of equilibrium units and repairing them when a
//! follower joins (flow-in) or leaves (flow-out).
//!
//! Flow-out works by role inheritance: for a chain `c_0 -> c_1 -> ... -> c_L`
//! ending at an end node, each `c_{i+1}` moves into the slot of `c_i`,
//! taking over its position and in-neighbour table. The ids inside all
//! in-tables are renamed accordingly and the now unused slot of `c_L` is
//! dropped. Because positions move along with tables, every equilibrium
//! unit stays intact and no weight has to be recomputed.

mod random;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framework::{FrameworkError, NodeId, NominalFramework};
use crate::geometry::{is_equilibrium_unit, solve_unit_weights, GeometryError, Point, PointSet, Tolerances};

pub use random::{random_attachment, random_euc, RandomEucOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconfigError {
    #[error("leaders do not affinely span R^{0}")]
    LeadersDoNotSpan(usize),
    #[error("expected {expected} leaders, got {found}")]
    LeaderCount { expected: usize, found: usize },
    #[error("framework would have {found} nodes, at least {needed} are required")]
    TooFewNodes { found: usize, needed: usize },
    #[error("node {node} does not form an equilibrium unit with its in-neighbours")]
    NotAUnit { node: NodeId },
    #[error("node {node}: {source}")]
    Geometry { node: NodeId, source: GeometryError },
    #[error("node {0} is a leader; leader removal is not supported")]
    LeaderRemoval(NodeId),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
}

/// Where a new follower goes and which existing nodes it measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachmentSpec {
    pub node: NodeId,
    pub position: Point,
    pub in_neighbors: Vec<NodeId>,
}

/// Rule for picking the next inheritor among a node's out-neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    SmallestId,
    LargestId,
}

impl TieBreak {
    pub fn pick(&self, candidates: &[NodeId]) -> Option<NodeId> {
        match self {
            TieBreak::SmallestId => candidates.iter().min().copied(),
            TieBreak::LargestId => candidates.iter().max().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InheritancePath {
    pub chain: Vec<NodeId>,
}

impl InheritancePath {
    /// `c_i -> c_{i+1}` for every link of the chain.
    pub fn renaming(&self) -> BTreeMap<NodeId, NodeId> {
        self.chain.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn end(&self) -> NodeId {
        *self.chain.last().expect("chain is never empty")
    }
}

/// In-neighbour table of a prospective follower, weights from its unit.
pub fn unit_in_table(
    fw: &NominalFramework,
    spec: &AttachmentSpec,
    tol: &Tolerances,
) -> Result<Vec<(NodeId, f64)>, ReconfigError> {
    let mut pts = vec![spec.position.clone()];
    for &j in &spec.in_neighbors {
        pts.push(fw.position(j).ok_or(FrameworkError::UnknownNode(j))?.clone());
    }
    let node = spec.node;
    let geo = |source| ReconfigError::Geometry { node, source };
    let ps = PointSet::new(fw.dim(), pts).map_err(geo)?;
    if !is_equilibrium_unit(&ps, tol).map_err(geo)? {
        return Err(ReconfigError::NotAUnit { node });
    }
    let h = solve_unit_weights(&ps, tol).map_err(geo)?;
    Ok(spec.in_neighbors.iter().copied().zip(h.weights).collect())
}

/// Equilibrium-unit construction: `d + 1` spanning leaders, then one unit
/// merged per attachment in order.
pub fn euc_construct(
    dim: usize,
    leaders: Vec<(NodeId, Point)>,
    attachments: &[AttachmentSpec],
    tol: &Tolerances,
) -> Result<NominalFramework, ReconfigError> {
    if leaders.len() != dim + 1 {
        return Err(ReconfigError::LeaderCount { expected: dim + 1, found: leaders.len() });
    }
    let total = leaders.len() + attachments.len();
    if total < dim + 2 {
        return Err(ReconfigError::TooFewNodes { found: total, needed: dim + 2 });
    }
    let mut fw = NominalFramework::with_leaders(dim, leaders)?;
    if !crate::framework::leaders_affinely_span(&fw, tol) {
        return Err(ReconfigError::LeadersDoNotSpan(dim));
    }
    for spec in attachments {
        fw = fia_add(&fw, spec, tol)?;
    }
    Ok(fw)
}

/// Flow-in: merge one new equilibrium unit.
pub fn fia_add(
    fw: &NominalFramework,
    spec: &AttachmentSpec,
    tol: &Tolerances,
) -> Result<NominalFramework, ReconfigError> {
    if fw.contains(spec.node) {
        return Err(FrameworkError::DuplicateNode(spec.node).into());
    }
    let table = unit_in_table(fw, spec, tol)?;
    let mut out = fw.clone();
    out.add_follower(spec.node, spec.position.clone(), table)?;
    Ok(out)
}

pub fn find_inheritance_path(
    fw: &NominalFramework,
    removed: NodeId,
    tie_break: TieBreak,
) -> Result<InheritancePath, ReconfigError> {
    if !fw.contains(removed) {
        return Err(FrameworkError::UnknownNode(removed).into());
    }
    if fw.is_leader(removed) {
        return Err(ReconfigError::LeaderRemoval(removed));
    }
    let mut chain = vec![removed];
    let mut cur = removed;
    while let Some(next) = tie_break.pick(&fw.out_neighbors(cur)) {
        chain.push(next);
        cur = next;
    }
    Ok(InheritancePath { chain })
}

/// Flow-out: remove a follower by shifting roles along its inheritance path.
pub fn foa_remove(
    fw: &NominalFramework,
    removed: NodeId,
    tie_break: TieBreak,
) -> Result<(NominalFramework, InheritancePath), ReconfigError> {
    let path = find_inheritance_path(fw, removed, tie_break)?;
    let needed = fw.dim() + 2;
    if fw.len() - 1 < needed {
        return Err(ReconfigError::TooFewNodes { found: fw.len() - 1, needed });
    }
    let sigma = path.renaming();
    let rename = |id: NodeId| *sigma.get(&id).unwrap_or(&id);
    let renamed = |table: &[(NodeId, f64)]| table.iter().map(|&(j, w)| (rename(j), w)).collect::<Vec<_>>();

    let mut out = fw.clone();
    for w in path.chain.windows(2) {
        let (prev, heir) = (w[0], w[1]);
        out.set_position(heir, fw.position(prev).unwrap().clone())?;
    }
    out.remove_node_raw(removed);
    // Tables are rewritten only after the removed slot is gone so the
    // renamed ids always refer to live nodes.
    for id in out.node_ids() {
        let source = match path.chain.iter().position(|&c| c == id) {
            Some(k) if k > 0 => path.chain[k - 1],
            _ => id,
        };
        let table = renamed(fw.in_table(source));
        if table.as_slice() != fw.in_table(id) {
            out.set_in_table(id, table)?;
        }
    }
    Ok((out, path))
}
