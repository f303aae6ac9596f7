//! Nominal frameworks: a directed weighted graph together with nominal
//! positions, plus the analyses that act on it (layering, Laplacian,
//! localizability verification, affine images).
//!
//! Edge convention: an edge `j -> i` means node `i` senses its state relative
//! to node `j`; its weight `w_{i,j}` is stored in the in-neighbour table of
//! `i`.

mod io;
mod laplacian;
mod layers;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

pub use io::{EdgeDoc, FrameworkDoc, NodeDoc};
pub use laplacian::{build_laplacian, LaplacianBlocks};
pub use layers::{compute_layers, Layering, NotLayerable};
pub use verify::{
    affine_image_basis, desired_config, equilibrium_residual, in_affine_image, leaders_affinely_span,
    localize_followers, verify_affine_localizability, AffineImageBasis, VerificationReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameworkError {
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("position of node {id} has length {found}, expected {dim}")]
    BadPosition { id: NodeId, found: usize, dim: usize },
    #[error("node {0} lists itself as in-neighbour")]
    SelfLoop(NodeId),
    #[error("node {node} lists in-neighbour {neighbor} twice")]
    DuplicateEdge { node: NodeId, neighbor: NodeId },
    #[error("weight on edge {from} -> {to} is not finite")]
    NonFiniteWeight { from: NodeId, to: NodeId },
    #[error("malformed framework document: {0}")]
    Malformed(String),
    #[error("linear solve failed: {0}")]
    Singular(String),
}

/// `(G, chi)`: leaders, followers, nominal positions and weighted in-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalFramework {
    dim: usize,
    leaders: Vec<NodeId>,
    followers: Vec<NodeId>,
    positions: BTreeMap<NodeId, Point>,
    in_edges: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl NominalFramework {
    /// A framework consisting only of leaders.
    pub fn with_leaders(dim: usize, leaders: Vec<(NodeId, Point)>) -> Result<Self, FrameworkError> {
        let mut fw = NominalFramework {
            dim,
            leaders: Vec::new(),
            followers: Vec::new(),
            positions: BTreeMap::new(),
            in_edges: BTreeMap::new(),
        };
        for (id, p) in leaders {
            fw.insert_position(id, p)?;
            fw.leaders.push(id);
        }
        Ok(fw)
    }

    fn insert_position(&mut self, id: NodeId, position: Point) -> Result<(), FrameworkError> {
        if self.positions.contains_key(&id) {
            return Err(FrameworkError::DuplicateNode(id));
        }
        if position.len() != self.dim {
            return Err(FrameworkError::BadPosition { id, found: position.len(), dim: self.dim });
        }
        self.positions.insert(id, position);
        self.in_edges.insert(id, Vec::new());
        Ok(())
    }

    /// Appends a follower with the given weighted in-neighbour table.
    pub fn add_follower(
        &mut self,
        id: NodeId,
        position: Point,
        in_table: Vec<(NodeId, f64)>,
    ) -> Result<(), FrameworkError> {
        self.check_table(id, &in_table)?;
        self.insert_position(id, position)?;
        self.followers.push(id);
        self.in_edges.insert(id, in_table);
        Ok(())
    }

    fn check_table(&self, id: NodeId, table: &[(NodeId, f64)]) -> Result<(), FrameworkError> {
        let mut seen = BTreeSet::new();
        for &(j, w) in table {
            if j == id {
                return Err(FrameworkError::SelfLoop(id));
            }
            if !self.positions.contains_key(&j) {
                return Err(FrameworkError::UnknownNode(j));
            }
            if !seen.insert(j) {
                return Err(FrameworkError::DuplicateEdge { node: id, neighbor: j });
            }
            if !w.is_finite() {
                return Err(FrameworkError::NonFiniteWeight { from: j, to: id });
            }
        }
        Ok(())
    }

    /// Replaces the in-neighbour table of an existing node.
    pub fn set_in_table(&mut self, id: NodeId, table: Vec<(NodeId, f64)>) -> Result<(), FrameworkError> {
        if !self.positions.contains_key(&id) {
            return Err(FrameworkError::UnknownNode(id));
        }
        self.check_table(id, &table)?;
        self.in_edges.insert(id, table);
        Ok(())
    }

    pub fn set_position(&mut self, id: NodeId, position: Point) -> Result<(), FrameworkError> {
        if position.len() != self.dim {
            return Err(FrameworkError::BadPosition { id, found: position.len(), dim: self.dim });
        }
        match self.positions.get_mut(&id) {
            Some(p) => {
                *p = position;
                Ok(())
            }
            None => Err(FrameworkError::UnknownNode(id)),
        }
    }

    /// Deletes a node together with its in-edges. Edges pointing out of it
    /// are left to the caller.
    pub(crate) fn remove_node_raw(&mut self, id: NodeId) {
        self.positions.remove(&id);
        self.in_edges.remove(&id);
        self.leaders.retain(|&n| n != id);
        self.followers.retain(|&n| n != id);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaders(&self) -> &[NodeId] {
        &self.leaders
    }

    pub fn followers(&self) -> &[NodeId] {
        &self.followers
    }

    pub fn leader_count(&self) -> usize {
        self.leaders.len()
    }

    pub fn len(&self) -> usize {
        self.leaders.len() + self.followers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaders first, then followers, in insertion order.
    pub fn node_ids(&self) -> Vec<NodeId> {
        self.leaders.iter().chain(&self.followers).copied().collect()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.positions.contains_key(&id)
    }

    pub fn is_leader(&self, id: NodeId) -> bool {
        self.leaders.contains(&id)
    }

    pub fn position(&self, id: NodeId) -> Option<&Point> {
        self.positions.get(&id)
    }

    pub fn positions(&self) -> &BTreeMap<NodeId, Point> {
        &self.positions
    }

    pub fn in_table(&self, id: NodeId) -> &[(NodeId, f64)] {
        self.in_edges.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn in_neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.in_table(id).iter().map(|&(j, _)| j).collect()
    }

    pub fn weight(&self, to: NodeId, from: NodeId) -> Option<f64> {
        self.in_table(to).iter().find(|(j, _)| *j == from).map(|&(_, w)| w)
    }

    /// Sorted out-neighbours of `id`.
    pub fn out_neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.in_edges
            .iter()
            .filter(|(_, table)| table.iter().any(|(j, _)| *j == id))
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn is_end_node(&self, id: NodeId) -> bool {
        !self.in_edges.values().any(|t| t.iter().any(|(j, _)| *j == id))
    }

    /// All edges keyed by `(to, from)`.
    pub fn edge_map(&self) -> BTreeMap<(NodeId, NodeId), f64> {
        self.in_edges
            .iter()
            .flat_map(|(&i, t)| t.iter().map(move |&(j, w)| ((i, j), w)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.values().map(Vec::len).sum()
    }

    /// Position of `id` in [`node_ids`](Self::node_ids).
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.leaders
            .iter()
            .position(|&n| n == id)
            .or_else(|| self.followers.iter().position(|&n| n == id).map(|k| k + self.leaders.len()))
    }

    /// Smallest id not yet used, handy for generated frameworks.
    pub fn next_free_id(&self) -> NodeId {
        NodeId(self.positions.keys().map(|n| n.0 + 1).max().unwrap_or(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> NominalFramework {
        NominalFramework::with_leaders(
            2,
            vec![
                (NodeId(1), vec![0.0, 0.0]),
                (NodeId(2), vec![4.0, 0.0]),
                (NodeId(3), vec![0.0, 4.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn neighbours_follow_edges() {
        let mut fw = triangle();
        fw.add_follower(NodeId(4), vec![2.0, 0.0], vec![(NodeId(1), 0.5), (NodeId(2), 0.5)]).unwrap();
        assert_eq!(fw.out_neighbors(NodeId(1)), vec![NodeId(4)]);
        assert_eq!(fw.in_neighbors(NodeId(4)), vec![NodeId(1), NodeId(2)]);
        assert!(fw.is_end_node(NodeId(4)));
        assert!(!fw.is_end_node(NodeId(2)));
        assert_eq!(fw.index_of(NodeId(4)), Some(3));
        assert_eq!(fw.weight(NodeId(4), NodeId(2)), Some(0.5));
        assert_eq!(fw.next_free_id(), NodeId(5));
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let mut fw = triangle();
        assert_eq!(
            fw.add_follower(NodeId(4), vec![1.0, 1.0], vec![(NodeId(9), 1.0)]),
            Err(FrameworkError::UnknownNode(NodeId(9)))
        );
        assert_eq!(
            fw.add_follower(NodeId(4), vec![1.0, 1.0], vec![(NodeId(1), 1.0), (NodeId(1), 1.0)]),
            Err(FrameworkError::DuplicateEdge { node: NodeId(4), neighbor: NodeId(1) })
        );
        assert_eq!(
            fw.add_follower(NodeId(1), vec![1.0, 1.0], vec![]),
            Err(FrameworkError::DuplicateNode(NodeId(1)))
        );
        assert!(matches!(
            fw.add_follower(NodeId(5), vec![1.0], vec![]),
            Err(FrameworkError::BadPosition { .. })
        ));
    }
}
