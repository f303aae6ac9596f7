use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{FrameworkError, NodeId, NominalFramework};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: NodeId,
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
}

/// On-disk form of a framework. Nodes are listed leaders first; edges are
/// grouped by target in node order and keep the in-table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkDoc {
    pub dim: usize,
    pub leaders: Vec<NodeId>,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
}

impl From<&NominalFramework> for FrameworkDoc {
    fn from(fw: &NominalFramework) -> Self {
        let ids = fw.node_ids();
        FrameworkDoc {
            dim: fw.dim(),
            leaders: fw.leaders().to_vec(),
            nodes: ids
                .iter()
                .map(|&id| NodeDoc { id, position: fw.position(id).unwrap().clone() })
                .collect(),
            edges: ids
                .iter()
                .flat_map(|&to| fw.in_table(to).iter().map(move |&(from, weight)| EdgeDoc { from, to, weight }))
                .collect(),
        }
    }
}

impl TryFrom<FrameworkDoc> for NominalFramework {
    type Error = FrameworkError;

    fn try_from(doc: FrameworkDoc) -> Result<Self, FrameworkError> {
        if doc.dim == 0 {
            return Err(FrameworkError::Malformed("dim must be positive".into()));
        }
        let leader_set: BTreeSet<NodeId> = doc.leaders.iter().copied().collect();
        if leader_set.len() != doc.leaders.len() {
            return Err(FrameworkError::Malformed("leader listed twice".into()));
        }
        let position = |id: NodeId| {
            doc.nodes
                .iter()
                .find(|n| n.id == id)
                .map(|n| n.position.clone())
                .ok_or(FrameworkError::UnknownNode(id))
        };
        let mut fw = NominalFramework::with_leaders(
            doc.dim,
            doc.leaders.iter().map(|&l| position(l).map(|p| (l, p))).collect::<Result<_, _>>()?,
        )?;
        for n in doc.nodes.iter().filter(|n| !leader_set.contains(&n.id)) {
            fw.add_follower(n.id, n.position.clone(), Vec::new())?;
        }
        let ids = fw.node_ids();
        for &to in &ids {
            let table: Vec<(NodeId, f64)> =
                doc.edges.iter().filter(|e| e.to == to).map(|e| (e.from, e.weight)).collect();
            fw.set_in_table(to, table)?;
        }
        if let Some(e) = doc.edges.iter().find(|e| !fw.contains(e.to)) {
            return Err(FrameworkError::UnknownNode(e.to));
        }
        Ok(fw)
    }
}

impl NominalFramework {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FrameworkDoc::from(self)).expect("framework serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FrameworkError> {
        let doc: FrameworkDoc =
            serde_json::from_str(text).map_err(|e| FrameworkError::Malformed(e.to_string()))?;
        doc.try_into()
    }
}
