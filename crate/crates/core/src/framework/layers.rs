use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::{NodeId, NominalFramework};

/// Longest-path layer partition `H_1, ..., H_M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layering {
    pub layers: Vec<Vec<NodeId>>,
}

impl Layering {
    /// 1-based layer index of every node.
    pub fn index_map(&self) -> BTreeMap<NodeId, usize> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| l.iter().map(move |&n| (n, k + 1)))
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Nodes ordered by layer, ascending id inside a layer.
    pub fn order(&self) -> Vec<NodeId> {
        self.layers.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("graph has a directed cycle through {cycle:?}")]
pub struct NotLayerable {
    /// Nodes of one cycle in edge direction; the last node links back to the first.
    pub cycle: Vec<NodeId>,
}

pub fn compute_layers(fw: &NominalFramework) -> Result<Layering, NotLayerable> {
    let nodes = fw.node_ids();
    let mut indeg: BTreeMap<NodeId, usize> = nodes.iter().map(|&n| (n, fw.in_table(n).len())).collect();
    let mut out: BTreeMap<NodeId, Vec<NodeId>> = nodes.iter().map(|&n| (n, Vec::new())).collect();
    for &i in &nodes {
        for &(j, _) in fw.in_table(i) {
            out.get_mut(&j).expect("edge source is a node").push(i);
        }
    }

    let mut level: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut ready: BTreeSet<NodeId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    for &n in &ready {
        level.insert(n, 1);
    }
    while let Some(n) = ready.pop_first() {
        let ln = level[&n];
        for &m in &out[&n] {
            let lm = level.entry(m).or_insert(0);
            *lm = (*lm).max(ln + 1);
            let d = indeg.get_mut(&m).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(m);
            }
        }
    }

    let done: BTreeSet<NodeId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    if done.len() < nodes.len() {
        return Err(NotLayerable { cycle: cycle_witness(fw, &done) });
    }

    let depth = level.values().copied().max().unwrap_or(0);
    let mut layers = vec![Vec::new(); depth];
    for (n, l) in level {
        layers[l - 1].push(n);
    }
    Ok(Layering { layers })
}

/// Every node Kahn could not retire has an unretired in-neighbour, so walking
/// backwards from one of them must revisit a node.
fn cycle_witness(fw: &NominalFramework, done: &BTreeSet<NodeId>) -> Vec<NodeId> {
    let start = fw.node_ids().into_iter().filter(|n| !done.contains(n)).min().unwrap();
    let mut walk = vec![start];
    let mut seen: BTreeMap<NodeId, usize> = BTreeMap::from([(start, 0)]);
    loop {
        let cur = *walk.last().unwrap();
        let prev = fw
            .in_table(cur)
            .iter()
            .map(|&(j, _)| j)
            .filter(|j| !done.contains(j))
            .min()
            .unwrap();
        if let Some(&at) = seen.get(&prev) {
            let mut cycle: Vec<NodeId> = walk[at..].to_vec();
            cycle.reverse();
            return cycle;
        }
        seen.insert(prev, walk.len());
        walk.push(prev);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Graph-only framework in R^1; positions are irrelevant to layering.
    fn graph(sources: &[u32], edges: &[(u32, u32)]) -> NominalFramework {
        let mut ids: BTreeSet<u32> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        ids.extend(sources);
        let mut fw = NominalFramework::with_leaders(
            1,
            sources.iter().map(|&s| (NodeId(s), vec![s as f64])).collect(),
        )
        .unwrap();
        for &i in &ids {
            if !sources.contains(&i) {
                fw.add_follower(NodeId(i), vec![i as f64], vec![]).unwrap();
            }
        }
        for &i in &ids {
            let table: Vec<(NodeId, f64)> =
                edges.iter().filter(|e| e.1 == i).map(|e| (NodeId(e.0), 1.0)).collect();
            fw.set_in_table(NodeId(i), table).unwrap();
        }
        fw
    }

    fn ids(v: &[&[u32]]) -> Vec<Vec<NodeId>> {
        v.iter().map(|l| l.iter().map(|&x| NodeId(x)).collect()).collect()
    }

    #[test]
    fn chain_depth() {
        let fw = graph(&[1, 2], &[(1, 3), (2, 3), (3, 4)]);
        assert_eq!(compute_layers(&fw).unwrap().layers, ids(&[&[1, 2], &[3], &[4]]));
    }

    #[test]
    fn longest_path_wins_over_shortcut() {
        let fw = graph(&[1, 2], &[(1, 3), (2, 3), (1, 4), (3, 4)]);
        assert_eq!(compute_layers(&fw).unwrap().layers, ids(&[&[1, 2], &[3], &[4]]));
    }

    #[test]
    fn two_cycle_is_reported() {
        let fw = graph(&[], &[(1, 2), (2, 1)]);
        let err = compute_layers(&fw).unwrap_err();
        assert_eq!(err.cycle.len(), 2);
        assert!(err.cycle.contains(&NodeId(1)) && err.cycle.contains(&NodeId(2)));
    }

    #[test]
    fn witness_follows_edges() {
        let fw = graph(&[1], &[(1, 2), (2, 3), (3, 4), (4, 2), (4, 5)]);
        let cycle = compute_layers(&fw).unwrap_err().cycle;
        assert_eq!(cycle.len(), 3);
        for k in 0..cycle.len() {
            let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            assert!(fw.in_neighbors(b).contains(&a), "{a} -> {b} is not an edge");
        }
    }
}
