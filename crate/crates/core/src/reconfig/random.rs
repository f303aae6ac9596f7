use rand::seq::SliceRandom;
use rand::Rng;

use super::{fia_add, AttachmentSpec, ReconfigError};
use crate::framework::{NodeId, NominalFramework};
use crate::geometry::{homogeneous_matrix, Point, Tolerances};
use crate::linalg;

/// Knobs for [`random_euc`] and [`random_attachment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomEucOptions {
    /// Probability that one barycentric coordinate of a new node is negative,
    /// placing it outside the hull of its in-neighbours.
    pub outside_probability: f64,
    /// Probability that the most recently added follower is forced into the
    /// in-neighbour set, which produces long inheritance chains.
    pub chain_bias: f64,
    /// Reject samples closer than this to an existing node.
    pub min_separation: f64,
    /// Reject neighbour sets whose homogeneous matrix has a worse ratio of
    /// extreme singular values.
    pub min_conditioning: f64,
}

impl Default for RandomEucOptions {
    fn default() -> Self {
        RandomEucOptions {
            outside_probability: 0.2,
            chain_bias: 0.5,
            min_separation: 0.05,
            min_conditioning: 1e-2,
        }
    }
}

fn random_leaders<R: Rng>(rng: &mut R, dim: usize) -> Vec<(NodeId, Point)> {
    loop {
        let pts: Vec<Point> = (0..=dim)
            .map(|k| {
                (0..dim)
                    .map(|c| {
                        let base = if k == c + 1 { 4.0 } else { 0.0 };
                        base + rng.gen_range(-1.0..1.0)
                    })
                    .collect()
            })
            .collect();
        let (lo, hi) = linalg::singular_extremes(&homogeneous_matrix(&pts, dim));
        if lo > 0.2 * hi {
            return pts.into_iter().enumerate().map(|(k, p)| (NodeId(k as u32 + 1), p)).collect();
        }
    }
}

/// Barycentric coordinates bounded away from zero, summing to one.
fn random_coordinates<R: Rng>(rng: &mut R, m: usize, outside_probability: f64) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..1.0)).collect();
        if rng.gen_bool(outside_probability) {
            let k = rng.gen_range(0..m);
            u[k] = -rng.gen_range(0.1..0.4);
        }
        let s: f64 = u.iter().sum();
        if s > 0.5 {
            return u.into_iter().map(|x| x / s).collect();
        }
    }
}

/// A fresh attachment for `fw` whose unit holds by construction: the node
/// is placed at a barycentric combination of affinely independent
/// neighbours with non-zero coordinates.
pub fn random_attachment<R: Rng>(
    rng: &mut R,
    fw: &NominalFramework,
    node: NodeId,
    opts: &RandomEucOptions,
) -> AttachmentSpec {
    let d = fw.dim();
    let ids = fw.node_ids();
    let newest = fw.followers().last().copied();
    loop {
        let m = rng.gen_range(2..=d + 1);
        let mut nbrs: Vec<NodeId> = Vec::with_capacity(m);
        if let Some(f) = newest.filter(|_| rng.gen_bool(opts.chain_bias)) {
            nbrs.push(f);
        }
        let mut pool: Vec<NodeId> = ids.iter().copied().filter(|n| !nbrs.contains(n)).collect();
        pool.shuffle(rng);
        nbrs.extend(pool.into_iter().take(m - nbrs.len()));
        nbrs.shuffle(rng);

        let pts: Vec<Point> = nbrs.iter().map(|n| fw.position(*n).unwrap().clone()).collect();
        let (lo, hi) = linalg::singular_extremes(&homogeneous_matrix(&pts, d));
        if lo <= opts.min_conditioning * hi {
            continue;
        }
        let lambda = random_coordinates(rng, m, opts.outside_probability);
        let position: Point = (0..d).map(|c| lambda.iter().zip(&pts).map(|(l, p)| l * p[c]).sum()).collect();
        let too_close = fw.positions().values().any(|q| {
            let diff: Vec<f64> = q.iter().zip(&position).map(|(a, b)| a - b).collect();
            linalg::norm(&diff) < opts.min_separation
        });
        if too_close || position.iter().any(|x| x.abs() > 20.0) {
            continue;
        }
        return AttachmentSpec { node, position, in_neighbors: nbrs };
    }
}

/// Random EUC framework with `total` nodes (`d + 1` leaders, ids `1..`).
pub fn random_euc<R: Rng>(
    rng: &mut R,
    dim: usize,
    total: usize,
    opts: &RandomEucOptions,
    tol: &Tolerances,
) -> Result<(NominalFramework, Vec<AttachmentSpec>), ReconfigError> {
    if total < dim + 2 {
        return Err(ReconfigError::TooFewNodes { found: total, needed: dim + 2 });
    }
    let mut fw = NominalFramework::with_leaders(dim, random_leaders(rng, dim))?;
    let mut specs = Vec::new();
    while fw.len() < total {
        let spec = random_attachment(rng, &fw, fw.next_free_id(), opts);
        fw = fia_add(&fw, &spec, tol)?;
        specs.push(spec);
    }
    Ok((fw, specs))
}
