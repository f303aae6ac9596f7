//! Affine/linear dependence tests and equilibrium-unit weights.
//!
//! An equilibrium unit is an ordered point set `r_0, r_1, ..., r_M` in `R^d`
//! (`2 <= M <= d + 1`) in which every leave-one-out subset is affinely
//! independent while the apex displacements `z_j = r_0 - r_j` are linearly
//! dependent. Such a set admits a one-dimensional family of weights `h` with
//! `sum_j h_j z_j = 0`, none of them zero and with non-zero sum. We pick the
//! member with `sum_j h_j = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

pub type Point = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {index} has length {found}, expected dimension {dim}")]
    DimensionMismatch { index: usize, found: usize, dim: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("operation needs at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("unit size M = {m} outside [2, {max}]")]
    UnitSizeOutOfRange { m: usize, max: usize },
    #[error("kernel of the displacement matrix has dimension {0}, expected 1")]
    KernelDimension(usize),
    #[error("weight sum {0:e} is numerically zero")]
    DegenerateSum(f64),
    #[error("weight {index} = {value:e} is numerically zero")]
    ZeroWeight { index: usize, value: f64 },
    #[error("weight residual {0:e} exceeds tolerance")]
    Residual(f64),
}

/// Numerical thresholds for rank, non-zero and residual decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative pivot/singular-value threshold.
    pub rank: f64,
    /// Absolute non-zero threshold.
    pub zero: f64,
    /// Residual tolerance.
    pub res: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank: 1e-9, zero: 1e-10, res: 1e-9 }
    }
}

/// Ordered list of points of a common dimension. Index 0 is the unit apex.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    points: Vec<Point>,
}

impl PointSet {
    pub fn new(dim: usize, points: Vec<Point>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(GeometryError::DimensionMismatch { index, found: p.len(), dim });
            }
        }
        Ok(PointSet { dim, points })
    }

    /// Convenience constructor for literal fixtures.
    pub fn from_slices(dim: usize, points: &[&[f64]]) -> Result<Self, GeometryError> {
        Self::new(dim, points.iter().map(|p| p.to_vec()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn without(&self, skip: usize) -> PointSet {
        PointSet {
            dim: self.dim,
            points: self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, p)| p.clone())
                .collect(),
        }
    }
}

/// Weights of an equilibrium unit, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights {
    pub weights: Vec<f64>,
    pub weight_sum: f64,
}

/// Rows `[p_i^T, 1]` stacked.
pub fn homogeneous_matrix(points: &[Point], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), dim + 1, |r, c| if c < dim { points[r][c] } else { 1.0 })
}

/// True iff the homogeneous rows of `ps` have full row rank.
pub fn affinely_independent(ps: &PointSet, tol: &Tolerances) -> bool {
    if ps.is_empty() {
        return false;
    }
    let h = homogeneous_matrix(&ps.points, ps.dim);
    linalg::rank(&h, tol.rank) == ps.len()
}

/// `z_i = r_0 - r_i` for `i = 1..M`.
pub fn displacements(ps: &PointSet) -> Result<Vec<Point>, GeometryError> {
    if ps.len() < 2 {
        return Err(GeometryError::TooFewPoints { needed: 2, found: ps.len() });
    }
    let apex = &ps.points[0];
    Ok(ps.points[1..]
        .iter()
        .map(|r| apex.iter().zip(r).map(|(a, b)| a - b).collect())
        .collect())
}

fn unit_size(ps: &PointSet) -> Result<usize, GeometryError> {
    let m = ps.len().saturating_sub(1);
    if m < 2 || m > ps.dim + 1 {
        return Err(GeometryError::UnitSizeOutOfRange { m, max: ps.dim + 1 });
    }
    Ok(m)
}

/// `P(z)`: one displacement per row.
fn displacement_matrix(z: &[Point], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(z.len(), dim, |r, c| z[r][c])
}

pub fn is_equilibrium_unit(ps: &PointSet, tol: &Tolerances) -> Result<bool, GeometryError> {
    let m = unit_size(ps)?;
    let all_subsets_independent = (0..ps.len()).all(|j| affinely_independent(&ps.without(j), tol));
    if !all_subsets_independent {
        return Ok(false);
    }
    let z = displacements(ps)?;
    Ok(linalg::rank(&displacement_matrix(&z, ps.dim), tol.rank) == m - 1)
}

/// Normalized kernel vector of `P(z)^T`, i.e. the weights `h` with
/// `sum_j h_j (r_0 - r_j) = 0` and `sum_j h_j = 1`, without the non-zero
/// checks that a genuine unit guarantees.
pub fn kernel_weights(ps: &PointSet, tol: &Tolerances) -> Result<Vec<f64>, GeometryError> {
    unit_size(ps)?;
    let z = displacements(ps)?;
    let pz_t = displacement_matrix(&z, ps.dim).transpose();
    let kernel = linalg::nullspace(&pz_t, tol.rank);
    if kernel.len() != 1 {
        return Err(GeometryError::KernelDimension(kernel.len()));
    }
    let v = &kernel[0];
    let v = v / v.amax();
    let sum: f64 = v.iter().sum();
    if sum.abs() <= tol.zero {
        return Err(GeometryError::DegenerateSum(sum));
    }
    Ok(v.iter().map(|x| x / sum).collect())
}

/// Weights of an equilibrium unit: the normalized kernel vector, checked for
/// non-zero components and a small residual.
pub fn solve_unit_weights(ps: &PointSet, tol: &Tolerances) -> Result<UnitWeights, GeometryError> {
    let weights = kernel_weights(ps, tol)?;
    for (index, &value) in weights.iter().enumerate() {
        if value.abs() <= tol.zero {
            return Err(GeometryError::ZeroWeight { index, value });
        }
    }
    let z = displacements(ps)?;
    let residual = weighted_displacement_norm(&weights, &z);
    let scale = weights
        .iter()
        .zip(&z)
        .map(|(h, zj)| h.abs() * linalg::norm(zj))
        .sum::<f64>()
        .max(1.0);
    if residual > tol.res * scale {
        return Err(GeometryError::Residual(residual));
    }
    let weight_sum = weights.iter().sum();
    Ok(UnitWeights { weights, weight_sum })
}

/// `|| sum_j h_j z_j ||`.
pub fn weighted_displacement_norm(weights: &[f64], z: &[Point]) -> f64 {
    let dim = z.first().map_or(0, |p| p.len());
    let mut acc = vec![0.0; dim];
    for (h, zj) in weights.iter().zip(z) {
        for (a, v) in acc.iter_mut().zip(zj) {
            *a += h * v;
        }
    }
    linalg::norm(&acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(dim: usize, pts: &[&[f64]]) -> PointSet {
        PointSet::from_slices(dim, pts).unwrap()
    }

    #[test]
    fn affine_independence_examples() {
        let tol = Tolerances::default();
        assert!(affinely_independent(&ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]), &tol));
        assert!(!affinely_independent(&ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]), &tol));
        assert!(affinely_independent(&ps(2, &[&[0.0, 0.0], &[1.0, 1.0]]), &tol));
        // coincident points are rejected without special casing
        assert!(!affinely_independent(&ps(2, &[&[1.0, 1.0], &[1.0, 1.0]]), &tol));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let err = PointSet::new(2, vec![vec![0.0, 0.0], vec![1.0]]).unwrap_err();
        assert_eq!(err, GeometryError::DimensionMismatch { index: 1, found: 1, dim: 2 });
    }

    #[test]
    fn displacement_examples() {
        let z = displacements(&ps(2, &[&[1.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]])).unwrap();
        assert_eq!(z, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let z = displacements(&ps(2, &[&[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(z, vec![vec![0.0, 0.0]]);
        let z = displacements(&ps(2, &[&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(z, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(displacements(&ps(2, &[&[0.0, 0.0]])).is_err());
    }

    #[test]
    fn equilibrium_unit_examples() {
        let tol = Tolerances::default();
        assert!(is_equilibrium_unit(&ps(2, &[&[1.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]]), &tol).unwrap());
        assert!(is_equilibrium_unit(
            &ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
            &tol
        )
        .unwrap());
        assert!(!is_equilibrium_unit(
            &ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]),
            &tol
        )
        .unwrap());
        // apex off the line through the two neighbours: Z independent
        assert!(!is_equilibrium_unit(&ps(2, &[&[0.0, 1.0], &[0.0, 0.0], &[2.0, 0.0]]), &tol).unwrap());
    }

    #[test]
    fn unit_size_is_checked() {
        let tol = Tolerances::default();
        let two = ps(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(
            is_equilibrium_unit(&two, &tol),
            Err(GeometryError::UnitSizeOutOfRange { m: 1, max: 3 })
        );
        let five = ps(
            2,
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[2.0, 3.0]],
        );
        assert!(matches!(
            is_equilibrium_unit(&five, &tol),
            Err(GeometryError::UnitSizeOutOfRange { m: 4, .. })
        ));
    }

    #[test]
    fn midpoint_weights_are_symmetric() {
        let w = solve_unit_weights(&ps(2, &[&[1.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]]), &Tolerances::default())
            .unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-15);
        assert!((w.weights[1] - 0.5).abs() < 1e-15);
        assert!((w.weight_sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn square_unit_weights() {
        // hand row reduction of P(z)^T = [[-1, 0, -1], [0, -1, -1]] gives (1, 1, -1)
        let w = solve_unit_weights(
            &ps(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
            &Tolerances::default(),
        )
        .unwrap();
        let expect = [1.0, 1.0, -1.0];
        for (a, b) in w.weights.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{:?}", w.weights);
        }
    }

    #[test]
    fn apex_on_an_edge_balances_with_a_zero_weight() {
        let tol = Tolerances::default();
        let unit = ps(2, &[&[0.5, 0.5], &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let h = kernel_weights(&unit, &tol).unwrap();
        let z = displacements(&unit).unwrap();
        assert!(weighted_displacement_norm(&h, &z) <= 1e-9);
        assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // (0.5, 0.5) sits on the segment (1,0)-(0,1): barycentric (0, 1/2, 1/2)
        assert!(h[0].abs() < 1e-15 && (h[1] - 0.5).abs() < 1e-15 && (h[2] - 0.5).abs() < 1e-15);
        assert!(!is_equilibrium_unit(&unit, &tol).unwrap());
        assert!(matches!(solve_unit_weights(&unit, &tol), Err(GeometryError::ZeroWeight { index: 0, .. })));
    }

    #[test]
    fn non_units_are_rejected_by_the_solver() {
        let tol = Tolerances::default();
        // independent displacements: trivial kernel
        let err = solve_unit_weights(&ps(2, &[&[0.0, 1.0], &[0.0, 0.0], &[2.0, 0.0]]), &tol).unwrap_err();
        assert_eq!(err, GeometryError::KernelDimension(0));
        // all points coincide: two-dimensional kernel
        let err = solve_unit_weights(&ps(2, &[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]), &tol).unwrap_err();
        assert_eq!(err, GeometryError::KernelDimension(2));
        // apex on a neighbour: one weight is forced to zero
        let err = solve_unit_weights(&ps(2, &[&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]]), &tol).unwrap_err();
        assert!(matches!(err, GeometryError::ZeroWeight { .. }));
    }

    #[test]
    fn outside_apex_gives_negative_weight() {
        // 3 = 2 * 1 - 1 * (-1): barycentric (2, -1)
        let w = solve_unit_weights(&ps(1, &[&[3.0], &[1.0], &[-1.0]]), &Tolerances::default()).unwrap();
        assert!((w.weights[0] - 2.0).abs() < 1e-14 && (w.weights[1] + 1.0).abs() < 1e-14);
    }
}
