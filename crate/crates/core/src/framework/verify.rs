use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{build_laplacian, compute_layers, FrameworkError, NodeId, NominalFramework};
use crate::geometry::{homogeneous_matrix, Point, Tolerances};
use crate::linalg;

/// `P(chi_bar)`: homogeneous rows `[chi_i^T, 1]` in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineImageBasis {
    pub hom_matrix: DMatrix<f64>,
}

pub fn affine_image_basis(fw: &NominalFramework) -> AffineImageBasis {
    let pts: Vec<Point> = fw.node_ids().iter().map(|id| fw.position(*id).unwrap().clone()).collect();
    AffineImageBasis { hom_matrix: homogeneous_matrix(&pts, fw.dim()) }
}

/// `max_i || sum_j w_ij (chi_i - chi_j) ||`.
pub fn equilibrium_residual(fw: &NominalFramework) -> f64 {
    let d = fw.dim();
    fw.node_ids()
        .iter()
        .map(|&i| {
            let xi = fw.position(i).unwrap();
            let mut acc = vec![0.0; d];
            for &(j, w) in fw.in_table(i) {
                let xj = fw.position(j).unwrap();
                for k in 0..d {
                    acc[k] += w * (xi[k] - xj[k]);
                }
            }
            linalg::norm(&acc)
        })
        .fold(0.0, f64::max)
}

pub fn leaders_affinely_span(fw: &NominalFramework, tol: &Tolerances) -> bool {
    if fw.leader_count() < fw.dim() + 1 {
        return false;
    }
    let pts: Vec<Point> = fw.leaders().iter().map(|id| fw.position(*id).unwrap().clone()).collect();
    linalg::rank(&homogeneous_matrix(&pts, fw.dim()), tol.rank) == fw.dim() + 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub leaders_span: bool,
    pub omega_ff_invertible: bool,
    pub omega_ff_sigma_min: f64,
    pub omega_ff_sigma_max: f64,
    pub equilibrium_residual: f64,
    pub weights_nonzero: bool,
    pub leaders_are_sources: bool,
    pub layerable: bool,
    pub cycle: Option<Vec<NodeId>>,
    pub layers: Option<Vec<Vec<NodeId>>>,
    /// Layer-permuted `Omega_ff` is lower triangular with non-zero diagonal.
    pub layer_triangular: Option<bool>,
    pub max_upper_triangle: Option<f64>,
    pub pass: bool,
    pub notes: Vec<String>,
}

pub fn verify_affine_localizability(fw: &NominalFramework, tol: &Tolerances) -> VerificationReport {
    let mut notes = Vec::new();

    let leaders_span = leaders_affinely_span(fw, tol);
    if fw.leader_count() < fw.dim() + 1 {
        notes.push(format!(
            "only {} leaders, at least {} are needed to span R^{}",
            fw.leader_count(),
            fw.dim() + 1,
            fw.dim()
        ));
    } else if !leaders_span {
        notes.push("leaders do not affinely span the space".into());
    }

    let lap = build_laplacian(fw);
    let (sigma_min, sigma_max) = linalg::singular_extremes(&lap.ff);
    let omega_ff_invertible = lap.ff.is_empty() || sigma_min > tol.rank * sigma_max;
    if !omega_ff_invertible {
        notes.push(format!("Omega_ff is singular (sigma_min = {sigma_min:e})"));
    }

    let residual = equilibrium_residual(fw);
    if residual > tol.res {
        notes.push(format!("equilibrium residual {residual:e} exceeds {:e}", tol.res));
    }

    let mut weights_nonzero = true;
    for (&(to, from), &w) in &fw.edge_map() {
        if w.abs() <= tol.zero {
            weights_nonzero = false;
            notes.push(format!("edge {from} -> {to} has zero weight {w:e}"));
        }
    }

    let leaders_are_sources = fw.leaders().iter().all(|&l| fw.in_table(l).is_empty());
    if !leaders_are_sources {
        notes.push("some leader has in-neighbours".into());
    }

    let (layerable, cycle, layers, layer_triangular, max_upper) = match compute_layers(fw) {
        Ok(layering) => {
            let order: Vec<usize> = layering
                .order()
                .into_iter()
                .filter(|n| !fw.is_leader(*n))
                .map(|n| fw.index_of(n).unwrap() - fw.leader_count())
                .collect();
            let nf = order.len();
            let mut upper: f64 = 0.0;
            let mut diag_ok = true;
            for r in 0..nf {
                diag_ok &= lap.ff[(order[r], order[r])].abs() > tol.zero;
                for c in r + 1..nf {
                    upper = upper.max(lap.ff[(order[r], order[c])].abs());
                }
            }
            let tri = diag_ok && upper == 0.0;
            if !tri {
                notes.push("layer-permuted Omega_ff is not lower triangular with non-zero diagonal".into());
            }
            (true, None, Some(layering.layers), Some(tri), Some(upper))
        }
        Err(e) => {
            notes.push(format!("not layerable: cycle {:?}", e.cycle.iter().map(|n| n.0).collect::<Vec<_>>()));
            (false, Some(e.cycle), None, None, None)
        }
    };

    let pass = leaders_span && omega_ff_invertible && residual <= tol.res && weights_nonzero;
    VerificationReport {
        leaders_span,
        omega_ff_invertible,
        omega_ff_sigma_min: sigma_min,
        omega_ff_sigma_max: sigma_max,
        equilibrium_residual: residual,
        weights_nonzero,
        leaders_are_sources,
        layerable,
        cycle,
        layers,
        layer_triangular,
        max_upper_triangle: max_upper,
        pass,
        notes,
    }
}

/// `p*_i = A chi_i + b`.
pub fn desired_config(fw: &NominalFramework, a: &DMatrix<f64>, b: &[f64]) -> BTreeMap<NodeId, Point> {
    let bv = DVector::from_column_slice(b);
    fw.positions()
        .iter()
        .map(|(&id, chi)| {
            let p = a * DVector::from_column_slice(chi) + &bv;
            (id, p.iter().copied().collect())
        })
        .collect()
}

/// Least-squares fit of an affine map `chi -> A chi + b` to `p`.
pub fn in_affine_image(fw: &NominalFramework, p: &BTreeMap<NodeId, Point>, tol: &Tolerances) -> bool {
    let ids = fw.node_ids();
    let d = fw.dim();
    if ids.iter().any(|id| p.get(id).map(|v| v.len() != d).unwrap_or(true)) {
        return false;
    }
    let basis = affine_image_basis(fw).hom_matrix;
    let target = DMatrix::from_fn(ids.len(), d, |r, c| p[&ids[r]][c]);
    let svd = basis.clone().svd(true, true);
    let Ok(x) = svd.solve(&target, tol.rank * svd.singular_values.max()) else {
        return false;
    };
    let residual = (&basis * x - &target).norm();
    residual <= tol.res * target.norm()
}

/// Solves `Omega_ff p_f = -Omega_fl p_l` for the follower positions.
pub fn localize_followers(
    fw: &NominalFramework,
    leader_positions: &BTreeMap<NodeId, Point>,
) -> Result<BTreeMap<NodeId, Point>, FrameworkError> {
    let d = fw.dim();
    let lap = build_laplacian(fw);
    let mut pl = DMatrix::zeros(fw.leader_count(), d);
    for (r, l) in fw.leaders().iter().enumerate() {
        let p = leader_positions.get(l).ok_or(FrameworkError::UnknownNode(*l))?;
        if p.len() != d {
            return Err(FrameworkError::BadPosition { id: *l, found: p.len(), dim: d });
        }
        for c in 0..d {
            pl[(r, c)] = p[c];
        }
    }
    let rhs = -(&lap.fl * pl);
    let pf = lap
        .ff
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FrameworkError::Singular("Omega_ff is not invertible".into()))?;
    Ok(fw
        .followers()
        .iter()
        .enumerate()
        .map(|(r, &id)| (id, pf.row(r).iter().copied().collect()))
        .collect())
}
