//! Small dense helpers shared by the geometry, framework and controller code.
//!
//! Rank and kernel decisions go through a pivoted row reduction with a
//! threshold relative to the largest entry of the input; everything else is
//! delegated to `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Reduced row echelon form together with its pivot columns.
#[derive(Debug, Clone)]
pub struct RowEchelon {
    pub reduced: DMatrix<f64>,
    pub pivots: Vec<usize>,
}

impl RowEchelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Gauss-Jordan elimination with partial (row) pivoting.
///
/// A column is treated as pivot-free when its best remaining candidate is not
/// larger than `rel_tol * max|m_ij|`.
pub fn row_reduce(m: &DMatrix<f64>, rel_tol: f64) -> RowEchelon {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = rel_tol * scale;
    let mut pivots = Vec::new();
    if scale == 0.0 {
        return RowEchelon { reduced: a, pivots };
    }

    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let (best, best_val) = (row..rows)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_val <= threshold {
            for r in row..rows {
                a[(r, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for c in col..cols {
            a[(row, c)] /= p;
        }
        for r in 0..rows {
            if r == row {
                continue;
            }
            let f = a[(r, col)];
            if f != 0.0 {
                for c in col..cols {
                    let v = a[(row, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    RowEchelon { reduced: a, pivots }
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    row_reduce(m, rel_tol).rank()
}

/// Basis of the right kernel `{v : m v = 0}`, one vector per free column.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    let rre = row_reduce(m, rel_tol);
    let free: Vec<usize> = (0..cols).filter(|c| !rre.pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = DVector::zeros(cols);
            v[f] = 1.0;
            for (r, &p) in rre.pivots.iter().enumerate() {
                v[p] = -rre.reduced[(r, f)];
            }
            v
        })
        .collect()
}

/// `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest singular value (spectral norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Smallest and largest singular values.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    (lo, hi)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
