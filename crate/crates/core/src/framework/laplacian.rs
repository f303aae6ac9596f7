use nalgebra::DMatrix;

use super::NominalFramework;

/// `Omega = Deg(W) - W` in [`NominalFramework::node_ids`] order, split at the
/// leader count.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBlocks {
    pub full: DMatrix<f64>,
    pub ll: DMatrix<f64>,
    pub lf: DMatrix<f64>,
    pub fl: DMatrix<f64>,
    pub ff: DMatrix<f64>,
}

pub fn build_laplacian(fw: &NominalFramework) -> LaplacianBlocks {
    let ids = fw.node_ids();
    let n = ids.len();
    let nl = fw.leader_count();
    let mut full = DMatrix::zeros(n, n);
    for (r, &i) in ids.iter().enumerate() {
        let mut diag = 0.0;
        for &(j, w) in fw.in_table(i) {
            let c = fw.index_of(j).expect("edge source is a node");
            full[(r, c)] -= w;
            diag += w;
        }
        full[(r, r)] += diag;
    }
    let nf = n - nl;
    LaplacianBlocks {
        ll: full.view((0, 0), (nl, nl)).into_owned(),
        lf: full.view((0, nl), (nl, nf)).into_owned(),
        fl: full.view((nl, 0), (nf, nl)).into_owned(),
        ff: full.view((nl, nl), (nf, nf)).into_owned(),
        full,
    }
}
