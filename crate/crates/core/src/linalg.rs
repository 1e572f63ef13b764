//! Dense symmetric eigensolver wrappers, rank detection and midpoint quadrature.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Quadrature nodes per partition cell for analytic functions.
pub const POINTS_PER_CELL: usize = 64;

/// Node count of the global midpoint rule used for inner products of analytic functions.
pub const GLOBAL_POINTS: usize = 64 * 1024;

/// Relative tolerance for treating two eigenvalues as one cluster.
pub const CLUSTER_RTOL: f64 = 1e-8;

/// Eigenpairs of a symmetric matrix, columns of `vectors` are unit eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Descending absolute value, near-ties broken by descending signed value.
    Magnitude,
    /// Descending signed value.
    Signed,
}

/// Full eigendecomposition with deterministic ordering and sign convention
/// (largest-magnitude component of each eigenvector positive).
pub fn symmetric_eigen(m: &DMatrix<f64>, ordering: Ordering) -> EigenPairs {
    let n = m.nrows();
    if n == 0 {
        return EigenPairs { values: Vec::new(), vectors: DMatrix::zeros(0, 0) };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    let vals = &eig.eigenvalues;
    match ordering {
        Ordering::Signed => idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a])),
        Ordering::Magnitude => {
            idx.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
            let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n
                    && (vals[idx[start]].abs() - vals[idx[end]].abs()).abs() <= 1e-12 * scale
                {
                    end += 1;
                }
                idx[start..end].sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
                start = end;
            }
        }
    }
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &k) in idx.iter().enumerate() {
        values.push(vals[k]);
        let mut v = eig.eigenvectors.column(k).into_owned();
        fix_sign(&mut v);
        vectors.set_column(col, &v);
    }
    EigenPairs { values, vectors }
}

/// Flip `v` so that its largest-magnitude component (first one on near-ties) is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-12)) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// A value counts as nonzero iff `|v| > 1e-10 * max(1, max|v|)`.
pub fn rank_threshold(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    1e-10 * max.max(1.0)
}

/// Groups consecutive indices of `values` whose relative gap is below [`CLUSTER_RTOL`].
pub fn clusters(values: &[f64]) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() {
            let a = values[end - 1];
            let b = values[end];
            let scale = a.abs().max(b.abs());
            if (a - b).abs() <= CLUSTER_RTOL * scale {
                end += 1;
            } else {
                break;
            }
        }
        out.push(start..end);
        start = end;
    }
    out
}

/// Integrals of `f` over each cell of the uniform `n`-partition of [0, 1],
/// by the composite midpoint rule with [`POINTS_PER_CELL`] nodes per cell.
pub fn cell_integrals(f: &dyn Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let h = 1.0 / (n * POINTS_PER_CELL) as f64;
    (0..n)
        .map(|i| {
            let base = i * POINTS_PER_CELL;
            (0..POINTS_PER_CELL)
                .map(|p| f((base + p) as f64 * h + 0.5 * h))
                .sum::<f64>()
                * h
        })
        .collect()
}

/// Composite midpoint rule for `∫_0^1 f` with `points` nodes.
pub fn integrate(f: &dyn Fn(f64) -> f64, points: usize) -> f64 {
    let h = 1.0 / points as f64;
    (0..points).map(|p| f((p as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Orthogonal Procrustes: the `p x m` matrix `U` with orthonormal rows
/// (`p <= m`) maximizing `<U, C>_F`.
pub fn procrustes(c: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, m) = c.shape();
    debug_assert!(p <= m);
    if p == 0 {
        return DMatrix::zeros(0, m);
    }
    // Work with the m x p transpose so the thin SVD has square U factor.
    let svd = c.transpose().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    (u * v_t).transpose()
}

/// Extends a `p x m` matrix with orthonormal rows to an `m x m` orthogonal matrix.
pub fn complete_orthonormal_rows(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, m) = rows.shape();
    let mut basis: Vec<DVector<f64>> = (0..p).map(|r| rows.row(r).transpose()).collect();
    for e in 0..m {
        if basis.len() == m {
            break;
        }
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(m, m);
    for (r, b) in basis.iter().enumerate() {
        out.set_row(r, &b.transpose());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnitude_ordering_breaks_ties_by_sign() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = symmetric_eigen(&m, Ordering::Magnitude);
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvectors_have_positive_dominant_component() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = symmetric_eigen(&m, Ordering::Signed);
        for c in 0..3 {
            let v = e.vectors.column(c);
            let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |acc, (i, x)| {
                if x.abs() > acc.1 * (1.0 + 1e-12) { (i, x.abs()) } else { acc }
            });
            assert!(v[imax] > 0.0);
        }
    }

    #[test]
    fn clusters_group_near_equal_values() {
        let c = clusters(&[8.0, 8.0 + 1e-12, 3.0, 1.0, 1.0]);
        assert_eq!(c, alloc::vec![0..2, 2..3, 3..5]);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let th = 0.3f64;
        let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let u = procrustes(&r);
        assert!((u - r).abs().max() < 1e-12);
    }

    #[test]
    fn completion_is_orthogonal() {
        let s = 0.5f64.sqrt();
        let rows = DMatrix::from_row_slice(1, 3, &[s, s, 0.0]);
        let full = complete_orthonormal_rows(&rows);
        let gram = &full * full.transpose();
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!((full.row(0) - rows.row(0)).abs().max() < 1e-15);
    }

    #[test]
    fn midpoint_rule_is_exact_for_linear() {
        let v = integrate(&|x| 3.0 * x + 1.0, 10);
        assert!((v - 2.5).abs() < 1e-14);
        let cells = cell_integrals(&|_| 2.0, 4);
        for c in cells {
            assert!((c - 0.5).abs() < 1e-14);
        }
    }
}
