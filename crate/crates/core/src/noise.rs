//! Correlated Brownian drivers.
//!
//! A correlation matrix `Q_N` is factored by eigendecomposition as
//! `Q_N = C₁ C₁ᵀ` with `C₁ = [sqrt(λ_1) v_1, ..., sqrt(λ_d) v_d]`, so the
//! correlated motions are `W̃ = C₁ W` for `d = rank Q_N` independent drivers.
//! Rank-deficient matrices are handled directly: null directions get no driver.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graphon::{check_orthonormal, AnalyticFn, ANALYTIC_ORTHO_TOL};
use crate::linalg::{self, Ordering};
use crate::model::TimeGrid;

/// Relative threshold below which an eigenvalue of `Q_N` counts as zero,
/// and below whose negative an eigenvalue makes the matrix indefinite.
pub const RANK_RTOL: f64 = 1e-10;

/// A symmetric correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Checks symmetry, unit diagonal and `|ρ_ij| <= 1`. Definiteness is
    /// checked by [`factor_correlation`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::NotSquare { expected: n, found: entries.ncols() });
        }
        for i in 0..n {
            let d = entries[(i, i)];
            if !((d - 1.0).abs() <= 1e-12) {
                return Err(Error::NotUnitDiagonal { index: i, value: d });
            }
            for j in 0..n {
                let v = entries[(i, j)];
                if !(v.abs() <= 1.0 + 1e-12) {
                    return Err(Error::EntryOutOfRange { row: i, col: j, value: v });
                }
                if j > i && v != entries[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(CorrelationMatrix { entries })
    }

    /// Named correlations: `identity`, `cosine` (`cos(π(i-j)/n)`, rank 2) and
    /// `double-constant` (unit diagonal, `1 - 1/(2n)` elsewhere).
    pub fn named(name: &str, n: usize) -> Option<Self> {
        let m = match name {
            "identity" => DMatrix::identity(n, n),
            "cosine" => crate::graphon::cosine_matrix(n),
            "double-constant" => {
                let off = 1.0 - 1.0 / (2.0 * n as f64);
                DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { off })
            }
            _ => return None,
        };
        Some(CorrelationMatrix { entries: m })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// All eigenvalues in descending order.
    pub fn spectrum(&self) -> Vec<f64> {
        linalg::symmetric_eigen(&self.entries, Ordering::Signed).values
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        CorrelationMatrix { entries: DMatrix::from_fn(n, n, |i, j| self.entries[(perm[i], perm[j])]) }
    }
}

/// `Q_N = C₁ C₁ᵀ` with the positive eigenpairs of `Q_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFactorization {
    factor: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl NoiseFactorization {
    /// A factorization with no drivers: all correlated paths vanish.
    pub fn zero(n: usize) -> Self {
        NoiseFactorization {
            factor: DMatrix::zeros(n, 0),
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(n, 0),
        }
    }

    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// Number of independent drivers `d_N`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The `n x d_N` factor `C₁`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Maps independent driver values to correlated ones: `C₁ w`.
    pub fn correlate(&self, drivers: &[f64]) -> Vec<f64> {
        let d = self.rank();
        (0..self.n())
            .map(|i| (0..d).map(|j| self.factor[(i, j)] * drivers[j]).sum())
            .collect()
    }
}

/// Eigendecomposition-based factorization of a nonnegative definite correlation matrix.
pub fn factor_correlation(q: &CorrelationMatrix) -> Result<NoiseFactorization> {
    let n = q.n();
    let eig = linalg::symmetric_eigen(&q.entries, Ordering::Signed);
    let max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = RANK_RTOL * max;
    if let Some(&min) = eig.values.last() {
        if min < -tol {
            return Err(Error::Indefinite { eigenvalue: min, max });
        }
        if min < 0.0 {
            log::warn!("clipping eigenvalue {min:e} of correlation matrix to zero");
        }
    }
    let rank = eig.values.iter().take_while(|&&v| v > tol).count();
    let mut factor = DMatrix::zeros(n, rank);
    let mut eigenvectors = DMatrix::zeros(n, rank);
    for j in 0..rank {
        let v = eig.vectors.column(j);
        eigenvectors.set_column(j, &v);
        factor.set_column(j, &(v * eig.values[j].sqrt()));
    }
    Ok(NoiseFactorization { factor, eigenvalues: eig.values[..rank].to_vec(), eigenvectors })
}

/// A finite-rank Q-Wiener process `W^Q = Σ_j sqrt(λ_j) W^j f_j` on L²[0, 1].
#[derive(Debug, Clone)]
pub struct QWienerSpec {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<AnalyticFn>,
}

impl QWienerSpec {
    /// Requires positive eigenvalues and orthonormal eigenfunctions (by quadrature).
    pub fn new(eigenvalues: Vec<f64>, eigenfunctions: Vec<AnalyticFn>) -> Result<Self> {
        if eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                found: eigenfunctions.len(),
            });
        }
        if let Some(v) = eigenvalues.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(alloc::format!(
                "Q-Wiener eigenvalues must be positive, got {v}"
            )));
        }
        let d = eigenvalues.len();
        let mut gram = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = eigenfunctions[i].inner(&eigenfunctions[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        check_orthonormal(&gram, ANALYTIC_ORTHO_TOL)?;
        Ok(QWienerSpec { eigenvalues, eigenfunctions })
    }

    /// `cosine-kernel` (kernel `cos(π(x-y))`: λ = ½, ½ with `sqrt(2) cos πx`,
    /// `sqrt(2) sin πx`) and `constant-kernel` (kernel 1: λ = 1 with `f = 1`).
    pub fn named(name: &str) -> Option<Self> {
        let spec = match name {
            "cosine-kernel" => QWienerSpec::new(alloc::vec![0.5, 0.5], crate::graphon::cos_sin_pair()),
            "constant-kernel" => {
                QWienerSpec::new(alloc::vec![1.0], alloc::vec![AnalyticFn::new(|_| 1.0)])
            }
            _ => return None,
        };
        spec.ok()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[AnalyticFn] {
        &self.eigenfunctions
    }

    /// Keeps the first `d` modes.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d > self.rank() {
            return Err(Error::RankExceeded { requested: d, available: self.rank() });
        }
        Ok(QWienerSpec {
            eigenvalues: self.eigenvalues[..d].to_vec(),
            eigenfunctions: self.eigenfunctions[..d].to_vec(),
        })
    }

    /// Kernel `Σ_j λ_j f_j(x) f_j(y)`.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .map(|(l, f)| l * f.eval(x) * f.eval(y))
            .sum()
    }
}

/// Independent and correlated Brownian paths on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePaths {
    grid: TimeGrid,
    /// `independent[j][k] = W^j(t_k)`.
    independent: Vec<Vec<f64>>,
    /// `correlated[i][k] = Σ_j C₁[i][j] W^j(t_k)`.
    correlated: Vec<Vec<f64>>,
    seed: u64,
    replica: u64,
}

impl NoisePaths {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn driver_count(&self) -> usize {
        self.independent.len()
    }

    pub fn agent_count(&self) -> usize {
        self.correlated.len()
    }

    pub fn independent(&self) -> &[Vec<f64>] {
        &self.independent
    }

    pub fn correlated(&self) -> &[Vec<f64>] {
        &self.correlated
    }

    /// `W^j(t_{k+1}) - W^j(t_k)`.
    #[inline]
    pub fn driver_increment(&self, j: usize, k: usize) -> f64 {
        self.independent[j][k + 1] - self.independent[j][k]
    }

    /// `W̃^i(t_{k+1}) - W̃^i(t_k)`.
    #[inline]
    pub fn correlated_increment(&self, i: usize, k: usize) -> f64 {
        self.correlated[i][k + 1] - self.correlated[i][k]
    }
}

/// Samples one replica (replica 0) of the driver paths.
pub fn sample_noise(f: &NoiseFactorization, grid: TimeGrid, seed: u64) -> NoisePaths {
    sample_noise_replica(f, grid, seed, 0)
}

/// Generator for driver `j` of `replica`: ChaCha8 keyed by `(seed, replica)` on stream `j`,
/// so drivers and replicas never share or shift each other's draws.
pub fn driver_rng(seed: u64, replica: u64, driver: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replica.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(driver as u64);
    rng
}

/// Samples driver paths with i.i.d. `N(0, dt)` increments and forms `W̃ = C₁ W` exactly.
pub fn sample_noise_replica(
    f: &NoiseFactorization,
    grid: TimeGrid,
    seed: u64,
    replica: u64,
) -> NoisePaths {
    let nodes = grid.node_count();
    let sd = grid.dt().sqrt();
    let independent: Vec<Vec<f64>> = (0..f.rank())
        .map(|j| {
            let mut rng = driver_rng(seed, replica, j);
            let mut path = Vec::with_capacity(nodes);
            let mut w = 0.0;
            path.push(w);
            for _ in 1..nodes {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += sd * z;
                path.push(w);
            }
            path
        })
        .collect();
    let correlated = (0..f.n())
        .map(|i| {
            (0..nodes)
                .map(|k| (0..f.rank()).map(|j| f.factor[(i, j)] * independent[j][k]).sum())
                .collect()
        })
        .collect();
    NoisePaths { grid, independent, correlated, seed, replica }
}

/// The two discrepancy terms between `Q_N` and a Q-Wiener limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// `Σ_{j<=d} ||sqrt(λ_j^Q) f_j^Q - sqrt(λ_j^{Q_N}) S_{v_j}||²` after alignment.
    pub term1: f64,
    /// `(1/N) Σ_{j>d} λ_j^{Q_N}`.
    pub term2: f64,
}

/// A factorization whose first `d` drivers are paired with the modes of a Q-Wiener spec.
#[derive(Debug, Clone)]
pub struct AlignedFactorization {
    pub factorization: NoiseFactorization,
    pub discrepancy: Discrepancy,
}

/// Rotates the drivers of `f` within each eigenvalue cluster so that the first
/// `spec.rank()` columns of `C₁`, read as step functions, are as close as possible
/// in L² to `sqrt(λ_j^Q) f_j^Q`.
///
/// Pairing is by position in the descending orderings. Inside a cluster of
/// `Q_N` (relative eigenvalue gap below 1e-8) the optimal orthogonal mixing is
/// the Procrustes solution of the cross inner-product matrix, which also fixes
/// signs. `C₁ C₁ᵀ` is unchanged.
pub fn align_factorization(f: &NoiseFactorization, spec: &QWienerSpec) -> Result<AlignedFactorization> {
    let n = f.n();
    let d = spec.rank();
    if d > f.rank() {
        return Err(Error::RankExceeded { requested: d, available: f.rank() });
    }
    let targets: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let s = spec.eigenvalues[j].sqrt();
            let g = &spec.eigenfunctions[j];
            linalg::cell_integrals(&|x| s * g.eval(x), n)
        })
        .collect();

    let mut factor = f.factor.clone();
    let mut eigenvectors = f.eigenvectors.clone();
    for range in linalg::clusters(&f.eigenvalues) {
        if range.start >= d {
            break;
        }
        let m = range.len();
        let p = range.end.min(d) - range.start;
        let mut cross = DMatrix::zeros(p, m);
        for a in 0..p {
            for b in 0..m {
                let col = f.factor.column(range.start + b);
                cross[(a, b)] = targets[range.start + a].iter().zip(col.iter()).map(|(g, h)| g * h).sum();
            }
        }
        let rows = linalg::procrustes(&cross);
        let rot = linalg::complete_orthonormal_rows(&rows);
        let block = f.factor.columns(range.start, m) * rot.transpose();
        factor.columns_mut(range.start, m).copy_from(&block);
        let vblock = f.eigenvectors.columns(range.start, m) * rot.transpose();
        eigenvectors.columns_mut(range.start, m).copy_from(&vblock);
    }

    let mut term1 = 0.0;
    for j in 0..d {
        let s = spec.eigenvalues[j].sqrt();
        let g = &spec.eigenfunctions[j];
        let col = factor.column(j);
        term1 += squared_step_distance(&|x| s * g.eval(x), col.as_slice());
    }
    let term2 = f.eigenvalues[d..].iter().sum::<f64>() / n as f64;
    let factorization = NoiseFactorization { factor, eigenvalues: f.eigenvalues.clone(), eigenvectors };
    Ok(AlignedFactorization { factorization, discrepancy: Discrepancy { term1, term2 } })
}

/// `||g - Σ_i h_i 1_{P_i}||²` by the per-cell midpoint rule.
fn squared_step_distance(g: &dyn Fn(f64) -> f64, h: &[f64]) -> f64 {
    let n = h.len();
    let pts = linalg::POINTS_PER_CELL;
    let w = 1.0 / (n * pts) as f64;
    let mut total = 0.0;
    for (i, &hi) in h.iter().enumerate() {
        for p in 0..pts {
            let x = ((i * pts + p) as f64 + 0.5) * w;
            let e = g(x) - hi;
            total += e * e;
        }
    }
    total * w
}

/// Discrepancy between `Q_N` and a Q-Wiener limit, with drivers aligned as in
/// [`align_factorization`].
pub fn assumption2_discrepancy(q: &CorrelationMatrix, spec: &QWienerSpec) -> Result<Discrepancy> {
    let f = factor_correlation(q)?;
    Ok(align_factorization(&f, spec)?.discrepancy)
}

/// `sqrt(2) cos(π x)`-type helpers used in tests and examples.
pub fn cosine_mode(x: f64) -> f64 {
    core::f64::consts::SQRT_2 * (PI * x).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factorization() {
        let q = CorrelationMatrix::named("identity", 4).unwrap();
        let f = factor_correlation(&q).unwrap();
        assert_eq!(f.rank(), 4);
        for v in f.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_and_malformed() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(factor_correlation(&CorrelationMatrix::new(m).unwrap()).is_ok());
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
        let err = factor_correlation(&CorrelationMatrix::new(m).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Indefinite { .. }));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(CorrelationMatrix::new(m), Err(Error::NotUnitDiagonal { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(CorrelationMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn cosine_matrix_has_two_drivers() {
        let n = 16;
        let f = factor_correlation(&CorrelationMatrix::named("cosine", n).unwrap()).unwrap();
        assert_eq!(f.rank(), 2);
        for v in f.eigenvalues() {
            assert!((v - 8.0).abs() < 1e-10 * 8.0);
        }
    }

    #[test]
    fn double_constant_spectrum() {
        let n = 16;
        let nf = n as f64;
        let f = factor_correlation(&CorrelationMatrix::named("double-constant", n).unwrap()).unwrap();
        assert_eq!(f.rank(), n);
        let top = 1.0 + (nf - 1.0) * (1.0 - 1.0 / (2.0 * nf));
        assert!((f.eigenvalues()[0] - top).abs() < 1e-12 * top);
        for v in &f.eigenvalues()[1..] {
            assert!((v - 1.0 / (2.0 * nf)).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_rank_gives_zero_paths() {
        let f = NoiseFactorization::zero(3);
        let p = sample_noise(&f, TimeGrid::new(1.0, 10).unwrap(), 7);
        assert_eq!(p.driver_count(), 0);
        assert!(p.correlated().iter().all(|row| row.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn adding_drivers_does_not_perturb_existing_ones() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let f2 = factor_correlation(&CorrelationMatrix::named("identity", 2).unwrap()).unwrap();
        let f5 = factor_correlation(&CorrelationMatrix::named("identity", 5).unwrap()).unwrap();
        let p2 = sample_noise(&f2, grid, 11);
        let p5 = sample_noise(&f5, grid, 11);
        assert_eq!(p2.independent()[0], p5.independent()[0]);
        assert_eq!(p2.independent()[1], p5.independent()[1]);
    }

    #[test]
    fn alignment_rank_check() {
        let q = CorrelationMatrix::named("cosine", 8).unwrap();
        let spec = QWienerSpec::new(
            alloc::vec![0.4, 0.3, 0.3],
            alloc::vec![
                AnalyticFn::new(|_| 1.0),
                AnalyticFn::new(cosine_mode),
                AnalyticFn::new(|x| core::f64::consts::SQRT_2 * (2.0 * PI * x).cos()),
            ],
        )
        .unwrap();
        assert!(matches!(
            assumption2_discrepancy(&q, &spec),
            Err(Error::RankExceeded { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn alignment_preserves_factorization() {
        let n = 32;
        let q = CorrelationMatrix::named("cosine", n).unwrap();
        let f = factor_correlation(&q).unwrap();
        let spec = QWienerSpec::named("cosine-kernel").unwrap();
        let aligned = align_factorization(&f, &spec).unwrap().factorization;
        let diff = (aligned.reconstruct() - q.entries()).abs().max();
        assert!(diff < 1e-12, "{diff}");
    }
}
