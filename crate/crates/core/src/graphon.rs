//! Step graphons, graphon operators and their finite spectra.
//!
//! Functions on [0, 1] are either step functions over the uniform partition
//! `P_1, ..., P_n` (stored as a [`StepVector`] of cell values) or analytic
//! callables. The L² inner product of two step vectors over the same
//! partition carries a `1/n` factor, so a step eigenfunction of a step graphon
//! has values `sqrt(n) * v(i)` for a unit matrix eigenvector `v`.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, Ordering};

/// Orthonormality tolerance for analytic eigenfunctions checked by quadrature.
pub const ANALYTIC_ORTHO_TOL: f64 = 1e-8;

/// Default resolution of the grid used by [`op_norm_distance`].
pub const OP_NORM_GRID: usize = 1024;

/// A real function on [0, 1] evaluated on demand.
#[derive(Clone)]
pub struct AnalyticFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl AnalyticFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        AnalyticFn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }

    /// Cell averages `n * ∫_{P_i} f`.
    pub fn cell_averages(&self, n: usize) -> Vec<f64> {
        linalg::cell_integrals(&|x| self.eval(x), n)
            .into_iter()
            .map(|v| v * n as f64)
            .collect()
    }

    /// `<f, g>` in L²[0, 1] by the global midpoint rule.
    pub fn inner(&self, other: &AnalyticFn) -> f64 {
        linalg::integrate(&|x| self.eval(x) * other.eval(x), linalg::GLOBAL_POINTS)
    }
}

impl fmt::Debug for AnalyticFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticFn(..)")
    }
}

/// The step function `Σ_i values[i] 1_{P_i}` over the uniform `n`-partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepVector {
    values: Vec<f64>,
}

impl StepVector {
    /// Packs agent values as a step function (identity packing).
    pub fn embed(values: Vec<f64>) -> Self {
        StepVector { values }
    }

    pub fn zeros(n: usize) -> Self {
        StepVector { values: alloc::vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[cell_of(x, self.n())]
    }

    /// `<x, y>` in L², i.e. `(1/n) Σ x_i y_i`.
    pub fn inner(&self, other: &StepVector) -> Result<f64> {
        check_len(self.n(), other.n())?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s / self.n() as f64)
    }

    /// Squared L² norm `(1/n) Σ x_i²`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.n().max(1) as f64
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Index of the partition cell containing `x`; the last cell is closed.
pub fn cell_of(x: f64, n: usize) -> usize {
    let i = (x * n as f64).floor();
    if i < 0.0 {
        0
    } else {
        (i as usize).min(n - 1)
    }
}

/// Cell averages of `f`: the projection `N Σ_i <f, 1_{P_i}> 1_{P_i}`.
pub fn project(f: &dyn Fn(f64) -> f64, n: usize) -> StepVector {
    let values = linalg::cell_integrals(f, n)
        .into_iter()
        .map(|v| v * n as f64)
        .collect();
    StepVector { values }
}

/// Packs agent values as a step function.
pub fn embed(values: Vec<f64>) -> StepVector {
    StepVector::embed(values)
}

/// A symmetric `n x n` weight matrix with entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::NotSquare { expected: n, found: entries.ncols() });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[(i, j)];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::EntryOutOfRange { row: i, col: j, value: v });
                }
                if j > i && v != entries[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(AdjacencyMatrix { entries })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    /// Named weight matrices: `constant` (all ones), `cosine` (`cos(π(i-j)/n)`), `zero`.
    pub fn named(name: &str, n: usize) -> Option<Self> {
        let m = match name {
            "constant" => DMatrix::from_element(n, n, 1.0),
            "cosine" => cosine_matrix(n),
            "zero" => DMatrix::zeros(n, n),
            _ => return None,
        };
        Some(AdjacencyMatrix { entries: m })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Applies a simultaneous row/column permutation: `out[i][j] = m[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        AdjacencyMatrix { entries: DMatrix::from_fn(n, n, |i, j| self.entries[(perm[i], perm[j])]) }
    }
}

/// `[cos(π(i-j)/n)]_{ij}`, symmetric by construction.
pub fn cosine_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = (PI * (i as f64 - j as f64) / n as f64).cos();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// The piecewise-constant graphon of an adjacency matrix over the uniform partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon {
    base: AdjacencyMatrix,
}

impl StepGraphon {
    pub fn new(base: AdjacencyMatrix) -> Self {
        StepGraphon { base }
    }

    pub fn partition_count(&self) -> usize {
        self.base.n()
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.base
    }

    /// Kernel value at `(α, β)`: the entry of the cell containing the point.
    pub fn eval(&self, alpha: f64, beta: f64) -> f64 {
        let n = self.partition_count();
        self.base.entries[(cell_of(alpha, n), cell_of(beta, n))]
    }

    /// Graphon operator on a step vector: `(1/N) M_N x` componentwise.
    pub fn apply(&self, x: &StepVector) -> Result<StepVector> {
        let n = self.partition_count();
        check_len(n, x.n())?;
        let m = &self.base.entries;
        let values = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)] * x.values[j]).sum::<f64>() / n as f64)
            .collect();
        Ok(StepVector { values })
    }
}

/// An eigenfunction stored either as step values or as an analytic callable.
#[derive(Debug, Clone)]
pub enum Eigenfunction {
    Step(StepVector),
    Analytic(AnalyticFn),
}

impl Eigenfunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Eigenfunction::Step(s) => s.eval(x),
            Eigenfunction::Analytic(f) => f.eval(x),
        }
    }

    /// Cell averages `n * ∫_{P_i} f`; exact for step functions on the same partition.
    pub fn cell_averages(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Eigenfunction::Step(s) => {
                check_len(n, s.n())?;
                Ok(s.values.clone())
            }
            Eigenfunction::Analytic(f) => Ok(f.cell_averages(n)),
        }
    }

    /// `<self, x>` for a step vector `x`.
    pub fn inner_step(&self, x: &StepVector) -> Result<f64> {
        match self {
            Eigenfunction::Step(s) => s.inner(x),
            Eigenfunction::Analytic(f) => {
                let cells = linalg::cell_integrals(&|t| f.eval(t), x.n());
                Ok(cells.iter().zip(x.values()).map(|(c, v)| c * v).sum())
            }
        }
    }

    /// L² inner product of two eigenfunctions.
    pub fn inner(&self, other: &Eigenfunction) -> Result<f64> {
        match (self, other) {
            (Eigenfunction::Step(a), Eigenfunction::Step(b)) => a.inner(b),
            (Eigenfunction::Analytic(a), Eigenfunction::Analytic(b)) => Ok(a.inner(b)),
            (Eigenfunction::Step(s), a @ Eigenfunction::Analytic(_))
            | (a @ Eigenfunction::Analytic(_), Eigenfunction::Step(s)) => a.inner_step(s),
        }
    }
}

/// Nonzero eigenvalues and orthonormal eigenfunctions of a graphon operator.
#[derive(Debug, Clone)]
pub struct GraphonSpectrum {
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Eigenfunction>,
}

impl GraphonSpectrum {
    pub fn new(eigenvalues: Vec<f64>, eigenfunctions: Vec<Eigenfunction>) -> Result<Self> {
        if eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                found: eigenfunctions.len(),
            });
        }
        Ok(GraphonSpectrum { eigenvalues, eigenfunctions })
    }

    pub fn empty() -> Self {
        GraphonSpectrum { eigenvalues: Vec::new(), eigenfunctions: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Eigenfunction] {
        &self.eigenfunctions
    }

    /// Unit matrix eigenvector `v_l = f_l / sqrt(n)` of a step eigenfunction.
    pub fn unit_vector(&self, l: usize) -> Option<Vec<f64>> {
        match &self.eigenfunctions[l] {
            Eigenfunction::Step(s) => {
                let scale = 1.0 / (s.n() as f64).sqrt();
                Some(s.values.iter().map(|v| v * scale).collect())
            }
            Eigenfunction::Analytic(_) => None,
        }
    }

    /// Gram matrix `<f_k, f_l>` of the eigenfunctions.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let r = self.rank();
        let mut g = DMatrix::zeros(r, r);
        for k in 0..r {
            for l in 0..=k {
                let v = self.eigenfunctions[k].inner(&self.eigenfunctions[l])?;
                g[(k, l)] = v;
                g[(l, k)] = v;
            }
        }
        Ok(g)
    }

    /// Kernel `Σ_l λ_l f_l(α) f_l(β)`.
    pub fn kernel(&self, alpha: f64, beta: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .map(|(l, f)| l * f.eval(alpha) * f.eval(beta))
            .sum()
    }

    /// `Σ_l λ_l <f_l, x> f_l` as a step vector (cell averages for analytic eigenfunctions).
    pub fn apply(&self, x: &StepVector) -> Result<StepVector> {
        let n = x.n();
        let mut out = alloc::vec![0.0; n];
        for (lambda, f) in self.eigenvalues.iter().zip(&self.eigenfunctions) {
            let c = lambda * f.inner_step(x)?;
            let avg = f.cell_averages(n)?;
            for (o, a) in out.iter_mut().zip(avg) {
                *o += c * a;
            }
        }
        Ok(StepVector { values: out })
    }

    /// Keeps only the first `rank` modes.
    pub fn truncated(&self, rank: usize) -> Result<Self> {
        if rank > self.rank() {
            return Err(Error::RankExceeded { requested: rank, available: self.rank() });
        }
        Ok(GraphonSpectrum {
            eigenvalues: self.eigenvalues[..rank].to_vec(),
            eigenfunctions: self.eigenfunctions[..rank].to_vec(),
        })
    }
}

/// Applies a graphon operator given by its spectrum to a step vector.
pub fn apply_graphon(spec: &GraphonSpectrum, x: &StepVector) -> Result<StepVector> {
    spec.apply(x)
}

/// Exact nonzero spectrum of a step graphon: operator eigenvalues `λ/N` with step
/// eigenfunctions `sqrt(N) v` from the matrix eigenpairs `(λ, v)`.
pub fn step_graphon_spectrum(g: &StepGraphon) -> GraphonSpectrum {
    let n = g.partition_count();
    let eig = linalg::symmetric_eigen(g.base.entries(), Ordering::Magnitude);
    let tol = linalg::rank_threshold(&eig.values);
    let scale = (n as f64).sqrt();
    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() > tol {
            eigenvalues.push(lambda / n as f64);
            let values = eig.vectors.column(k).iter().map(|v| v * scale).collect();
            eigenfunctions.push(Eigenfunction::Step(StepVector { values }));
        }
    }
    GraphonSpectrum { eigenvalues, eigenfunctions }
}

/// A graphon with finitely many nonzero eigenvalues and analytic eigenfunctions.
#[derive(Debug, Clone)]
pub struct FiniteRankGraphon {
    spectrum: GraphonSpectrum,
}

impl FiniteRankGraphon {
    /// Validates orthonormality (by quadrature, [`ANALYTIC_ORTHO_TOL`]) and `|λ| <= 1`.
    pub fn new(eigenvalues: Vec<f64>, eigenfunctions: Vec<AnalyticFn>) -> Result<Self> {
        for &l in &eigenvalues {
            if !(l.abs() <= 1.0 + 1e-12) {
                return Err(Error::InvalidParams(alloc::format!(
                    "graphon eigenvalue {l} outside [-1, 1]"
                )));
            }
        }
        let spectrum = GraphonSpectrum::new(
            eigenvalues,
            eigenfunctions.into_iter().map(Eigenfunction::Analytic).collect(),
        )?;
        check_orthonormal(&spectrum.gram()?, ANALYTIC_ORTHO_TOL)?;
        Ok(FiniteRankGraphon { spectrum })
    }

    /// Named limit graphons: `constant` (kernel 1), `cosine` (kernel `cos(π(x-y))`), `zero`.
    pub fn named(name: &str) -> Option<Self> {
        let g = match name {
            "constant" => FiniteRankGraphon::new(
                alloc::vec![1.0],
                alloc::vec![AnalyticFn::new(|_| 1.0)],
            ),
            "cosine" => FiniteRankGraphon::new(alloc::vec![0.5, 0.5], cos_sin_pair()),
            "zero" => FiniteRankGraphon::new(Vec::new(), Vec::new()),
            _ => return None,
        };
        g.ok()
    }

    pub fn rank(&self) -> usize {
        self.spectrum.rank()
    }

    pub fn spectrum(&self) -> &GraphonSpectrum {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.eigenvalues()
    }

    pub fn eigenfunction(&self, l: usize) -> &AnalyticFn {
        match &self.spectrum.eigenfunctions[l] {
            Eigenfunction::Analytic(f) => f,
            Eigenfunction::Step(_) => unreachable!("finite-rank graphons hold analytic eigenfunctions"),
        }
    }

    pub fn kernel(&self, alpha: f64, beta: f64) -> f64 {
        self.spectrum.kernel(alpha, beta)
    }

    /// Samples the kernel at cell midpoints.
    pub fn sample_midpoints(&self, n: usize) -> Result<AdjacencyMatrix> {
        let mid = |i: usize| (i as f64 + 0.5) / n as f64;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel(mid(i), mid(j)).clamp(-1.0, 1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        AdjacencyMatrix::new(m)
    }
}

/// `(sqrt(2) cos πx, sqrt(2) sin πx)`.
pub fn cos_sin_pair() -> Vec<AnalyticFn> {
    let s = core::f64::consts::SQRT_2;
    alloc::vec![
        AnalyticFn::new(move |x| s * (PI * x).cos()),
        AnalyticFn::new(move |x| s * (PI * x).sin()),
    ]
}

/// Estimate of `||M^[N] - M||_op` on the default 1024 x 1024 midpoint grid.
pub fn op_norm_distance(g: &StepGraphon, m: &FiniteRankGraphon) -> f64 {
    op_norm_distance_on_grid(g, m, OP_NORM_GRID)
}

/// Largest singular value of the difference kernel sampled on a `grid x grid`
/// midpoint grid, scaled by `1/grid`.
///
/// The sampled matrix is `U S Uᵀ` with `U = [E | F]` (cell indicators and
/// sampled eigenfunctions) and `S = diag(M_N, -Λ)`, so its nonzero spectrum is
/// that of `Σ^{1/2} Wᵀ S W Σ^{1/2}` where `UᵀU = W Σ Wᵀ`. This has size `N + L`
/// instead of `grid`.
pub fn op_norm_distance_on_grid(g: &StepGraphon, m: &FiniteRankGraphon, grid: usize) -> f64 {
    let n = g.partition_count();
    let l = m.rank();
    let dim = n + l;
    if dim == 0 || grid == 0 {
        return 0.0;
    }
    let pts: Vec<f64> = (0..grid).map(|p| (p as f64 + 0.5) / grid as f64).collect();
    let cells: Vec<usize> = pts.iter().map(|&x| cell_of(x, n.max(1))).collect();
    let samples: Vec<Vec<f64>> = (0..l)
        .map(|k| pts.iter().map(|&x| m.eigenfunction(k).eval(x)).collect())
        .collect();

    let mut gram = DMatrix::zeros(dim, dim);
    for (p, &c) in cells.iter().enumerate() {
        if n > 0 {
            gram[(c, c)] += 1.0;
        }
        for a in 0..l {
            let fa = samples[a][p];
            if n > 0 {
                gram[(c, n + a)] += fa;
                gram[(n + a, c)] += fa;
            }
            for b in 0..a {
                let v = fa * samples[b][p];
                gram[(n + a, n + b)] += v;
                gram[(n + b, n + a)] += v;
            }
            gram[(n + a, n + a)] += fa * fa;
        }
    }

    let mut s = DMatrix::zeros(dim, dim);
    s.view_mut((0, 0), (n, n)).copy_from(g.adjacency().entries());
    for (a, lambda) in m.eigenvalues().iter().enumerate() {
        s[(n + a, n + a)] = -lambda;
    }

    let ge = linalg::symmetric_eigen(&gram, Ordering::Signed);
    let cutoff = 1e-12 * ge.values.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..dim).filter(|&k| ge.values[k] > cutoff).collect();
    if keep.is_empty() {
        return 0.0;
    }
    let mut w = DMatrix::zeros(dim, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let sq = ge.values[k].sqrt();
        w.set_column(c, &(ge.vectors.column(k) * sq));
    }
    let h = w.transpose() * s * &w;
    let h = (&h + h.transpose()) * 0.5;
    let he = linalg::symmetric_eigen(&h, Ordering::Magnitude);
    he.values.first().map_or(0.0, |v| v.abs()) / grid as f64
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

pub(crate) fn check_orthonormal(gram: &DMatrix<f64>, tol: f64) -> Result<()> {
    let r = gram.nrows();
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)] - target).abs() > tol {
                return Err(Error::InvalidParams(alloc::format!(
                    "eigenfunctions not orthonormal: gram[{i}][{j}] = {}",
                    gram[(i, j)]
                )));
            }
        }
    }
    Ok(())
}
