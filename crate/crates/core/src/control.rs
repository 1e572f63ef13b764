//! Centralized and decentralized feedback laws and their mode processes.
//!
//! Both laws share one shape,
//! `u^i = -(2B/R) [Π^⊥ x^i + Σ_l (Π̄^l - Π^⊥) φ^l a_il]`,
//! and differ in where the data come from. The centralized law uses the exact
//! spectrum of the step graphon and all drivers of `Q_N`; the decentralized
//! law uses only limit objects (a finite-rank graphon and a Q-Wiener spec) and
//! the first `d` common drivers. Mode processes
//! `dφ^l = (A + bλ_l - (2B²/R)Π̄^l) φ^l dt + Σ_j c_lj dW^j`
//! are driven by the same increments as the agents.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::graphon::{
    step_graphon_spectrum, AdjacencyMatrix, AnalyticFn, FiniteRankGraphon, GraphonSpectrum,
    StepGraphon,
};
use crate::linalg;
use crate::model::{ModelParams, TimeGrid};
use crate::noise::{NoiseFactorization, NoisePaths, QWienerSpec};
use crate::riccati::{self, RiccatiSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Centralized,
    Decentralized,
}

impl LawKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LawKind::Centralized => "centralized",
            LawKind::Decentralized => "decentralized",
        }
    }
}

/// Affine perturbation `u += E x + o` added on top of a law.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub gain: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl Perturbation {
    pub fn apply(&self, x: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += self.offset[i] + (0..x.len()).map(|j| self.gain[(i, j)] * x[j]).sum::<f64>();
        }
    }
}

/// A feedback law together with everything needed to run its mode processes.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    kind: LawKind,
    params: ModelParams,
    riccati: RiccatiSolution,
    /// `a_il`, n x L.
    cell_averages: DMatrix<f64>,
    /// `c_lj` including the factor σ, L x (drivers used).
    noise_coefficients: DMatrix<f64>,
    initial_modes: Vec<f64>,
    perturbation: Option<Perturbation>,
}

impl ControlLaw {
    /// Centralized law from the full matrices: exact step spectrum of `m`,
    /// Riccati solved on `riccati_grid`, initial modes `(1/sqrt(N)) v_l · x0`.
    pub fn centralized(
        p: &ModelParams,
        m: &AdjacencyMatrix,
        noise: &NoiseFactorization,
        x0: &[f64],
        riccati_grid: &TimeGrid,
    ) -> Result<Self> {
        let spec = step_graphon_spectrum(&StepGraphon::new(m.clone()));
        let sol = riccati::solve_all(p, &spec, riccati_grid)?;
        Self::centralized_from_spectrum(p, &spec, sol, noise, x0)
    }

    /// Centralized law from a precomputed step spectrum and its Riccati solution.
    pub fn centralized_from_spectrum(
        p: &ModelParams,
        spec: &GraphonSpectrum,
        riccati: RiccatiSolution,
        noise: &NoiseFactorization,
        x0: &[f64],
    ) -> Result<Self> {
        let n = x0.len();
        if noise.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: noise.n() });
        }
        if riccati.rank() != spec.rank() {
            return Err(Error::DimensionMismatch { expected: spec.rank(), found: riccati.rank() });
        }
        let rank = spec.rank();
        let sqrt_n = (n as f64).sqrt();
        let mut cell_averages = DMatrix::zeros(n, rank);
        let mut noise_coefficients = DMatrix::zeros(rank, noise.rank());
        let mut initial_modes = Vec::with_capacity(rank);
        for l in 0..rank {
            let v = spec.unit_vector(l).ok_or_else(|| {
                Error::InvalidParams("centralized law needs step eigenfunctions".into())
            })?;
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            for i in 0..n {
                cell_averages[(i, l)] = sqrt_n * v[i];
            }
            for j in 0..noise.rank() {
                let col = noise.factor().column(j);
                let dot: f64 = col.iter().zip(&v).map(|(c, w)| c * w).sum();
                noise_coefficients[(l, j)] = p.sigma * dot / sqrt_n;
            }
            initial_modes.push(v.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>() / sqrt_n);
        }
        Ok(ControlLaw {
            kind: LawKind::Centralized,
            params: *p,
            riccati,
            cell_averages,
            noise_coefficients,
            initial_modes,
            perturbation: None,
        })
    }

    /// Decentralized law built from limit objects only: `a_il = N ∫_{P_i} f_l`,
    /// `c_lj = σ sqrt(λ_j^Q) <f_j^Q, f_l>` for the `d` modes of `limit_q`, and
    /// `φ^l_0 = <x0, f_l>` by quadrature.
    pub fn decentralized(
        p: &ModelParams,
        limit: &FiniteRankGraphon,
        limit_q: &QWienerSpec,
        n: usize,
        x0_profile: &AnalyticFn,
        riccati_grid: &TimeGrid,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("decentralized law needs at least one agent"));
        }
        let riccati = riccati::solve_all(p, limit.spectrum(), riccati_grid)?;
        let rank = limit.rank();
        let d = limit_q.rank();
        let mut cell_averages = DMatrix::zeros(n, rank);
        let mut noise_coefficients = DMatrix::zeros(rank, d);
        let mut initial_modes = Vec::with_capacity(rank);
        for l in 0..rank {
            let f = limit.eigenfunction(l);
            for (i, a) in f.cell_averages(n).into_iter().enumerate() {
                cell_averages[(i, l)] = a;
            }
            for j in 0..d {
                let g = &limit_q.eigenfunctions()[j];
                noise_coefficients[(l, j)] = p.sigma * limit_q.eigenvalues()[j].sqrt() * g.inner(f);
            }
            initial_modes.push(x0_profile.inner(f));
        }
        Ok(ControlLaw {
            kind: LawKind::Decentralized,
            params: *p,
            riccati,
            cell_averages,
            noise_coefficients,
            initial_modes,
            perturbation: None,
        })
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Result<Self> {
        let n = self.n();
        if perturbation.gain.shape() != (n, n) || perturbation.offset.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: perturbation.offset.len() });
        }
        self.perturbation = Some(perturbation);
        Ok(self)
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn riccati(&self) -> &RiccatiSolution {
        &self.riccati
    }

    /// Operator eigenvalues driving the mode drifts.
    pub fn eigenvalues(&self) -> &[f64] {
        self.riccati.eigenvalues()
    }

    pub fn cell_averages(&self) -> &DMatrix<f64> {
        &self.cell_averages
    }

    pub fn noise_coefficients(&self) -> &DMatrix<f64> {
        &self.noise_coefficients
    }

    pub fn initial_modes(&self) -> &[f64] {
        &self.initial_modes
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    /// Number of agents the law is built for.
    pub fn n(&self) -> usize {
        self.cell_averages.nrows()
    }

    pub fn rank(&self) -> usize {
        self.cell_averages.ncols()
    }

    /// Riccati steps per step of `sim`.
    pub fn stride(&self, sim: &TimeGrid) -> Result<usize> {
        self.riccati.grid().subdivision_of(sim)
    }

    /// Drift coefficient of mode `l` at Riccati node `r`.
    pub fn mode_drift(&self, l: usize, r: usize) -> f64 {
        self.params.a + self.params.b_coupling * self.eigenvalues()[l]
            - self.params.feedback_gain() * self.riccati.mode(l)[r]
    }

    /// `-(2B/R)[Π^⊥ x_i + Σ_l (Π̄^l - Π^⊥) φ^l a_il]` at Riccati node `r`, without perturbation.
    pub fn feedback(&self, r: usize, i: usize, x_i: f64, phi: &[f64]) -> Result<f64> {
        if r > self.riccati.grid().steps() {
            return Err(Error::IndexOutOfRange { index: r, len: self.riccati.grid().node_count() });
        }
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, len: self.n() });
        }
        if phi.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: phi.len() });
        }
        let perp = self.riccati.perp()[r];
        let mut acc = perp * x_i;
        for (l, &ph) in phi.iter().enumerate() {
            acc += (self.riccati.mode(l)[r] - perp) * ph * self.cell_averages[(i, l)];
        }
        Ok(-2.0 * self.params.b_control / self.params.r * acc)
    }

    /// Controls of all agents at simulation node `k`, perturbation included.
    pub fn control_vector(&self, k: usize, x: &[f64], modes: &ModeTrajectory) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        let r = k * modes.stride;
        let phi = modes.at(k)?;
        let mut u = (0..x.len())
            .map(|i| self.feedback(r, i, x[i], &phi))
            .collect::<Result<Vec<_>>>()?;
        if let Some(pert) = &self.perturbation {
            pert.apply(x, &mut u);
        }
        Ok(u)
    }
}

/// One Euler-Maruyama step of a mode process:
/// `φ + (A + bλ - (2B²/R)Π) φ dt + noise_increment`.
#[inline]
pub fn mode_step(p: &ModelParams, lambda: f64, pi: f64, phi: f64, dt: f64, noise_increment: f64) -> f64 {
    phi + (p.a + p.b_coupling * lambda - p.feedback_gain() * pi) * phi * dt + noise_increment
}

/// Centralized mode step; `lambda` is the operator eigenvalue `λ^{M_N}/N`.
pub fn centralized_mode_step(p: &ModelParams, lambda: f64, pi: f64, phi: f64, dt: f64, noise_increment: f64) -> f64 {
    mode_step(p, lambda, pi, phi, dt, noise_increment)
}

/// Decentralized mode step; `lambda` is a limit graphon eigenvalue.
pub fn decentralized_mode_step(p: &ModelParams, lambda: f64, pi: f64, phi: f64, dt: f64, noise_increment: f64) -> f64 {
    mode_step(p, lambda, pi, phi, dt, noise_increment)
}

/// Mode processes `φ^l` at every node of a simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    grid: TimeGrid,
    stride: usize,
    /// `values[l][k]`.
    values: Vec<Vec<f64>>,
    coefficients: DMatrix<f64>,
}

impl ModeTrajectory {
    /// Integrates the law's mode processes along `noise`. Node `k + 1` uses the
    /// increments of step `k` only.
    pub fn integrate(law: &ControlLaw, noise: &NoisePaths) -> Result<Self> {
        let grid = *noise.grid();
        let stride = law.stride(&grid)?;
        let used = law.noise_coefficients.ncols();
        if used > noise.driver_count() {
            return Err(Error::RankExceeded { requested: used, available: noise.driver_count() });
        }
        let dt = grid.dt();
        let p = &law.params;
        let values = (0..law.rank())
            .map(|l| {
                let lambda = law.eigenvalues()[l];
                let pi = law.riccati.mode(l);
                let mut path = Vec::with_capacity(grid.node_count());
                let mut phi = law.initial_modes[l];
                path.push(phi);
                for k in 0..grid.steps() {
                    let inc: f64 = (0..used)
                        .map(|j| law.noise_coefficients[(l, j)] * noise.driver_increment(j, k))
                        .sum();
                    phi = mode_step(p, lambda, pi[k * stride], phi, dt, inc);
                    path.push(phi);
                }
                path
            })
            .collect();
        Ok(ModeTrajectory { grid, stride, values, coefficients: law.noise_coefficients.clone() })
    }

    /// Wraps precomputed mode values (`values[l][k]`) on `grid`.
    pub fn from_values(law: &ControlLaw, grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        let stride = law.stride(&grid)?;
        if values.len() != law.rank() {
            return Err(Error::DimensionMismatch { expected: law.rank(), found: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| v.len() != grid.node_count()) {
            return Err(Error::DimensionMismatch { expected: grid.node_count(), found: bad.len() });
        }
        Ok(ModeTrajectory { grid, stride, values, coefficients: law.noise_coefficients.clone() })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// All modes at node `k`.
    pub fn at(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.grid.steps() {
            return Err(Error::IndexOutOfRange { index: k, len: self.grid.node_count() });
        }
        Ok(self.values.iter().map(|v| v[k]).collect())
    }
}

/// Centralized control of agent `i` at simulation node `t_index`.
pub fn centralized_control(law: &ControlLaw, t_index: usize, x_i: f64, modes: &ModeTrajectory, i: usize) -> Result<f64> {
    if law.kind != LawKind::Centralized {
        return Err(Error::WrongLawKind { expected: "centralized" });
    }
    law.feedback(t_index * modes.stride, i, x_i, &modes.at(t_index)?)
}

/// Decentralized control of agent `i` at simulation node `t_index`.
pub fn decentralized_control(law: &ControlLaw, t_index: usize, x_i: f64, modes: &ModeTrajectory, i: usize) -> Result<f64> {
    if law.kind != LawKind::Decentralized {
        return Err(Error::WrongLawKind { expected: "decentralized" });
    }
    law.feedback(t_index * modes.stride, i, x_i, &modes.at(t_index)?)
}

/// Default agent initial states: the profile sampled at cell midpoints.
pub fn midpoint_states(profile: &AnalyticFn, n: usize) -> Vec<f64> {
    (0..n).map(|i| profile.eval((i as f64 + 0.5) / n as f64)).collect()
}

/// `<f_j^Q, f_l^M>` for all pairs, by the global midpoint rule.
pub fn cross_inner_products(limit: &FiniteRankGraphon, limit_q: &QWienerSpec) -> DMatrix<f64> {
    DMatrix::from_fn(limit_q.rank(), limit.rank(), |j, l| {
        linalg::integrate(
            &|x| limit_q.eigenfunctions()[j].eval(x) * limit.eigenfunction(l).eval(x),
            linalg::GLOBAL_POINTS,
        )
    })
}
