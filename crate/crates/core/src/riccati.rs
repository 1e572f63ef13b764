//! Scalar Riccati equations of the spectral decomposition and a dense matrix oracle.
//!
//! Each spectral mode with operator eigenvalue `λ` solves
//! `dΠ/dt + (2A + 2bλ)Π - (2B²/R)Π² + ½Q(1 - Γλ)² = 0`, `Π(T) = Q_T/2`,
//! and the kernel complement is the `λ = 0` instance. All equations are
//! integrated with classical RK4 in reversed time `s = T - t`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::graphon::{AdjacencyMatrix, GraphonSpectrum};
use crate::model::{ModelParams, TimeGrid};

/// Eigenvalues closer than this share one solve in [`solve_all`].
pub const DEDUP_TOL: f64 = 1e-14;

/// Values above this multiple of the comparison bound are reported as blow-up.
pub const BLOW_UP_FACTOR: f64 = 10.0;

/// Coefficients of `dΠ/ds = cΠ - kΠ² + g`.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    c: f64,
    k: f64,
    g: f64,
}

impl Coefficients {
    fn new(p: &ModelParams, lambda: f64) -> Self {
        let e = 1.0 - p.gamma * lambda;
        Coefficients {
            c: 2.0 * p.a + 2.0 * p.b_coupling * lambda,
            k: p.feedback_gain(),
            g: 0.5 * p.q * e * e,
        }
    }

    #[inline]
    fn rhs(&self, v: f64) -> f64 {
        self.c * v - self.k * v * v + self.g
    }
}

/// Time-gridded values of `Π^⊥` and of each mode `Π̄^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    grid: TimeGrid,
    perp: Vec<f64>,
    modes: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl RiccatiSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `Π^⊥` at every node.
    pub fn perp(&self) -> &[f64] {
        &self.perp
    }

    /// `Π̄^l` at every node.
    pub fn mode(&self, l: usize) -> &[f64] {
        &self.modes[l]
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    /// The eigenvalue each mode was solved with.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.modes.len()
    }
}

/// Solves the mode equation for operator eigenvalue `lambda`; entry `k` is `Π(t_k)`.
pub fn solve_mode_riccati(p: &ModelParams, lambda: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    p.validate()?;
    if !(lambda.abs() <= 1.0 + 1e-12) {
        return Err(Error::InvalidParams(alloc::format!("eigenvalue {lambda} outside [-1, 1]")));
    }
    let co = Coefficients::new(p, lambda);
    let steps = grid.steps();
    let h = grid.dt();
    let mut values = alloc::vec![0.0; steps + 1];
    let mut v = 0.5 * p.q_terminal;
    values[steps] = v;
    for k in (0..steps).rev() {
        let k1 = co.rhs(v);
        let k2 = co.rhs(v + 0.5 * h * k1);
        let k3 = co.rhs(v + 0.5 * h * k2);
        let k4 = co.rhs(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        values[k] = v;
    }
    check_bound(p, lambda, grid, &values)?;
    Ok(values)
}

/// `Π^⊥`, the `λ = 0` mode.
pub fn solve_perp(p: &ModelParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    solve_mode_riccati(p, 0.0, grid)
}

/// Solution of the linear equation obtained by dropping the quadratic term:
/// `Π̃(s) = (Q_T/2) e^{cs} + g (e^{cs} - 1)/c`, an upper bound for the mode.
pub fn comparison_bound(p: &ModelParams, lambda: f64, grid: &TimeGrid) -> Vec<f64> {
    let co = Coefficients::new(p, lambda);
    let steps = grid.steps();
    (0..=steps)
        .map(|k| {
            let s = grid.time(steps - k);
            let growth = if co.c == 0.0 { s } else { (co.c * s).exp_m1() / co.c };
            0.5 * p.q_terminal * (co.c * s).exp() + co.g * growth
        })
        .collect()
}

fn check_bound(p: &ModelParams, lambda: f64, grid: &TimeGrid, values: &[f64]) -> Result<()> {
    let bound = comparison_bound(p, lambda, grid);
    for (node, (&v, &b)) in values.iter().zip(&bound).enumerate() {
        if !v.is_finite() || v > BLOW_UP_FACTOR * b + 1e-12 {
            return Err(Error::RiccatiBlowUp { lambda, node, value: v, bound: b });
        }
    }
    Ok(())
}

/// Solves `Π^⊥` and one mode per eigenvalue of `spec`; equal eigenvalues share a solve.
pub fn solve_all(p: &ModelParams, spec: &GraphonSpectrum, grid: &TimeGrid) -> Result<RiccatiSolution> {
    solve_for_eigenvalues(p, spec.eigenvalues(), grid)
}

/// [`solve_all`] from a bare eigenvalue list.
pub fn solve_for_eigenvalues(p: &ModelParams, eigenvalues: &[f64], grid: &TimeGrid) -> Result<RiccatiSolution> {
    let perp = solve_perp(p, grid)?;
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(eigenvalues.len());
    for (l, &lambda) in eigenvalues.iter().enumerate() {
        let prior = eigenvalues[..l].iter().position(|&m| (m - lambda).abs() <= DEDUP_TOL);
        let values = match prior {
            Some(j) => modes[j].clone(),
            None => solve_mode_riccati(p, lambda, grid)?,
        };
        modes.push(values);
    }
    Ok(RiccatiSolution { grid: *grid, perp, modes, eigenvalues: eigenvalues.to_vec() })
}

/// Matrix of the operator Riccati solution on step vectors at node `t_index`:
/// `Π^⊥ I + Σ_l (Π̄^l - Π^⊥) v_l v_lᵀ` with unit eigenvectors `v_l`.
pub fn assemble_matrix(
    sol: &RiccatiSolution,
    spec: &GraphonSpectrum,
    n: usize,
    t_index: usize,
) -> Result<DMatrix<f64>> {
    if sol.rank() != spec.rank() {
        return Err(Error::DimensionMismatch { expected: sol.rank(), found: spec.rank() });
    }
    if t_index > sol.grid.steps() {
        return Err(Error::IndexOutOfRange { index: t_index, len: sol.grid.node_count() });
    }
    let perp = sol.perp[t_index];
    let mut out = DMatrix::identity(n, n) * perp;
    for l in 0..spec.rank() {
        let v = spec.unit_vector(l).ok_or_else(|| {
            Error::InvalidParams("assemble_matrix needs step eigenfunctions".into())
        })?;
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        let w = sol.modes[l][t_index] - perp;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    Ok(out)
}

/// Independent solve of the `n x n` matrix Riccati equation
/// `dP/dt = -PF - FᵀP + (2B²/R)P² - ½Q GᵀG`, `P(T) = (Q_T/2) I`,
/// with `F = A I + (b/N) M` and `G = I - Γ M/N`. Entry `k` is `P(t_k)`.
pub fn dense_riccati_oracle(p: &ModelParams, m: &AdjacencyMatrix, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    p.validate()?;
    let n = m.n();
    let nf = n as f64;
    let id = DMatrix::<f64>::identity(n, n);
    let f = &id * p.a + m.entries() * (p.b_coupling / nf);
    let g = &id - m.entries() * (p.gamma / nf);
    let source = g.transpose() * &g * (0.5 * p.q);
    let k = p.feedback_gain();
    let rhs = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let xf = x * &f;
        &xf + xf.transpose() - (x * x) * k + &source
    };
    let steps = grid.steps();
    let h = grid.dt();
    let mut out = alloc::vec![DMatrix::zeros(n, n); steps + 1];
    let mut x = &id * (0.5 * p.q_terminal);
    out[steps] = x.clone();
    for node in (0..steps).rev() {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &k1 * (0.5 * h)));
        let k3 = rhs(&(&x + &k2 * (0.5 * h)));
        let k4 = rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        x = (&x + x.transpose()) * 0.5;
        out[node] = x.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{step_graphon_spectrum, StepGraphon};

    fn tanh_params() -> ModelParams {
        ModelParams {
            a: 0.0,
            b_control: 1.0,
            b_coupling: 0.0,
            sigma: 0.0,
            q: 2.0,
            q_terminal: 0.0,
            r: 1.0,
            gamma: 0.0,
            horizon: 1.0,
        }
    }

    #[test]
    fn zero_weights_give_zero_solution() {
        let mut p = ModelParams::default();
        p.q = 0.0;
        p.q_terminal = 0.0;
        let grid = TimeGrid::new(1.0, 100).unwrap();
        assert!(solve_mode_riccati(&p, 0.3, &grid).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_case() {
        let mut p = tanh_params();
        p.b_control = 0.0;
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let v = solve_mode_riccati(&p, 0.0, &grid).unwrap();
        for (k, x) in v.iter().enumerate() {
            assert!((x - (1.0 - grid.time(k))).abs() < 1e-13);
        }
    }

    #[test]
    fn tanh_oracle() {
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let v = solve_mode_riccati(&tanh_params(), 0.0, &grid).unwrap();
        let r = core::f64::consts::SQRT_2;
        for (k, x) in v.iter().enumerate() {
            let s = 1.0 - grid.time(k);
            assert!((x - (r * s).tanh() / r).abs() < 1e-8);
        }
    }

    #[test]
    fn bounded_by_linear_comparison() {
        let p = ModelParams::default();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        for lambda in [-1.0, -0.3, 0.0, 0.5, 1.0] {
            let v = solve_mode_riccati(&p, lambda, &grid).unwrap();
            let b = comparison_bound(&p, lambda, &grid);
            for (x, y) in v.iter().zip(&b) {
                assert!(*x >= 0.0 && *x <= y + 1e-12);
            }
        }
    }

    #[test]
    fn shared_eigenvalues_share_values() {
        let p = ModelParams::default();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let sol = solve_for_eigenvalues(&p, &[0.5, 0.5], &grid).unwrap();
        assert_eq!(sol.mode(0), sol.mode(1));
        assert_eq!(sol.perp()[200], 0.5);
        assert_eq!(sol.mode(0)[200], 0.5);
    }

    #[test]
    fn matches_dense_oracle_small() {
        let p = ModelParams::default();
        let n = 8;
        let adj = AdjacencyMatrix::named("cosine", n).unwrap();
        let spec = step_graphon_spectrum(&StepGraphon::new(adj.clone()));
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let sol = solve_all(&p, &spec, &grid).unwrap();
        let dense = dense_riccati_oracle(&p, &adj, &grid).unwrap();
        for k in (0..=200).step_by(20) {
            let a = assemble_matrix(&sol, &spec, n, k).unwrap();
            assert!((a - &dense[k]).abs().max() < 1e-6);
        }
    }

    #[test]
    fn scalar_reduction() {
        let p = ModelParams::default();
        let adj = AdjacencyMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let dense = dense_riccati_oracle(&p, &adj, &grid).unwrap();
        let mode = solve_mode_riccati(&p, 1.0, &grid).unwrap();
        for k in 0..=100 {
            assert!((dense[k][(0, 0)] - mode[k]).abs() < 1e-12);
        }
    }
}
