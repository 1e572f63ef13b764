//! Closed-loop simulation, cost evaluation and the optimality gap.
//!
//! States follow Euler-Maruyama on the simulation grid,
//! `x_{k+1} = x_k + [A x_k + B u_k + (b/N) M x_k] dt + σ ΔW̃_k`,
//! with mode processes advanced by the same driver increments. Costs use the
//! trapezoid rule over nodes `0..=K` plus the terminal term.
//!
//! Exact costs come from the first two moments of the stacked linear system
//! `z = (x, φ)`. Two schemes are offered: the exact moments of the
//! Euler-Maruyama chain (matches Monte Carlo over [`simulate`] without bias),
//! and RK4 on the continuous moment equations (approximates the continuous
//! closed loop to fourth order; needs Riccati values at step midpoints).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::control::{midpoint_states, ControlLaw, LawKind, ModeTrajectory};
use crate::error::{Error, Result};
use crate::graphon::{AdjacencyMatrix, AnalyticFn, FiniteRankGraphon, StepGraphon, StepVector};
use crate::model::{ModelParams, TimeGrid};
use crate::noise::{
    align_factorization, factor_correlation, sample_noise_replica, CorrelationMatrix,
    NoiseFactorization, NoisePaths, QWienerSpec,
};

/// Tolerance below zero tolerated for the optimality gap.
pub const GAP_TOL: f64 = 1e-9;

/// One simulated replica.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    grid: TimeGrid,
    /// Column `k` holds all agents at node `k`.
    states: DMatrix<f64>,
    controls: DMatrix<f64>,
    modes: ModeTrajectory,
    kind: LawKind,
    seed: u64,
    replica: u64,
}

impl TrajectoryBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    /// `N x (K+1)` states.
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    /// `N x (K+1)` controls.
    pub fn controls(&self) -> &DMatrix<f64> {
        &self.controls
    }

    pub fn modes(&self) -> &ModeTrajectory {
        &self.modes
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMethod {
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub per_agent: Vec<f64>,
    pub social: f64,
    pub per_capita: f64,
    /// Standard error of `per_capita`; zero for exact costs, NaN for a single replica.
    pub standard_error: f64,
    pub method: CostMethod,
}

impl CostReport {
    fn from_per_agent(per_agent: Vec<f64>, standard_error: f64, method: CostMethod) -> Self {
        let social: f64 = per_agent.iter().sum();
        let per_capita = social / per_agent.len().max(1) as f64;
        CostReport { per_agent, social, per_capita, standard_error, method }
    }
}

fn check_dims(m: &AdjacencyMatrix, law: &ControlLaw, x0: &[f64]) -> Result<usize> {
    let n = m.n();
    if law.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: law.n() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
    }
    Ok(n)
}

/// Euler-Maruyama closed loop under `law` along `noise`.
pub fn simulate(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    law: &ControlLaw,
    noise: &NoisePaths,
    x0: &[f64],
) -> Result<TrajectoryBundle> {
    p.validate()?;
    let n = check_dims(m, law, x0)?;
    if noise.agent_count() != n {
        return Err(Error::DimensionMismatch { expected: n, found: noise.agent_count() });
    }
    let grid = *noise.grid();
    let modes = ModeTrajectory::integrate(law, noise)?;
    let dt = grid.dt();
    let coupling = m.entries() * (p.b_coupling / n as f64);
    let nodes = grid.node_count();
    let mut states = DMatrix::zeros(n, nodes);
    let mut controls = DMatrix::zeros(n, nodes);
    let mut x = DVector::from_column_slice(x0);
    for k in 0..nodes {
        check_finite(x.as_slice(), k)?;
        states.set_column(k, &x);
        let u = law.control_vector(k, x.as_slice(), &modes)?;
        check_finite(&u, k)?;
        controls.set_column(k, &DVector::from_column_slice(&u));
        if k == grid.steps() {
            break;
        }
        let mx = &coupling * &x;
        for i in 0..n {
            let drift = p.a * x[i] + p.b_control * u[i] + mx[i];
            x[i] += drift * dt + p.sigma * noise.correlated_increment(i, k);
        }
    }
    Ok(TrajectoryBundle {
        grid,
        states,
        controls,
        modes,
        kind: law.kind(),
        seed: noise.seed(),
        replica: noise.replica(),
    })
}

fn check_finite(values: &[f64], node: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(agent) => Err(Error::NonFinite { node, agent }),
        None => Ok(()),
    }
}

/// Per-agent realized cost of one replica.
pub fn realized_costs(bundle: &TrajectoryBundle, p: &ModelParams, m: &AdjacencyMatrix) -> Result<Vec<f64>> {
    let n = bundle.n();
    if m.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.n() });
    }
    let steps = bundle.grid.steps();
    let dt = bundle.grid.dt();
    let tracking = DMatrix::identity(n, n) - m.entries() * (p.gamma / n as f64);
    let deviations = &tracking * &bundle.states;
    let mut costs = alloc::vec![0.0; n];
    for k in 0..=steps {
        let w = if k == 0 || k == steps { 0.5 * dt } else { dt };
        for (i, c) in costs.iter_mut().enumerate() {
            let e = deviations[(i, k)];
            let u = bundle.controls[(i, k)];
            *c += w * 0.5 * (p.q * e * e + p.r * u * u);
        }
    }
    for (i, c) in costs.iter_mut().enumerate() {
        let xt = bundle.states[(i, steps)];
        *c += 0.5 * p.q_terminal * xt * xt;
    }
    Ok(costs)
}

/// Monte Carlo cost: trapezoid in time, sample mean over replicas.
pub fn cost_mc(bundles: &[TrajectoryBundle], p: &ModelParams, m: &AdjacencyMatrix) -> Result<CostReport> {
    if bundles.is_empty() {
        return Err(Error::EmptyInput("cost_mc needs at least one replica"));
    }
    let n = bundles[0].n();
    let mut sum = alloc::vec![0.0; n];
    let mut per_capita = Vec::with_capacity(bundles.len());
    for b in bundles {
        let c = realized_costs(b, p, m)?;
        per_capita.push(c.iter().sum::<f64>() / n as f64);
        for (s, v) in sum.iter_mut().zip(&c) {
            *s += v;
        }
    }
    let reps = bundles.len() as f64;
    let per_agent = sum.into_iter().map(|s| s / reps).collect();
    Ok(CostReport::from_per_agent(per_agent, standard_error(&per_capita), CostMethod::MonteCarlo))
}

/// Standard error of the sample mean; NaN below two samples.
pub fn standard_error(samples: &[f64]) -> f64 {
    let r = samples.len();
    if r < 2 {
        return f64::NAN;
    }
    let mean = samples.iter().sum::<f64>() / r as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (r - 1) as f64;
    (var / r as f64).sqrt()
}

/// Per-capita cost of one replica computed on embedded step functions:
/// `½∫[Q ||(I - Γ M^[N]) x^[N]||² + R ||u^[N]||²] dt + ½ Q_T ||x_T^[N]||²`.
pub fn embedded_cost(bundle: &TrajectoryBundle, p: &ModelParams, m: &AdjacencyMatrix) -> Result<f64> {
    let graphon = StepGraphon::new(m.clone());
    let steps = bundle.grid.steps();
    let dt = bundle.grid.dt();
    let mut total = 0.0;
    for k in 0..=steps {
        let x = StepVector::embed(bundle.states.column(k).iter().copied().collect());
        let u = StepVector::embed(bundle.controls.column(k).iter().copied().collect());
        let mx = graphon.apply(&x)?;
        let dev = StepVector::embed(
            x.values().iter().zip(mx.values()).map(|(a, b)| a - p.gamma * b).collect(),
        );
        let w = if k == 0 || k == steps { 0.5 * dt } else { dt };
        total += w * 0.5 * (p.q * dev.norm_sq() + p.r * u.norm_sq());
    }
    let xt = StepVector::embed(bundle.states.column(steps).iter().copied().collect());
    Ok(total + 0.5 * p.q_terminal * xt.norm_sq())
}

/// Moment propagation scheme for [`cost_exact_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentScheme {
    /// Exact moments of the Euler-Maruyama chain.
    DiscreteEuler,
    /// RK4 on the continuous moment equations; the law's Riccati grid must
    /// have an even number of steps per simulation step.
    Rk4,
}

/// Linear closed loop `dz = (F z + c) dt + S dW` of the stacked `(x, φ)`.
struct ClosedLoop<'a> {
    p: &'a ModelParams,
    law: &'a ControlLaw,
    n: usize,
    rank: usize,
    base: DMatrix<f64>,
    tracking: DMatrix<f64>,
    diffusion_cov: DMatrix<f64>,
    offset: DVector<f64>,
}

impl<'a> ClosedLoop<'a> {
    fn new(p: &'a ModelParams, m: &AdjacencyMatrix, law: &'a ControlLaw, noise: &NoiseFactorization) -> Result<Self> {
        let n = m.n();
        if noise.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: noise.n() });
        }
        let rank = law.rank();
        let dim = n + rank;
        let drivers = noise.rank();
        let used = law.noise_coefficients().ncols();
        if used > drivers {
            return Err(Error::RankExceeded { requested: used, available: drivers });
        }
        let nf = n as f64;
        let mut base = DMatrix::<f64>::identity(n, n) * p.a + m.entries() * (p.b_coupling / nf);
        if let Some(pert) = law.perturbation() {
            base += &pert.gain * p.b_control;
        }
        let mut tracking = DMatrix::zeros(n, dim);
        tracking
            .view_mut((0, 0), (n, n))
            .copy_from(&(DMatrix::identity(n, n) - m.entries() * (p.gamma / nf)));
        let mut diffusion = DMatrix::zeros(dim, drivers);
        diffusion.view_mut((0, 0), (n, drivers)).copy_from(&(noise.factor() * p.sigma));
        diffusion
            .view_mut((n, 0), (rank, used))
            .copy_from(law.noise_coefficients());
        let diffusion_cov = &diffusion * diffusion.transpose();
        let mut offset = DVector::zeros(dim);
        if let Some(pert) = law.perturbation() {
            for i in 0..n {
                offset[i] = p.b_control * pert.offset[i];
            }
        }
        Ok(ClosedLoop { p, law, n, rank, base, tracking, diffusion_cov, offset })
    }

    fn dim(&self) -> usize {
        self.n + self.rank
    }

    /// Control map `u = H z + o` at Riccati node `r`.
    fn control_map(&self, r: usize) -> DMatrix<f64> {
        let (n, rank) = (self.n, self.rank);
        let kappa = 2.0 * self.law.params().b_control / self.law.params().r;
        let sol = self.law.riccati();
        let perp = sol.perp()[r];
        let mut h = DMatrix::zeros(n, n + rank);
        for i in 0..n {
            h[(i, i)] = -kappa * perp;
        }
        if let Some(pert) = self.law.perturbation() {
            let mut block = h.view_mut((0, 0), (n, n));
            block += &pert.gain;
        }
        for l in 0..rank {
            let w = -kappa * (sol.mode(l)[r] - perp);
            for i in 0..n {
                h[(i, n + l)] = w * self.law.cell_averages()[(i, l)];
            }
        }
        h
    }

    /// Drift matrix `F` at Riccati node `r`.
    fn drift(&self, r: usize) -> DMatrix<f64> {
        let (n, rank) = (self.n, self.rank);
        let kappa = 2.0 * self.law.params().b_control / self.law.params().r;
        let sol = self.law.riccati();
        let perp = sol.perp()[r];
        let b = self.p.b_control;
        let mut f = DMatrix::zeros(n + rank, n + rank);
        f.view_mut((0, 0), (n, n)).copy_from(&self.base);
        for i in 0..n {
            f[(i, i)] -= b * kappa * perp;
        }
        for l in 0..rank {
            let w = -b * kappa * (sol.mode(l)[r] - perp);
            for i in 0..n {
                f[(i, n + l)] = w * self.law.cell_averages()[(i, l)];
            }
            f[(n + l, n + l)] = self.law.mode_drift(l, r);
        }
        f
    }

    /// Per-agent running cost density at Riccati node `r` given mean and covariance.
    fn running(&self, r: usize, mu: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
        let h = self.control_map(r);
        let offset: Vec<f64> = match self.law.perturbation() {
            Some(pert) => pert.offset.clone(),
            None => alloc::vec![0.0; self.n],
        };
        let e_track = quadratic_diag(&self.tracking, mu, cov, None);
        let e_ctrl = quadratic_diag(&h, mu, cov, Some(&offset));
        e_track
            .iter()
            .zip(&e_ctrl)
            .map(|(a, b)| 0.5 * (self.p.q * a + self.p.r * b))
            .collect()
    }

    fn terminal(&self, mu: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
        (0..self.n)
            .map(|i| 0.5 * self.p.q_terminal * (cov[(i, i)] + mu[i] * mu[i]))
            .collect()
    }
}

/// `E[(g_i·z + o_i)²]` for each row `g_i` of `g`.
fn quadratic_diag(g: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>, offset: Option<&[f64]>) -> Vec<f64> {
    let gc = g * cov;
    let gm = g * mu;
    (0..g.nrows())
        .map(|i| {
            let var = gc.row(i).dot(&g.row(i));
            let mean = gm[i] + offset.map_or(0.0, |o| o[i]);
            var + mean * mean
        })
        .collect()
}

/// Exact expected costs by moment propagation with the default [`MomentScheme::DiscreteEuler`].
pub fn cost_exact(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    law: &ControlLaw,
    noise: &NoiseFactorization,
    x0: &[f64],
    grid: &TimeGrid,
) -> Result<CostReport> {
    cost_exact_with(p, m, law, noise, x0, grid, MomentScheme::DiscreteEuler)
}

/// Exact expected costs; the law's drivers are the first columns of `noise`.
pub fn cost_exact_with(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    law: &ControlLaw,
    noise: &NoiseFactorization,
    x0: &[f64],
    grid: &TimeGrid,
    scheme: MomentScheme,
) -> Result<CostReport> {
    p.validate()?;
    let n = check_dims(m, law, x0)?;
    let stride = law.stride(grid)?;
    if scheme == MomentScheme::Rk4 && stride % 2 != 0 {
        return Err(Error::GridMismatch(alloc::format!(
            "RK4 moments need an even number of Riccati steps per simulation step, got {stride}"
        )));
    }
    let sys = ClosedLoop::new(p, m, law, noise)?;
    let dim = sys.dim();
    let dt = grid.dt();
    let steps = grid.steps();

    let mut mu = DVector::zeros(dim);
    mu.rows_mut(0, n).copy_from_slice(x0);
    for (l, v) in law.initial_modes().iter().enumerate() {
        mu[n + l] = *v;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    let mut costs = alloc::vec![0.0; n];

    for k in 0..=steps {
        let r = k * stride;
        let w = if k == 0 || k == steps { 0.5 * dt } else { dt };
        for (c, v) in costs.iter_mut().zip(sys.running(r, &mu, &cov)) {
            *c += w * v;
        }
        if k == steps {
            break;
        }
        match scheme {
            MomentScheme::DiscreteEuler => {
                let mut step = sys.drift(r) * dt;
                for d in 0..dim {
                    step[(d, d)] += 1.0;
                }
                mu = &step * &mu + &sys.offset * dt;
                let sc = &step * &cov;
                cov = &sc * step.transpose() + &sys.diffusion_cov * dt;
            }
            MomentScheme::Rk4 => {
                let f0 = sys.drift(r);
                let f1 = sys.drift(r + stride / 2);
                let f2 = sys.drift(r + stride);
                let mean_rhs = |f: &DMatrix<f64>, m: &DVector<f64>| f * m + &sys.offset;
                let cov_rhs = |f: &DMatrix<f64>, c: &DMatrix<f64>| {
                    let fc = f * c;
                    &fc + fc.transpose() + &sys.diffusion_cov
                };
                let h = dt;
                let m1 = mean_rhs(&f0, &mu);
                let m2 = mean_rhs(&f1, &(&mu + &m1 * (0.5 * h)));
                let m3 = mean_rhs(&f1, &(&mu + &m2 * (0.5 * h)));
                let m4 = mean_rhs(&f2, &(&mu + &m3 * h));
                mu += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
                let c1 = cov_rhs(&f0, &cov);
                let c2 = cov_rhs(&f1, &(&cov + &c1 * (0.5 * h)));
                let c3 = cov_rhs(&f1, &(&cov + &c2 * (0.5 * h)));
                let c4 = cov_rhs(&f2, &(&cov + &c3 * h));
                cov += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
                cov = (&cov + cov.transpose()) * 0.5;
            }
        }
        if let Some(i) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: k + 1, agent: i });
        }
    }
    for (c, v) in costs.iter_mut().zip(sys.terminal(&mu, &cov)) {
        *c += v;
    }
    Ok(CostReport::from_per_agent(costs, 0.0, CostMethod::Exact))
}

/// Per-capita costs of both laws and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub centralized: f64,
    pub decentralized: f64,
    pub gap: f64,
    /// Standard error of `gap` (zero when computed exactly).
    pub standard_error: f64,
}

/// Everything shared by the two arms of a gap computation.
#[derive(Debug, Clone)]
pub struct GapSetup {
    pub noise: NoiseFactorization,
    pub centralized: ControlLaw,
    pub decentralized: ControlLaw,
    pub x0: Vec<f64>,
}

/// Builds both laws on a Riccati grid twice as fine as `grid`. Drivers are
/// aligned with the Q-Wiener modes so that the decentralized law's first `d`
/// drivers are the same Brownian motions the agents feel.
pub fn gap_setup(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    q: &CorrelationMatrix,
    limit_m: &FiniteRankGraphon,
    limit_q: &QWienerSpec,
    x0_profile: &AnalyticFn,
    grid: &TimeGrid,
) -> Result<GapSetup> {
    let n = m.n();
    if q.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q.n() });
    }
    let noise = align_factorization(&factor_correlation(q)?, limit_q)?.factorization;
    let x0 = midpoint_states(x0_profile, n);
    let riccati_grid = grid.refined(2);
    let centralized = ControlLaw::centralized(p, m, &noise, &x0, &riccati_grid)?;
    let decentralized = ControlLaw::decentralized(p, limit_m, limit_q, n, x0_profile, &riccati_grid)?;
    Ok(GapSetup { noise, centralized, decentralized, x0 })
}

/// Per-capita optimality gap of the decentralized law, by RK4 moments.
pub fn optimality_gap(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    q: &CorrelationMatrix,
    limit_m: &FiniteRankGraphon,
    limit_q: &QWienerSpec,
    x0_profile: &AnalyticFn,
    grid: &TimeGrid,
) -> Result<GapReport> {
    let s = gap_setup(p, m, q, limit_m, limit_q, x0_profile, grid)?;
    let c = cost_exact_with(p, m, &s.centralized, &s.noise, &s.x0, grid, MomentScheme::Rk4)?;
    let d = cost_exact_with(p, m, &s.decentralized, &s.noise, &s.x0, grid, MomentScheme::Rk4)?;
    gap_report(c.per_capita, d.per_capita, 0.0)
}

fn gap_report(centralized: f64, decentralized: f64, standard_error: f64) -> Result<GapReport> {
    let gap = decentralized - centralized;
    if gap < -GAP_TOL {
        return Err(Error::NegativeGap { gap, centralized, decentralized });
    }
    Ok(GapReport { centralized, decentralized, gap, standard_error })
}

/// Monte Carlo gap with common random numbers: both arms of replica `r` use
/// identical driver paths. The sign check is skipped since sampling noise
/// can make small gaps negative.
pub fn optimality_gap_mc(
    p: &ModelParams,
    m: &AdjacencyMatrix,
    setup: &GapSetup,
    grid: &TimeGrid,
    replicas: u64,
    seed: u64,
) -> Result<GapReport> {
    if replicas == 0 {
        return Err(Error::EmptyInput("at least one replica required"));
    }
    let n = m.n() as f64;
    let mut cs = Vec::new();
    let mut ds = Vec::new();
    let mut diffs = Vec::new();
    for r in 0..replicas {
        let noise = sample_noise_replica(&setup.noise, *grid, seed, r);
        let bc = simulate(p, m, &setup.centralized, &noise, &setup.x0)?;
        let bd = simulate(p, m, &setup.decentralized, &noise, &setup.x0)?;
        let c = realized_costs(&bc, p, m)?.iter().sum::<f64>() / n;
        let d = realized_costs(&bd, p, m)?.iter().sum::<f64>() / n;
        cs.push(c);
        ds.push(d);
        diffs.push(d - c);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (c, d) = (mean(&cs), mean(&ds));
    Ok(GapReport { centralized: c, decentralized: d, gap: d - c, standard_error: standard_error(&diffs) })
}
