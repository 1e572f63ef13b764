//! The five experiments behind the subcommands. Each returns its CSV tables;
//! writing them is left to the caller.

use rayon::prelude::*;

use lqgraphon_core::control::{midpoint_states, ControlLaw, LawKind};
use lqgraphon_core::graphon::{op_norm_distance, step_graphon_spectrum, StepGraphon};
use lqgraphon_core::noise::{align_factorization, assumption2_discrepancy, factor_correlation, sample_noise_replica};
use lqgraphon_core::riccati::solve_all;
use lqgraphon_core::sim::{cost_exact, cost_mc, optimality_gap, simulate, CostReport};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::io::{fmt_float, Table};

/// Slack allowed when checking that the gap ladder does not increase.
pub const GAP_SLACK: f64 = 1e-12;

/// A primary table plus named companion tables (written next to it with a suffix).
#[derive(Debug, Clone)]
pub struct Output {
    pub main: Table,
    pub extra: Vec<(&'static str, Table)>,
}

impl Output {
    fn single(main: Table) -> Self {
        Output { main, extra: Vec::new() }
    }
}

/// Graphon step spectrum per ladder entry: eigenvalues and unit eigenvectors.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<Output> {
    let mut values = Table::new(["N", "index", "eigenvalue"]);
    let mut vectors = Table::new(["N", "index", "agent", "value"]);
    for n in cfg.ladder()? {
        let spec = step_graphon_spectrum(&StepGraphon::new(cfg.adjacency(n)?));
        for (l, lambda) in spec.eigenvalues().iter().enumerate() {
            values.push(vec![n.to_string(), (l + 1).to_string(), fmt_float(*lambda)]);
            let v = spec.unit_vector(l).expect("step spectra carry unit vectors");
            for (i, x) in v.iter().enumerate() {
                vectors.push(vec![n.to_string(), (l + 1).to_string(), (i + 1).to_string(), fmt_float(*x)]);
            }
        }
    }
    Ok(Output { main: values, extra: vec![("vectors", vectors)] })
}

/// Perpendicular and per-mode Riccati solutions on the simulation grid.
pub fn run_riccati(cfg: &ExperimentConfig) -> Result<Output> {
    let n = cfg.single_size("riccati")?;
    let grid = cfg.grid()?;
    let spec = step_graphon_spectrum(&StepGraphon::new(cfg.adjacency(n)?));
    let sol = solve_all(&cfg.params, &spec, &grid)?;
    let mut header = vec!["t".to_string(), "perp".to_string()];
    header.extend((1..=sol.rank()).map(|l| format!("mode_{l}")));
    let mut table = Table::new(header);
    for k in 0..grid.node_count() {
        let mut row = vec![fmt_float(grid.time(k)), fmt_float(sol.perp()[k])];
        row.extend(sol.modes().iter().map(|m| fmt_float(m[k])));
        table.push(row);
    }
    Ok(Output::single(table))
}

/// Monte Carlo closed loop under the configured law, against its exact cost.
///
/// Replicas run in parallel; each owns its RNG streams, so results do not
/// depend on scheduling. Trajectories of replica 0 are emitted on request.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Output> {
    let n = cfg.single_size("simulate")?;
    if cfg.replicas == 0 {
        return Err(CliError::Input("replicas must be positive".into()));
    }
    let p = &cfg.params;
    let grid = cfg.grid()?;
    let m = cfg.adjacency(n)?;
    let profile = cfg.x0_profile();
    let x0 = midpoint_states(&profile, n);
    let raw = factor_correlation(&cfg.correlation(n)?)?;
    let (noise, law) = match cfg.law {
        LawKind::Centralized => {
            let law = ControlLaw::centralized(p, &m, &raw, &x0, &grid)?;
            (raw, law)
        }
        LawKind::Decentralized => {
            let q = cfg.limit_q()?;
            let noise = align_factorization(&raw, &q)?.factorization;
            let law = ControlLaw::decentralized(p, &cfg.limit_graphon(), &q, n, &profile, &grid)?;
            (noise, law)
        }
    };

    let bundles = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| simulate(p, &m, &law, &sample_noise_replica(&noise, grid, cfg.seed, r), &x0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mc = cost_mc(&bundles, p, &m)?;
    let exact = cost_exact(p, &m, &law, &noise, &x0, &grid)?;

    let mut costs = Table::new(["law", "method", "social", "per_capita", "standard_error"]);
    for (method, r) in [("monte_carlo", &mc), ("exact", &exact)] {
        costs.push(cost_row(law.kind().as_str(), method, r));
    }
    let mut agents = Table::new(["agent", "cost_monte_carlo", "cost_exact"]);
    for i in 0..n {
        agents.push(vec![(i + 1).to_string(), fmt_float(mc.per_agent[i]), fmt_float(exact.per_agent[i])]);
    }
    let mut extra = vec![("agents", agents)];
    if cfg.trajectories {
        let b = &bundles[0];
        let mut traj = Table::new(["t", "agent", "state", "control"]);
        for k in 0..grid.node_count() {
            for i in 0..n {
                traj.push(vec![
                    fmt_float(grid.time(k)),
                    (i + 1).to_string(),
                    fmt_float(b.states()[(i, k)]),
                    fmt_float(b.controls()[(i, k)]),
                ]);
            }
        }
        extra.push(("trajectories", traj));
    }
    Ok(Output { main: costs, extra })
}

fn cost_row(law: &str, method: &str, r: &CostReport) -> Vec<String> {
    vec![law.into(), method.into(), fmt_float(r.social), fmt_float(r.per_capita), fmt_float(r.standard_error)]
}

/// Operator-norm distance to the limit graphon and the two noise discrepancy terms.
pub fn run_converge(cfg: &ExperimentConfig) -> Result<Output> {
    let limit = cfg.limit_graphon();
    let q = cfg.limit_q()?;
    let rows = cfg
        .ladder()?
        .into_par_iter()
        .map(|n| {
            let g = StepGraphon::new(cfg.adjacency(n)?);
            let d = assumption2_discrepancy(&cfg.correlation(n)?, &q)?;
            Ok(vec![n.to_string(), fmt_float(op_norm_distance(&g, &limit)), fmt_float(d.term1), fmt_float(d.term2)])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(["N", "op_norm_distance", "term1", "term2"]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output::single(table))
}

/// Exact per-capita optimality gap along the ladder.
///
/// The table is returned alongside any regression so the caller can still
/// write it before reporting the failure.
pub fn run_gap(cfg: &ExperimentConfig) -> Result<(Output, Option<CliError>)> {
    let p = &cfg.params;
    let grid = cfg.grid()?;
    let limit = cfg.limit_graphon();
    let q = cfg.limit_q()?;
    let profile = cfg.x0_profile();
    let ladder = cfg.ladder()?;
    let reports = ladder
        .par_iter()
        .map(|&n| Ok(optimality_gap(p, &cfg.adjacency(n)?, &cfg.correlation(n)?, &limit, &q, &profile, &grid)?))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(["N", "cost_centralized", "cost_decentralized", "gap"]);
    for (n, r) in ladder.iter().zip(&reports) {
        table.push(vec![n.to_string(), fmt_float(r.centralized), fmt_float(r.decentralized), fmt_float(r.gap)]);
    }
    let regression = ladder.windows(2).zip(reports.windows(2)).find_map(|(ns, rs)| {
        (rs[1].gap > rs[0].gap + GAP_SLACK).then(|| {
            CliError::Regression(format!(
                "gap increased from {:e} at N = {} to {:e} at N = {}",
                rs[0].gap, ns[0], rs[1].gap, ns[1]
            ))
        })
    });
    Ok((Output::single(table), regression))
}
