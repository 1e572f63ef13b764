//! Flat `key = value` experiment configs.
//!
//! Keys are case-sensitive. Model coefficients: `A`, `B`, `b`, `sigma`, `Q`,
//! `Q_T`, `R`, `Gamma`, `T`. Experiment keys: `N` (one size or a
//! comma/space separated ladder), `graphon` and `correlation` (a named object
//! or a matrix file path, relative to the config file), `limit_graphon`,
//! `limit_q`, `d`, `dt`, `replicas`, `seed`, `output`, `x0` (`linear`,
//! `constant`, `cosine`), `law` (`centralized`, `decentralized`) and
//! `trajectories` (`true`/`false`). `#` starts a comment.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use lqgraphon_core::control::LawKind;
use lqgraphon_core::graphon::{AdjacencyMatrix, AnalyticFn, FiniteRankGraphon};
use lqgraphon_core::noise::{CorrelationMatrix, QWienerSpec};
use lqgraphon_core::{ModelParams, TimeGrid};

use crate::error::{CliError, Result};
use crate::io;

const GRAPHONS: [&str; 3] = ["constant", "cosine", "zero"];
const CORRELATIONS: [&str; 3] = ["identity", "cosine", "double-constant"];

/// A named object or a matrix file.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Named(String),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub sizes: Vec<usize>,
    pub graphon: Source,
    pub correlation: Source,
    pub limit_graphon: String,
    pub limit_q: String,
    pub d: Option<usize>,
    pub dt: Option<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub x0: String,
    pub law: LawKind,
    pub trajectories: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: ModelParams::default(),
            sizes: Vec::new(),
            graphon: Source::Named("cosine".into()),
            correlation: Source::Named("cosine".into()),
            limit_graphon: "cosine".into(),
            limit_q: "cosine-kernel".into(),
            d: None,
            dt: None,
            replicas: 100,
            seed: 0,
            output: None,
            x0: "linear".into(),
            law: LawKind::Centralized,
            trajectories: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Parses config text; relative file paths resolve against `origin`'s directory.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let base = origin.parent().unwrap_or(Path::new(""));
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| CliError::Parse { path: origin.to_path_buf(), line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let real = || value.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, found {value:?}")));
            let int = || value.parse::<u64>().map_err(|_| err(format!("`{key}` expects an integer, found {value:?}")));
            let p = &mut cfg.params;
            match key {
                "A" => p.a = real()?,
                "B" => p.b_control = real()?,
                "b" => p.b_coupling = real()?,
                "sigma" => p.sigma = real()?,
                "Q" => p.q = real()?,
                "Q_T" => p.q_terminal = real()?,
                "R" => p.r = real()?,
                "Gamma" => p.gamma = real()?,
                "T" => p.horizon = real()?,
                "N" => {
                    cfg.sizes = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| match s.parse::<usize>() {
                            Ok(n) if n > 0 => Ok(n),
                            _ => Err(err(format!("`N` expects positive integers, found {s:?}"))),
                        })
                        .collect::<Result<_>>()?;
                    if cfg.sizes.is_empty() {
                        return Err(err("`N` is empty".into()));
                    }
                }
                "graphon" => cfg.graphon = source(value, &GRAPHONS, base),
                "correlation" => cfg.correlation = source(value, &CORRELATIONS, base),
                "limit_graphon" => {
                    if FiniteRankGraphon::named(value).is_none() {
                        return Err(err(format!("unknown limit graphon {value:?}")));
                    }
                    cfg.limit_graphon = value.into();
                }
                "limit_q" => {
                    if QWienerSpec::named(value).is_none() {
                        return Err(err(format!("unknown Q-Wiener spec {value:?}")));
                    }
                    cfg.limit_q = value.into();
                }
                "d" => cfg.d = Some(int()? as usize),
                "dt" => cfg.dt = Some(real()?),
                "replicas" => cfg.replicas = int()?,
                "seed" => cfg.seed = int()?,
                "output" => cfg.output = Some(base.join(value)),
                "x0" => {
                    if profile(value).is_none() {
                        return Err(err(format!("unknown initial profile {value:?}")));
                    }
                    cfg.x0 = value.into();
                }
                "law" => {
                    cfg.law = match value {
                        "centralized" => LawKind::Centralized,
                        "decentralized" => LawKind::Decentralized,
                        _ => return Err(err(format!("unknown law {value:?}"))),
                    }
                }
                "trajectories" => {
                    cfg.trajectories = value
                        .parse()
                        .map_err(|_| err(format!("`trajectories` expects true or false, found {value:?}")))?
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    /// The ladder of agent counts. Defaults to the size of a graphon file, or 16.
    pub fn ladder(&self) -> Result<Vec<usize>> {
        if !self.sizes.is_empty() {
            return Ok(self.sizes.clone());
        }
        match &self.graphon {
            Source::File(path) => Ok(vec![io::read_matrix(path)?.nrows()]),
            Source::Named(_) => Ok(vec![16]),
        }
    }

    /// The single `N` required by per-run subcommands.
    pub fn single_size(&self, command: &str) -> Result<usize> {
        match self.ladder()?.as_slice() {
            [n] => Ok(*n),
            many => Err(CliError::Input(format!("`{command}` needs a single N, got {many:?}"))),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let t = self.params.horizon;
        Ok(match self.dt {
            Some(dt) => TimeGrid::from_dt(t, dt)?,
            None => TimeGrid::default_for(t)?,
        })
    }

    pub fn adjacency(&self, n: usize) -> Result<AdjacencyMatrix> {
        match &self.graphon {
            Source::Named(name) => AdjacencyMatrix::named(name, n)
                .ok_or_else(|| CliError::Input(format!("unknown graphon {name:?}"))),
            Source::File(path) => {
                let m = sized(io::read_matrix(path)?, n, path)?;
                AdjacencyMatrix::new(m).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn correlation(&self, n: usize) -> Result<CorrelationMatrix> {
        match &self.correlation {
            Source::Named(name) => CorrelationMatrix::named(name, n)
                .ok_or_else(|| CliError::Input(format!("unknown correlation {name:?}"))),
            Source::File(path) => {
                let m = sized(io::read_matrix(path)?, n, path)?;
                CorrelationMatrix::new(m).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn limit_graphon(&self) -> FiniteRankGraphon {
        FiniteRankGraphon::named(&self.limit_graphon).expect("validated at parse time")
    }

    /// The Q-Wiener spec truncated to the `d` observed drivers.
    pub fn limit_q(&self) -> Result<QWienerSpec> {
        let spec = QWienerSpec::named(&self.limit_q).expect("validated at parse time");
        match self.d {
            None => Ok(spec),
            Some(d) => spec.truncated(d).map_err(|_| {
                CliError::Input(format!("d = {d} exceeds the rank {} of `{}`", spec.rank(), self.limit_q))
            }),
        }
    }

    pub fn x0_profile(&self) -> AnalyticFn {
        profile(&self.x0).expect("validated at parse time")
    }
}

fn source(value: &str, names: &[&str], base: &Path) -> Source {
    if names.contains(&value) {
        Source::Named(value.into())
    } else {
        Source::File(base.join(value))
    }
}

fn sized(m: nalgebra::DMatrix<f64>, n: usize, path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    if m.nrows() != n {
        return Err(CliError::Input(format!("{} holds a {}x{} matrix but N = {n}", path.display(), m.nrows(), m.ncols())));
    }
    Ok(m)
}

/// Named initial profiles `x0(α)`: `linear` = 1 + α, `constant` = 1, `cosine` = cos πα.
pub fn profile(name: &str) -> Option<AnalyticFn> {
    match name {
        "linear" => Some(AnalyticFn::new(|x| 1.0 + x)),
        "constant" => Some(AnalyticFn::new(|_| 1.0)),
        "cosine" => Some(AnalyticFn::new(|x| (std::f64::consts::PI * x).cos())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/cfg/run.conf"))
    }

    #[test]
    fn parses_keys() {
        let cfg = parse("# demo\nA = 0.5\nQ_T=2 # trailing\nN = 8, 16 32\ngraphon = m.txt\nlaw = decentralized\n").unwrap();
        assert_eq!(cfg.params.a, 0.5);
        assert_eq!(cfg.params.q_terminal, 2.0);
        assert_eq!(cfg.sizes, vec![8, 16, 32]);
        assert_eq!(cfg.graphon, Source::File(PathBuf::from("/cfg/m.txt")));
        assert_eq!(cfg.correlation, Source::Named("cosine".into()));
        assert_eq!(cfg.law, LawKind::Decentralized);
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse("A = 1\n\nsigma = x\n").unwrap_err();
        assert_eq!(e.to_string(), "/cfg/run.conf:3: `sigma` expects a number, found \"x\"");
        assert!(parse("a = 1").unwrap_err().to_string().contains("unknown key `a`"));
        assert!(parse("A = 1\nA = 2").unwrap_err().to_string().contains("duplicate"));
        assert!(parse("R = 0").is_err());
        assert!(parse("limit_q = nope").is_err());
    }

    #[test]
    fn d_is_checked_against_spec() {
        let cfg = parse("d = 3").unwrap();
        assert_eq!(cfg.limit_q().unwrap_err().exit_code(), 2);
        assert_eq!(parse("d = 1").unwrap().limit_q().unwrap().rank(), 1);
    }

    #[test]
    fn grid_defaults() {
        let cfg = parse("T = 2").unwrap();
        assert_eq!(cfg.grid().unwrap().steps(), 1000);
        let cfg = parse("dt = 0.01").unwrap();
        assert_eq!(cfg.grid().unwrap().steps(), 100);
    }
}
