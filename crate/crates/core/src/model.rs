//! Model coefficients and uniform time grids.

use alloc::format;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar coefficients of the agent dynamics and costs.
///
/// Dynamics: `dx^i = [A x^i + B u^i + (b/N) Σ_j m_ij x^j] dt + σ dW̃^i`.
/// Cost: `J^i = ½ E ∫ [Q (x^i - Γ (1/N) Σ_j m_ij x^j)² + R (u^i)²] dt + ½ E Q_T (x_T^i)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a: f64,
    pub b_control: f64,
    pub b_coupling: f64,
    pub sigma: f64,
    pub q: f64,
    pub q_terminal: f64,
    pub r: f64,
    pub gamma: f64,
    pub horizon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 1.0,
            b_control: 1.0,
            b_coupling: 0.5,
            sigma: 0.3,
            q: 1.0,
            q_terminal: 1.0,
            r: 1.0,
            gamma: 0.5,
            horizon: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a,
            self.b_control,
            self.b_coupling,
            self.sigma,
            self.q,
            self.q_terminal,
            self.r,
            self.gamma,
            self.horizon,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite coefficient in {self:?}")));
        }
        if self.r <= 0.0 {
            return Err(Error::InvalidParams(format!("R must be positive, got {}", self.r)));
        }
        if self.q < 0.0 || self.q_terminal < 0.0 {
            return Err(Error::InvalidParams(format!(
                "Q and Q_T must be nonnegative, got {} and {}",
                self.q, self.q_terminal
            )));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidParams(format!("T must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// `2B²/R`, the quadratic Riccati coefficient.
    pub fn feedback_gain(&self) -> f64 {
        2.0 * self.b_control * self.b_control / self.r
    }
}

/// Uniform grid `t_k = k dt`, `k = 0..=steps`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one step required".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    /// Grid with step `dt`; `T/dt` must be an integer within rounding.
    pub fn from_dt(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!("T = {horizon} is not a multiple of dt = {dt}")));
        }
        Self::new(horizon, steps as usize)
    }

    /// Default grid `dt = 1e-3 T`.
    pub fn default_for(horizon: f64) -> Result<Self> {
        Self::new(horizon, 1000)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Grid with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        TimeGrid { horizon: self.horizon, steps: self.steps * factor.max(1) }
    }

    /// Number of steps of `self` per step of `coarse`, if `self` subdivides it evenly.
    pub fn subdivision_of(&self, coarse: &TimeGrid) -> Result<usize> {
        let same_horizon = (self.horizon - coarse.horizon).abs() <= 1e-12 * self.horizon;
        if !same_horizon || self.steps % coarse.steps != 0 {
            return Err(Error::GridMismatch(format!(
                "grid with {} steps on [0, {}] does not subdivide grid with {} steps on [0, {}]",
                self.steps, self.horizon, coarse.steps, coarse.horizon
            )));
        }
        Ok(self.steps / coarse.steps)
    }
}
