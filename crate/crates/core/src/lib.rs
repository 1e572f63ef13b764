//! Linear-quadratic social control of agents coupled through a graphon, driven by
//! spatially correlated noise.
//!
//! The core is `no_std` (with `alloc`). It provides step graphons and their
//! spectra, factorization and sampling of correlated Brownian drivers, the scalar
//! Riccati equations of the spectral decomposition, centralized and decentralized
//! feedback laws, and Euler-Maruyama simulation with cost evaluation.

#![no_std]

extern crate alloc;

pub mod control;
pub mod error;
pub mod graphon;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ModelParams, TimeGrid};
