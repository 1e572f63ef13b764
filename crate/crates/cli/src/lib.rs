//! Command-line experiments for graphon-coupled LQ social control.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
