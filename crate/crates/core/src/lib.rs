//! Stochastic-Lagrangian particle system for 2D incompressible flow on the
//! torus, with ensemble resetting.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod flow;
pub mod output;
pub mod reference;
pub mod torus;
pub mod weber;

pub use error::{Error, Result};
