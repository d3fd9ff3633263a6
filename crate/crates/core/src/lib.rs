//! Stochastic-optimal entry guidance: atmosphere and vehicle models, guided
//! flight simulation, linear covariance analysis, gain synthesis and Monte
//! Carlo evaluation.

pub mod atmosphere;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod flight;
pub mod gains;
pub mod guidance;
pub mod lincov;
pub mod montecarlo;
pub mod scenario;
pub mod linalg;
pub mod optim;
pub mod table;
pub mod targeting;
pub mod triggers;

pub use error::{Error, Result};
