//! Networks of coupled generalized Lotka-Volterra units with heteroclinic
//! dynamics: model, topologies, integration, equilibria and trajectory analysis.

pub mod error;
pub mod model;
pub mod topology;
pub mod integrate;
pub mod equilibria;
pub mod analysis;
pub mod experiments;
pub mod cli;

pub use error::{Error, Result};
