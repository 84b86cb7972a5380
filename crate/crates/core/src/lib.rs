//! Structural estimation and policy evaluation for a finite-horizon dynamic
//! model of schooling, occupational choice and military enlistment.

pub mod bootstrap;
pub mod decision;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
