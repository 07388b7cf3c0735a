//! Decentralized online regularized linear regression over random
//! time-varying digraphs with additive and multiplicative link noise.
//!
//! The crate simulates the consensus + innovation + regularization
//! recursion, evaluates the excitation quantities that govern its
//! convergence, and estimates regret by Monte Carlo.

pub mod config;
pub mod error;
pub mod estimator;
pub mod excitation;
pub mod experiment;
pub mod gains;
pub mod graph;
pub mod history;
pub mod matrix;
pub mod metrics;
pub mod noise;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
