//! Generative actors that learn to propose every feasible action of a
//! one-step contextual environment. The actor's output density is
//! approximated by a Gaussian KDE and pushed toward a critic-defined target
//! by minimizing an f-divergence (Jensen-Shannon, forward or reverse KL);
//! maximum-entropy and GAN baselines are included for comparison.

pub mod cli;
pub mod divergence;
pub mod env;
pub mod error;
pub mod eval;
pub mod kde;
pub mod models;
pub mod replay;
pub mod selftest;
pub mod trainer;

pub use error::{Error, Result};
