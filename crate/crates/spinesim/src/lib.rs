//! Event-driven simulation of branching Markov processes together with the
//! spine (size-biased) reweightings that underpin martingale change-of-measure
//! arguments: additive martingales, h-transformed spines, Kesten-Stigum-type
//! dichotomies, Kolmogorov survival asymptotics and KPP travelling waves.
//!
//! The crate is organised around a small set of model families that admit
//! exact simulation (no time discretisation): Brownian motion, finite-state
//! Markov chains, and typed Brownian motion, each combined with a branching
//! rate and an offspring law. On top of the simulators sit closed-form or
//! numerically solved eigendata, martingale functionals, deterministic
//! oracles (ODE extinction curves, series classifiers) and a Monte Carlo
//! experiment layer with seeded, replicable statistics.

pub mod cli;
pub mod error;
pub mod functionals;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod spine_sim;
pub mod stats;
pub mod tree;

pub use error::Error;
