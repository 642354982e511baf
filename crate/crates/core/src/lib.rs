//! Simulation laboratory for Metropolis-Hastings scaling on rough targets.
//!
//! * [`fbm`]: two-sided fractional Brownian motion environments.
//! * [`gauss_moments`]: pairing-based Gaussian moment oracle.
//! * [`targets`]: rough and oscillatory one-dimensional marginals.
//! * [`mh`]: product-target RWM and MALA kernels and the chain runner.
//! * [`diagnostics`]: estimators and limiting-variance formulas.
//! * [`scaling`]: optimal acceptance solver, speed curves and sweeps.
//! * [`experiments`]: configuration, table emission and the CLI.

pub mod diagnostics;
pub mod experiments;
pub mod fbm;
pub mod gauss_moments;
pub mod mh;
pub mod normal;
pub mod quad;
pub mod scaling;
pub mod seeding;
pub mod targets;
