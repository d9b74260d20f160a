//! Simulation and parameter estimation for affine stochastic delay
//! differential equations (SDDEs) observed at equidistant time points.
//!
//! The library covers the whole pipeline:
//!
//! * [`model`] — model families, parameter bindings, stationarity analysis;
//! * [`autocov`] — stationary autocovariance functions, by closed form where
//!   available and by a spectral delay Yule-Walker solver otherwise, plus
//!   parameter gradients;
//! * [`predictor`] — Durbin-Levinson prediction coefficients and their
//!   parameter derivatives;
//! * [`likelihood`] — exact Gaussian likelihood, pseudo-likelihood of depth k
//!   and the pseudo-score;
//! * [`pbef`] — prediction-based estimating functions: moment matrices,
//!   optimal weights, sandwich covariances and efficiency-loss analysis;
//! * [`simulator`] — Euler scheme with delay buffer, stationary burn-in and
//!   subsampling into observation series;
//! * [`estimator`] — maximum pseudo-likelihood, the optimal prediction-based
//!   estimator and the two-step variant;
//! * [`study`] — Monte Carlo experiment orchestration with deterministic
//!   seeding.

pub mod autocov;
pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod pbef;
pub mod predictor;
pub mod simulator;
pub mod study;

pub use error::{Result, SddeError};
pub use model::{DelayModelSpec, Param, ParameterBinding, StationarityVerdict};
