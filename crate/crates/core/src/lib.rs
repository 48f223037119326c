//! Quantum-trajectory simulation of the quantum Zeno and anti-Zeno effects.
//!
//! A two-level system is monitored by a two-level detector atom that decays
//! into the environment. The detector decay is unravelled into stochastic
//! quantum jumps ([`engine`]); ensembles of trajectories ([`ensemble`]) are
//! checked against exact density-matrix integration ([`dm`]) and closed-form
//! decay-rate predictions ([`oracles`]).
//!
//! Units have ħ = 1 throughout; all frequencies and rates are plain reals.

// `!(x > 0.0)` guards are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dm;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod models;
pub mod oracles;
pub mod presets;
pub mod quadrature;
pub mod statevec;
pub mod validate;

pub use num_complex::Complex64;

pub use config::RunConfig;
pub use engine::{
    collapse, deterministic_step, jump_probability, run_trajectory, Integrator, JumpEvent,
    RngStream, SimulationParams, TrajectoryRecord,
};
pub use ensemble::{
    fit_exponential_rate, run_ensemble, EnsembleConfig, EnsembleStatistics, FitResult,
};
pub use error::{Error, Result};
pub use models::{
    CouplingTarget, DetectorParams, DriveParams, InitialSystem, Model, ModelSpec, Observable,
    ReservoirSpec,
};
pub use oracles::{FormulaId, RatePrediction};
pub use statevec::{BasisLabel, DetectorLevel, Reservoir, StateVector, SystemLevel};
