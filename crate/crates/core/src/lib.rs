//! Calibrated graph diffusion.
//!
//! Laplacian and p-Laplacian flows on connected weighted graphs, anchored by a
//! strongly convex dissipation potential:
//!
//! ```text
//! dh/dt = -α L h - α_p Δ_p(h) - ∇ψ(h) + s(t)
//! ```
//!
//! The crate covers graph construction and spectra, the drift and its
//! equilibria, continuous-time integration, p-gap estimation, discrete and
//! stochastic iterations, and calibration of `(α, Γ)` to rate and mass targets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod error;
pub mod flow;
pub mod graph;
pub mod linalg;
pub mod operators;
pub mod pgap;
pub mod potential;
pub mod schemes;

pub use calibrate::{
    kn_meanfield, nonsynonymy_report, sgps, sgps_nonlinear, CalibrationResult, CalibrationTargets,
    NonSynonymyReport, NonlinearOptions,
};
pub use error::{Error, Result};
pub use flow::{
    integrate, measure_decay_rate, transient_time_to_threshold, two_regime_constants, Crossing,
    IntegratorOptions, Observable, SourceSignal, Trajectory, TwoRegimeConstants,
};
pub use graph::{Edge, Graph, GraphFamily, SpectralSummary};
pub use operators::{
    drift, energy, sensitivity_check, solve_equilibrium, solve_equilibrium_from, total_mass,
    ModelParams, Sensitivity,
};
pub use pgap::{cp_lower_bound, cp_power_mean_bound, estimate_cp, rayleigh_quotient_p, CpOptions, PGapEstimate};
pub use potential::{DissipationPotential, LogCoshPotential, PotentialConfig, QuadraticPotential};
pub use schemes::{
    noise_floor_bound, resolvent, run_euler, run_forward_backward, run_robbins_monro,
    run_stochastic_resolvent, stochastic_ensemble, Resolvent, ResolventMode, SchemeReport,
    StepSchedule,
};
