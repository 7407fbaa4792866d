//! Numerical stochastic averaging for fast-oscillating, randomly perturbed
//! multifrequency systems.
//!
//! The crate computes the limiting diffusion of the first integrals `H` of a
//! system `dX = ε⁻¹ b(X, W(t/ε²)) dt` written in action-angle coordinates
//! `X = (h, φ)`, simulates both the finite-ε dynamics and the limit, and
//! provides the statistics used to check that one approximates the other.
//!
//! Module map:
//!
//! - [`torus`]: cell problem `½Δ_w u = −g` on the flat unit torus and torus calculus.
//! - [`systems`]: model abstraction and the built-in models (coupled
//!   oscillators, double-well open book, Landau–Lifshitz).
//! - [`averaging`]: local and angle-averaged coefficients, the limiting
//!   generator, ellipticity and boundary diagnostics.
//! - [`resonance`]: resonance relations `k·ω(h) = 0`, thinness scans and
//!   occupation times.
//! - [`simulate`]: Euler-type simulation of the fast-slow system, the limit
//!   diffusion, stopped processes and open-book projections.
//! - [`analysis`]: weak-convergence comparisons, martingale residuals,
//!   Kolmogorov–Smirnov distances and open-book splitting statistics.
//! - [`io`]: CSV / JSON artifacts.

pub mod analysis;
pub mod averaging;
pub mod error;
pub mod io;
pub mod linalg;
pub mod resonance;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod systems;
pub mod torus;

pub use analysis::{
    empirical_cdf_distance, gluing_splitting, martingale_residual, moment_compare,
    ComparisonReport, GluingConfig, GluingReport, TestFunction,
};
pub use averaging::{
    average_over_angles, check_uniform_ellipticity, coupled_oscillator_local_coefficients_closed,
    inaccessibility_certificate, local_coefficients, small_action_asymptotics,
    tabulate_averaged, AveragedCoefficients, CoefficientOptions, GeneratorSpec, HGrid,
    LocalCoefficients,
};
pub use error::{Error, Result};
pub use resonance::{
    is_resonant, occupation_fit, occupation_time, resonance_scan, OmegaField, ResonanceScan,
    ResonanceVector,
};
pub use simulate::{
    simulate_fast_slow, simulate_landau_lifshitz, simulate_limit_diffusion, simulate_openbook,
    stop_at_exit, BoxRegion, InitialState, OpenBookSystem, PathEnsemble, SimulationConfig,
};
pub use systems::{
    action_angle_forward, action_angle_inverse, coupled_oscillator_model, validate_model, Dims,
    SlowFastModel,
};
pub use torus::{grad_w, mean_over_torus, poisson_1d_closed_form, solve_poisson, TorusFunction, TorusGrid};
