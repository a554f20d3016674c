//! Numerics for N-player discrete-time general-sum linear-quadratic games.
//!
//! Players share the dynamics `z(t+1) = A z(t) + Σ B_i u_i(t)` and each picks a
//! linear feedback `u_i = -K_i z`. This crate computes feedback Nash equilibria
//! by Lyapunov iterations on the coupled Riccati equations, evaluates the exact
//! policy-gradient field, classifies equilibria through the spectrum of its
//! Jacobian, and simulates simultaneous policy-gradient play.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the sweep driver and
//! the command line live in the `lqgame` companion crate.
//!
//! Stacked policy vectors always use one order: player-major, then row-major
//! within each `K_i`. Gradients and Jacobian rows/columns follow the same order.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod family;
mod game;
pub mod jacobian;
pub mod linalg;
pub mod lq;
pub mod nash;
pub mod pgsim;

pub use error::{Error, Result};
pub use game::{InitialStateModel, JointPolicy, LQGame, ValueMatrix};
pub use jacobian::{
    classify_equilibrium, numerical_jacobian, spectrum, Classification, SpectrumReport,
};
pub use lq::{
    closed_loop, cost, evaluate, gradient_field, is_stabilizing, solve_bellman, state_covariance,
    Cost, PolicyEvaluation, PolicyGradient, Stability,
};
pub use nash::{
    best_response, equilibrium_multiplicity, lyapunov_iterations, solve_dare, verify_nash,
    DareSolution, MultiplicityReport, NashCertificate, NashConfig, NashReport, VerifyConfig,
};
pub use pgsim::{
    detect_cycle, pg_step, sample_near, simulate, time_average, CycleReport, SimConfig, SimStatus,
    SimTrajectory,
};

/// Dense real matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
