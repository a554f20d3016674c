//! IO, parameter sweeps and the command-line front end for [`lqgame_core`].
//!
//! File formats:
//!
//! * games: JSON `{m, N, d, A, B, Q, R, init}` with row-major nested arrays,
//!   where `init` is either `{atoms: [{z, p}, …]}` or `{sigma0: [[…]]}`;
//! * Nash certificates: JSON `{K, P, grad_norm, iterations, converged}`;
//! * spectra: JSON `{eigenvalues: [{re, im}], classification, n_neg, n_pos, n_marginal, h, tau}`;
//! * trajectories: CSV `iter, K{i}_{j}…, f_1…f_N, grad_norm` preceded by `#` lines
//!   holding the run configuration as JSON;
//! * sweeps: CSV `param_value, n, strict_saddle, attracting, repelling, marginal,
//!   solve_failed, freq, ci_lo, ci_hi, destabilized` plus a sidecar directory of
//!   counterexample games.

pub mod error;
pub mod format;
pub mod sweep;
pub mod trajectory;

pub use error::{Error, Result};
pub use lqgame_core;
