use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{what} of player {player} is not symmetric")]
    NotSymmetric { what: &'static str, player: usize },
    #[error("{what} of player {player} is not positive definite")]
    NotPositiveDefinite { what: &'static str, player: usize },
    #[error("invalid initial-state model: {0}")]
    InvalidInitialState(&'static str),
    #[error("no player has a stabilizable pair (A, B_i)")]
    NoStabilizablePlayer,
    #[error("player index {index} out of range for a {players}-player game")]
    PlayerIndex { index: usize, players: usize },
    #[error("closed loop is not stable (spectral radius {spectral_radius})")]
    UnstableSystem { spectral_radius: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(&'static str),
    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error(
        "policy destabilized during iteration {iteration} (spectral radius {spectral_radius})"
    )]
    DestabilizedDuringIteration {
        iteration: usize,
        spectral_radius: f64,
    },
    #[error("finite-difference perturbation of coordinate {coordinate} destabilizes; try a smaller step")]
    PerturbationDestabilizes { coordinate: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
