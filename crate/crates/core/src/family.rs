//! The two-player, two-state game family used in the counterexample search,
//! the two reference games, and per-sample outcome evaluation.
//!
//! Family members share `B_1 = [1; 1]`, `Q_1 = diag(0.01, 1)`, `R_1 = 0.01` and
//! vary `B_2 = [b; 1]`, `Q_2 = diag(1, q)`, `R_2 = r`, with `A` drawn entrywise
//! from `Uniform(0, 1)`.

use alloc::vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jacobian::{self, Classification, SpectrumReport};
use crate::nash::{lyapunov_iterations, NashCertificate, NashConfig};
use crate::{linalg, Error, InitialStateModel, LQGame, Matrix, Result, Vector};

/// Upper bound on rejection draws of `A` before giving up.
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyParams {
    pub b: f64,
    pub q: f64,
    pub r: f64,
}

impl FamilyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(Error::InvalidParameter("q must be positive"));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter("r must be positive"));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidParameter("b must be finite"));
        }
        Ok(())
    }
}

/// `z_0 ∈ {[1, 1], [1, 1.1]}` with probability 1/2 each.
pub fn two_atom_initial_state() -> InitialStateModel {
    InitialStateModel::from_atoms(vec![
        (Vector::from_vec(vec![1.0, 1.0]), 0.5),
        (Vector::from_vec(vec![1.0, 1.1]), 0.5),
    ])
    .expect("valid two-atom distribution")
}

/// Family member with a given `A`.
pub fn family_game(a: Matrix, params: FamilyParams, init: InitialStateModel) -> Result<LQGame> {
    params.validate()?;
    LQGame::new(
        a,
        vec![
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            Matrix::from_row_slice(2, 1, &[params.b, 1.0]),
        ],
        vec![
            Matrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, params.q]),
        ],
        vec![
            Matrix::from_element(1, 1, 0.01),
            Matrix::from_element(1, 1, params.r),
        ],
        init,
    )
}

/// Draws `A` with iid `Uniform(0, 1)` entries (row-major draw order) until
/// `(A, B_1)` passes the PBH test, and builds the game with `init`.
pub fn sample_game<R: Rng>(
    params: FamilyParams,
    init: &InitialStateModel,
    rng: &mut R,
) -> Result<LQGame> {
    params.validate()?;
    let b1 = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
    for _ in 0..MAX_DRAWS {
        let mut a = Matrix::zeros(2, 2);
        for r in 0..2 {
            for c in 0..2 {
                a[(r, c)] = rng.random::<f64>();
            }
        }
        if linalg::is_stabilizable(&a, &b1)? {
            return family_game(a, params, init.clone());
        }
    }
    Err(Error::NumericalFailure("no stabilizable A drawn"))
}

/// Independent generator for sample `sample` at grid point `grid` of a sweep:
/// ChaCha8 keyed by `seed`, with stream `(grid << 32) | sample`.
pub fn substream_rng(seed: u64, grid: u32, sample: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid as u64) << 32) | sample as u64);
    rng
}

/// Reference game (i): `A = [[0.588, 0.028], [0.570, 0.056]]`, `b = 0`, `q = 0.147`, `r = 0.01`.
pub fn game_i() -> LQGame {
    family_game(
        Matrix::from_row_slice(2, 2, &[0.588, 0.028, 0.570, 0.056]),
        REFERENCE_PARAMS,
        two_atom_initial_state(),
    )
    .expect("reference game (i) is valid")
}

/// Reference game (ii): `A = [[0.511, 0.064], [0.533, 0.993]]`, same parameters as (i).
pub fn game_ii() -> LQGame {
    family_game(
        Matrix::from_row_slice(2, 2, &[0.511, 0.064, 0.533, 0.993]),
        REFERENCE_PARAMS,
        two_atom_initial_state(),
    )
    .expect("reference game (ii) is valid")
}

pub const REFERENCE_PARAMS: FamilyParams = FamilyParams {
    b: 0.0,
    q: 0.147,
    r: 0.01,
};

/// What happened to one sampled game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Classified(Classification),
    /// Lyapunov iterations did not converge.
    SolveFailed,
    /// An iterate or a finite-difference perturbation left the stabilizing set.
    Destabilized,
}

#[derive(Debug, Clone)]
pub struct SampleEvaluation {
    pub outcome: Outcome,
    pub certificate: Option<NashCertificate>,
    pub spectrum: Option<SpectrumReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationConfig {
    pub nash: NashConfig,
    pub step: f64,
    pub tau: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            nash: NashConfig::default(),
            step: jacobian::DEFAULT_STEP,
            tau: jacobian::DEFAULT_TAU,
        }
    }
}

/// Solves for the Nash equilibrium and classifies it. Solver failures are outcomes,
/// not errors.
pub fn evaluate_sample(game: &LQGame, cfg: &EvaluationConfig) -> SampleEvaluation {
    let cert = match lyapunov_iterations(game, None, &cfg.nash) {
        Ok(c) => c,
        Err(Error::DestabilizedDuringIteration { .. } | Error::UnstableSystem { .. }) => {
            return SampleEvaluation {
                outcome: Outcome::Destabilized,
                certificate: None,
                spectrum: None,
            }
        }
        Err(_) => {
            return SampleEvaluation {
                outcome: Outcome::SolveFailed,
                certificate: None,
                spectrum: None,
            }
        }
    };
    match jacobian::classify_equilibrium(game, &cert, cfg.step, cfg.tau) {
        Ok(spec) => SampleEvaluation {
            outcome: Outcome::Classified(spec.classification),
            certificate: Some(cert),
            spectrum: Some(spec),
        },
        Err(Error::PerturbationDestabilizes { .. }) => SampleEvaluation {
            outcome: Outcome::Destabilized,
            certificate: Some(cert),
            spectrum: None,
        },
        Err(_) => SampleEvaluation {
            outcome: Outcome::SolveFailed,
            certificate: Some(cert),
            spectrum: None,
        },
    }
}
