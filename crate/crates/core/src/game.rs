use alloc::vec::Vec;

use crate::linalg::{self, is_positive_definite, is_symmetric, symmetrize};
use crate::{Error, Matrix, Result, Vector};

const SYMMETRY_TOL: f64 = 1e-12;
const PROBABILITY_TOL: f64 = 1e-12;

/// Distribution of the initial state, summarised by its second moment `Σ_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateModel {
    atoms: Option<Vec<(Vector, f64)>>,
    sigma0: Matrix,
}

impl InitialStateModel {
    /// Finite distribution over initial states; `Σ_0 = Σ p_k z_k z_kᵀ`.
    pub fn from_atoms(atoms: Vec<(Vector, f64)>) -> Result<Self> {
        let Some((first, _)) = atoms.first() else {
            return Err(Error::InvalidInitialState("no atoms"));
        };
        let m = first.len();
        let mut total = 0.0;
        let mut sigma0 = Matrix::zeros(m, m);
        for (z, p) in &atoms {
            if z.len() != m {
                return Err(Error::InvalidInitialState("atoms of different dimension"));
            }
            if !(*p >= 0.0) {
                return Err(Error::InvalidInitialState("negative probability"));
            }
            total += p;
            sigma0 += z * z.transpose() * *p;
        }
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::InvalidInitialState(
                "probabilities do not sum to one",
            ));
        }
        Ok(Self {
            atoms: Some(atoms),
            sigma0: symmetrize(&sigma0),
        })
    }

    /// Explicit second moment; must be symmetric positive semidefinite.
    pub fn from_covariance(sigma0: Matrix) -> Result<Self> {
        if !is_symmetric(&sigma0, SYMMETRY_TOL) {
            return Err(Error::InvalidInitialState("covariance not symmetric"));
        }
        let sigma0 = symmetrize(&sigma0);
        let min_eig = sigma0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if sigma0.nrows() > 0 && min_eig < -1e-12 * (1.0 + sigma0.amax()) {
            return Err(Error::InvalidInitialState(
                "covariance not positive semidefinite",
            ));
        }
        Ok(Self {
            atoms: None,
            sigma0,
        })
    }

    pub fn sigma0(&self) -> &Matrix {
        &self.sigma0
    }

    pub fn atoms(&self) -> Option<&[(Vector, f64)]> {
        self.atoms.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }
}

/// An N-player LQ game: dynamics `(A, B_i)`, costs `(Q_i, R_i)` and the
/// initial-state model.
///
/// Construction checks dimensions, `Q_i ≻ 0`, `R_i ≻ 0`, and that at least one
/// pair `(A, B_i)` is stabilizable.
#[derive(Debug, Clone, PartialEq)]
pub struct LQGame {
    a: Matrix,
    b: Vec<Matrix>,
    q: Vec<Matrix>,
    r: Vec<Matrix>,
    init: InitialStateModel,
    stabilizable: Vec<bool>,
}

impl LQGame {
    pub fn new(
        a: Matrix,
        b: Vec<Matrix>,
        q: Vec<Matrix>,
        r: Vec<Matrix>,
        init: InitialStateModel,
    ) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(Error::DimensionMismatch {
                what: "A",
                expected: (m, m),
                found: a.shape(),
            });
        }
        let n = b.len();
        if n == 0 {
            return Err(Error::InvalidParameter("game needs at least one player"));
        }
        if q.len() != n || r.len() != n {
            return Err(Error::InvalidParameter(
                "B, Q and R must list one matrix per player",
            ));
        }
        if init.dim() != m {
            return Err(Error::DimensionMismatch {
                what: "Sigma0",
                expected: (m, m),
                found: init.sigma0().shape(),
            });
        }
        let mut q_sym = Vec::with_capacity(n);
        let mut r_sym = Vec::with_capacity(n);
        for i in 0..n {
            let di = b[i].ncols();
            if b[i].nrows() != m {
                return Err(Error::DimensionMismatch {
                    what: "B_i",
                    expected: (m, di),
                    found: b[i].shape(),
                });
            }
            if q[i].shape() != (m, m) {
                return Err(Error::DimensionMismatch {
                    what: "Q_i",
                    expected: (m, m),
                    found: q[i].shape(),
                });
            }
            if r[i].shape() != (di, di) {
                return Err(Error::DimensionMismatch {
                    what: "R_i",
                    expected: (di, di),
                    found: r[i].shape(),
                });
            }
            if !is_symmetric(&q[i], SYMMETRY_TOL) {
                return Err(Error::NotSymmetric {
                    what: "Q",
                    player: i,
                });
            }
            if !is_symmetric(&r[i], SYMMETRY_TOL) {
                return Err(Error::NotSymmetric {
                    what: "R",
                    player: i,
                });
            }
            if !is_positive_definite(&q[i]) {
                return Err(Error::NotPositiveDefinite {
                    what: "Q",
                    player: i,
                });
            }
            if !is_positive_definite(&r[i]) {
                return Err(Error::NotPositiveDefinite {
                    what: "R",
                    player: i,
                });
            }
            q_sym.push(symmetrize(&q[i]));
            r_sym.push(symmetrize(&r[i]));
        }
        let stabilizable = b
            .iter()
            .map(|bi| linalg::is_stabilizable(&a, bi))
            .collect::<Result<Vec<_>>>()?;
        if !stabilizable.iter().any(|s| *s) {
            return Err(Error::NoStabilizablePlayer);
        }
        Ok(Self {
            a,
            b,
            q: q_sym,
            r: r_sym,
            init,
            stabilizable,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self, i: usize) -> &Matrix {
        &self.b[i]
    }

    pub fn q(&self, i: usize) -> &Matrix {
        &self.q[i]
    }

    pub fn r(&self, i: usize) -> &Matrix {
        &self.r[i]
    }

    pub fn init(&self) -> &InitialStateModel {
        &self.init
    }

    pub fn sigma0(&self) -> &Matrix {
        self.init.sigma0()
    }

    /// Number of players `N`.
    pub fn players(&self) -> usize {
        self.b.len()
    }

    /// State dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `d_i` of player `i`.
    pub fn input_dim(&self, i: usize) -> usize {
        self.b[i].ncols()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.b.iter().map(|b| b.ncols()).collect()
    }

    /// Length `m·d` of a stacked joint policy.
    pub fn policy_len(&self) -> usize {
        self.state_dim() * self.b.iter().map(|b| b.ncols()).sum::<usize>()
    }

    /// Whether `(A, B_i)` passed the PBH test.
    pub fn is_stabilizable_for(&self, i: usize) -> bool {
        self.stabilizable[i]
    }

    /// Same game with a different initial-state model.
    pub fn with_init(&self, init: InitialStateModel) -> Result<Self> {
        if init.dim() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "Sigma0",
                expected: (self.state_dim(), self.state_dim()),
                found: init.sigma0().shape(),
            });
        }
        Ok(Self {
            init,
            ..self.clone()
        })
    }

    /// Single-player game `(A, B_i, Q_i, R_i)` with the same initial state.
    pub fn single_player(&self, i: usize) -> Result<Self> {
        self.check_player(i)?;
        Self::new(
            self.a.clone(),
            alloc::vec![self.b[i].clone()],
            alloc::vec![self.q[i].clone()],
            alloc::vec![self.r[i].clone()],
            self.init.clone(),
        )
    }

    pub(crate) fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.players() {
            return Err(Error::PlayerIndex {
                index: i,
                players: self.players(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, policy: &JointPolicy) -> Result<()> {
        if policy.players() != self.players() {
            return Err(Error::InvalidParameter(
                "policy has wrong number of players",
            ));
        }
        for (i, k) in policy.gains().iter().enumerate() {
            let expected = (self.input_dim(i), self.state_dim());
            if k.shape() != expected {
                return Err(Error::DimensionMismatch {
                    what: "K_i",
                    expected,
                    found: k.shape(),
                });
            }
        }
        Ok(())
    }
}

/// Joint feedback policy `(K_1, …, K_N)`, with `K_i` of shape `d_i × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    gains: Vec<Matrix>,
}

impl JointPolicy {
    pub fn new(gains: Vec<Matrix>) -> Self {
        Self { gains }
    }

    /// All-zero policy shaped for `game`.
    pub fn zeros(game: &LQGame) -> Self {
        Self::zeros_with(game.state_dim(), &game.input_dims())
    }

    pub fn zeros_with(state_dim: usize, input_dims: &[usize]) -> Self {
        Self {
            gains: input_dims
                .iter()
                .map(|d| Matrix::zeros(*d, state_dim))
                .collect(),
        }
    }

    pub fn gains(&self) -> &[Matrix] {
        &self.gains
    }

    pub fn gain(&self, i: usize) -> &Matrix {
        &self.gains[i]
    }

    pub fn gain_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.gains[i]
    }

    pub fn into_gains(self) -> Vec<Matrix> {
        self.gains
    }

    pub fn players(&self) -> usize {
        self.gains.len()
    }

    pub fn len(&self) -> usize {
        self.gains.iter().map(|k| k.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked vector: player-major, row-major within each `K_i`.
    pub fn to_vector(&self) -> Vector {
        stack_row_major(&self.gains)
    }

    /// Inverse of [`to_vector`](Self::to_vector) for the given shape.
    pub fn from_vector(state_dim: usize, input_dims: &[usize], v: &Vector) -> Result<Self> {
        Ok(Self {
            gains: unstack_row_major(state_dim, input_dims, v)?,
        })
    }

    /// Policy with the same shape as `self` holding the entries of `v`.
    pub fn reshaped(&self, v: &Vector) -> Result<Self> {
        let m = self.gains.first().map_or(0, |k| k.ncols());
        let dims: Vec<usize> = self.gains.iter().map(|k| k.nrows()).collect();
        Self::from_vector(m, &dims, v)
    }

    /// Euclidean distance between stacked vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        libm::sqrt(
            self.gains
                .iter()
                .zip(&other.gains)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>(),
        )
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.gains
            .iter()
            .zip(&other.gains)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn stack_row_major(blocks: &[Matrix]) -> Vector {
    let mut out = Vec::with_capacity(blocks.iter().map(|b| b.len()).sum());
    for b in blocks {
        for r in 0..b.nrows() {
            for c in 0..b.ncols() {
                out.push(b[(r, c)]);
            }
        }
    }
    Vector::from_vec(out)
}

pub(crate) fn unstack_row_major(
    state_dim: usize,
    input_dims: &[usize],
    v: &Vector,
) -> Result<Vec<Matrix>> {
    let total: usize = input_dims.iter().sum::<usize>() * state_dim;
    if v.len() != total {
        return Err(Error::DimensionMismatch {
            what: "stacked policy",
            expected: (total, 1),
            found: (v.len(), 1),
        });
    }
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(input_dims.len());
    for &d in input_dims {
        let n = d * state_dim;
        blocks.push(Matrix::from_row_slice(
            d,
            state_dim,
            &v.as_slice()[offset..offset + n],
        ));
        offset += n;
    }
    Ok(blocks)
}

/// Value matrix `P_i` of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrix(Matrix);

impl ValueMatrix {
    pub(crate) fn new(p: Matrix) -> Self {
        Self(p)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn is_positive_definite(&self) -> bool {
        is_positive_definite(&self.0)
    }
}
