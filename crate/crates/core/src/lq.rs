//! Closed-loop quantities, costs and the exact policy-gradient field.

use alloc::vec::Vec;

use crate::game::stack_row_major;
use crate::linalg::{self, solve_discrete_lyapunov, STABILITY_MARGIN};
use crate::{Error, JointPolicy, LQGame, Matrix, Result, ValueMatrix, Vector};

/// `Ā = A − Σ B_i K_i`.
pub fn closed_loop(game: &LQGame, policy: &JointPolicy) -> Result<Matrix> {
    game.check_policy(policy)?;
    let mut a_bar = game.a().clone();
    for (i, k) in policy.gains().iter().enumerate() {
        a_bar -= game.b(i) * k;
    }
    Ok(a_bar)
}

/// `A_{−i} = A − Σ_{j≠i} B_j K_j`: the dynamics player `i` faces.
pub(crate) fn closed_loop_without(game: &LQGame, policy: &JointPolicy, i: usize) -> Matrix {
    let mut a = game.a().clone();
    for (j, k) in policy.gains().iter().enumerate() {
        if j != i {
            a -= game.b(j) * k;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stabilizing: bool,
    pub spectral_radius: f64,
}

/// Stabilizing iff `ρ(Ā) < 1 − 1e-9`.
pub fn is_stabilizing(game: &LQGame, policy: &JointPolicy) -> Result<Stability> {
    let radius = linalg::spectral_radius(&closed_loop(game, policy)?)?;
    Ok(Stability {
        stabilizing: radius < 1.0 - STABILITY_MARGIN,
        spectral_radius: radius,
    })
}

/// `Σ_K`, the solution of `Ā Σ Āᵀ + Σ_0 = Σ`.
pub fn state_covariance(game: &LQGame, policy: &JointPolicy) -> Result<Matrix> {
    solve_discrete_lyapunov(&closed_loop(game, policy)?, game.sigma0())
}

/// `P_i` from the Bellman equation `P = ĀᵀPĀ + K_iᵀR_iK_i + Q_i`.
pub fn solve_bellman(game: &LQGame, policy: &JointPolicy, i: usize) -> Result<ValueMatrix> {
    game.check_player(i)?;
    let a_bar = closed_loop(game, policy)?;
    bellman_with(game, policy, i, &a_bar)
}

fn bellman_with(
    game: &LQGame,
    policy: &JointPolicy,
    i: usize,
    a_bar: &Matrix,
) -> Result<ValueMatrix> {
    let k = policy.gain(i);
    let w = k.transpose() * game.r(i) * k + game.q(i);
    Ok(ValueMatrix::new(solve_discrete_lyapunov(
        &a_bar.transpose(),
        &w,
    )?))
}

/// Infinite-horizon cost of a player. Non-stabilizing policies have no finite cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    NonFinite,
}

impl Cost {
    pub fn value(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::NonFinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }
}

/// `f_i = tr(P_i Σ_0)`, or [`Cost::NonFinite`] when the policy does not stabilize.
pub fn cost(game: &LQGame, policy: &JointPolicy, i: usize) -> Result<Cost> {
    game.check_player(i)?;
    if !is_stabilizing(game, policy)?.stabilizing {
        return Ok(Cost::NonFinite);
    }
    match solve_bellman(game, policy, i) {
        Ok(p) => Ok(Cost::Finite((p.matrix() * game.sigma0()).trace())),
        Err(Error::UnstableSystem { .. }) => Ok(Cost::NonFinite),
        Err(e) => Err(e),
    }
}

/// Per-player gradients `D_i f_i`, each `d_i × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub per_player: Vec<Matrix>,
}

impl PolicyGradient {
    /// `ω(x)` in the canonical stacking order.
    pub fn stacked(&self) -> Vector {
        stack_row_major(&self.per_player)
    }

    /// `‖ω‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        self.per_player.iter().map(|g| g.amax()).fold(0.0, f64::max)
    }
}

/// Everything computed from one stabilizing joint policy.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub closed_loop: Matrix,
    pub spectral_radius: f64,
    pub state_covariance: Matrix,
    pub values: Vec<ValueMatrix>,
    pub costs: Vec<f64>,
    pub gradient: PolicyGradient,
}

/// Closed loop, `Σ_K`, all `P_i`, costs and `D_i f_i = 2(R_iK_i − B_iᵀP_iĀ)Σ_K`.
pub fn evaluate(game: &LQGame, policy: &JointPolicy) -> Result<PolicyEvaluation> {
    let a_bar = closed_loop(game, policy)?;
    let radius = linalg::spectral_radius(&a_bar)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableSystem {
            spectral_radius: radius,
        });
    }
    let sigma_k = solve_discrete_lyapunov(&a_bar, game.sigma0())?;
    let mut values = Vec::with_capacity(game.players());
    let mut costs = Vec::with_capacity(game.players());
    let mut grads = Vec::with_capacity(game.players());
    for i in 0..game.players() {
        let p = bellman_with(game, policy, i, &a_bar)?;
        let k = policy.gain(i);
        let g = (game.r(i) * k - game.b(i).transpose() * p.matrix() * &a_bar) * &sigma_k * 2.0;
        costs.push((p.matrix() * game.sigma0()).trace());
        grads.push(g);
        values.push(p);
    }
    Ok(PolicyEvaluation {
        closed_loop: a_bar,
        spectral_radius: radius,
        state_covariance: sigma_k,
        values,
        costs,
        gradient: PolicyGradient { per_player: grads },
    })
}

/// The policy-gradient field `ω = (D_1f_1, …, D_Nf_N)`.
pub fn gradient_field(game: &LQGame, policy: &JointPolicy) -> Result<PolicyGradient> {
    Ok(evaluate(game, policy)?.gradient)
}
