//! Feedback Nash equilibria via Lyapunov iterations on the coupled Riccati
//! equations, and certificates checking them.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, solve_discrete_lyapunov, solve_spd, STABILITY_MARGIN};
use crate::lq::{self, closed_loop_without, Cost};
use crate::pgsim::{random_unit, sample_near};
use crate::{Error, JointPolicy, LQGame, Matrix, Result, ValueMatrix};

const DARE_MAX_ITER: usize = 100_000;
const DARE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
}

/// Stabilizing solution of `P = AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q` by fixed-point
/// iteration from `P = Q`, with gain `K = (R+BᵀPB)⁻¹BᵀPA`. Stops when
/// `‖ΔP‖_∞ < 1e-12·max(1, ‖P‖_∞)`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    let m = a.nrows();
    if !a.is_square()
        || b.nrows() != m
        || q.shape() != (m, m)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::DimensionMismatch {
            what: "DARE operands",
            expected: (m, b.ncols()),
            found: b.shape(),
        });
    }
    if !linalg::is_stabilizable(a, b)? {
        return Err(Error::NotStabilizable);
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITER {
        let pa = &p * a;
        let gain = solve_spd(&(r + &bt * &p * b), &(&bt * &pa))?;
        let next = linalg::symmetrize(&(&at * &pa - &at * &p * b * gain + q));
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("DARE iterate diverged"));
        }
        let delta = (&next - &p).amax();
        p = next;
        if delta < DARE_TOL * p.amax().max(1.0) {
            let k = solve_spd(&(r + &bt * &p * b), &(&bt * &p * a))?;
            return Ok(DareSolution { p, k });
        }
    }
    Err(Error::NoConvergence {
        iterations: DARE_MAX_ITER,
    })
}

/// `‖AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q − P‖_∞` (max entry).
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let bt = b.transpose();
    let gain = (r + &bt * p * b)
        .try_inverse()
        .map(|inv| inv * &bt * p * a)
        .unwrap_or_else(|| Matrix::from_element(b.ncols(), a.ncols(), f64::NAN));
    (a.transpose() * p * a - a.transpose() * p * b * gain + q - p).amax()
}

/// Player `i`'s LQR best response against `K_{−i}`: the DARE on
/// `(A_{−i}, B_i, Q_i, R_i)`.
pub fn best_response(game: &LQGame, policy: &JointPolicy, i: usize) -> Result<DareSolution> {
    game.check_player(i)?;
    game.check_policy(policy)?;
    let a_minus = closed_loop_without(game, policy, i);
    solve_dare(&a_minus, game.b(i), game.q(i), game.r(i))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashConfig {
    /// Stop once every gain moves less than this in a sweep (max entry).
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for NashConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashCertificate {
    pub policy: JointPolicy,
    pub values: Vec<ValueMatrix>,
    /// `‖ω‖_∞` at `policy`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖K_i − BR_i(K_{−i})‖_∞` per player.
    pub dare_gaps: Vec<f64>,
}

/// Initial policy for [`lyapunov_iterations`]: the lowest-index player with a
/// stabilizable pair plays its single-player LQR gain, everyone else zero.
pub fn auto_initial_policy(game: &LQGame) -> Result<JointPolicy> {
    let i = (0..game.players())
        .find(|&i| game.is_stabilizable_for(i))
        .ok_or(Error::NoStabilizablePlayer)?;
    let mut policy = JointPolicy::zeros(game);
    *policy.gain_mut(i) = solve_dare(game.a(), game.b(i), game.q(i), game.r(i))?.k;
    Ok(policy)
}

/// One Gauss-Seidel sweep in ascending player order. Returns the largest gain
/// change (max entry).
fn sweep(game: &LQGame, policy: &mut JointPolicy, iteration: usize) -> Result<f64> {
    let mut largest = 0.0_f64;
    for i in 0..game.players() {
        let a_bar = lq::closed_loop(game, policy)?;
        let radius = linalg::spectral_radius(&a_bar)?;
        if radius >= 1.0 - STABILITY_MARGIN {
            return Err(Error::DestabilizedDuringIteration {
                iteration,
                spectral_radius: radius,
            });
        }
        let k = policy.gain(i);
        let p = solve_discrete_lyapunov(
            &a_bar.transpose(),
            &(k.transpose() * game.r(i) * k + game.q(i)),
        )?;
        let a_minus = closed_loop_without(game, policy, i);
        let b = game.b(i);
        let next = solve_spd(
            &(game.r(i) + b.transpose() * &p * b),
            &(b.transpose() * &p * a_minus),
        )?;
        largest = largest.max((&next - k).amax());
        *policy.gain_mut(i) = next;
    }
    Ok(largest)
}

/// Lyapunov iterations: for each player in turn, solve the Bellman equation at
/// the current joint policy and replace `K_i` by the Riccati gain against the
/// others. Repeats until the gains stop moving and `‖ω‖_∞ < tol`.
pub fn lyapunov_iterations(
    game: &LQGame,
    initial: Option<&JointPolicy>,
    cfg: &NashConfig,
) -> Result<NashCertificate> {
    let mut policy = match initial {
        Some(p) => {
            game.check_policy(p)?;
            p.clone()
        }
        None => auto_initial_policy(game)?,
    };
    let start = lq::is_stabilizing(game, &policy)?;
    if !start.stabilizing {
        return Err(Error::DestabilizedDuringIteration {
            iteration: 0,
            spectral_radius: start.spectral_radius,
        });
    }
    for iteration in 1..=cfg.max_sweeps {
        let change = sweep(game, &mut policy, iteration)?;
        if change < cfg.tol {
            let eval = match lq::evaluate(game, &policy) {
                Ok(e) => e,
                Err(Error::UnstableSystem { spectral_radius }) => {
                    return Err(Error::DestabilizedDuringIteration {
                        iteration,
                        spectral_radius,
                    })
                }
                Err(e) => return Err(e),
            };
            let grad_norm = eval.gradient.norm_inf();
            if grad_norm < cfg.tol {
                let dare_gaps = dare_gaps(game, &policy)?;
                return Ok(NashCertificate {
                    policy,
                    values: eval.values,
                    grad_norm,
                    iterations: iteration,
                    converged: true,
                    dare_gaps,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_sweeps,
    })
}

fn dare_gaps(game: &LQGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    (0..game.players())
        .map(|i| Ok((best_response(game, policy, i)?.k - policy.gain(i)).amax()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// `‖ω‖_∞` below this counts as a critical point.
    pub critical_tol: f64,
    pub probe_eps: f64,
    pub probe_directions: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            critical_tol: 1e-6,
            probe_eps: 1e-3,
            probe_directions: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub grad_norm: f64,
    pub dare_gaps: Vec<f64>,
    pub is_critical: bool,
    /// Largest cost decrease `f_i(K*) − f_i(K_i* + εδ, K_{−i}*)` over random unit
    /// unilateral deviations `δ`. At a Nash equilibrium this is at most rounding noise.
    pub directional_probe: f64,
}

/// Checks a joint policy against the Nash conditions: gradient norm, best-response
/// gaps and a random unilateral-deviation probe.
pub fn verify_nash(game: &LQGame, policy: &JointPolicy, cfg: &VerifyConfig) -> Result<NashReport> {
    let eval = lq::evaluate(game, policy)?;
    let grad_norm = eval.gradient.norm_inf();
    let dare_gaps = dare_gaps(game, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = f64::NEG_INFINITY;
    for i in 0..game.players() {
        let base = eval.costs[i];
        for _ in 0..cfg.probe_directions {
            let delta = random_unit(&mut rng, policy.gain(i).len());
            let mut moved = policy.clone();
            let k = moved.gain_mut(i);
            for (entry, d) in k.iter_mut().zip(delta.iter()) {
                *entry += cfg.probe_eps * d;
            }
            if let Cost::Finite(f) = lq::cost(game, &moved, i)? {
                probe = probe.max(base - f);
            }
        }
    }
    Ok(NashReport {
        grad_norm,
        dare_gaps,
        is_critical: grad_norm < cfg.critical_tol,
        directional_probe: probe,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicityReport {
    pub attempts: usize,
    pub converged: usize,
    /// Distinct equilibria found (pairwise max-entry distance above the threshold).
    pub distinct: Vec<JointPolicy>,
    pub multi_equilibrium: bool,
}

/// Runs [`lyapunov_iterations`] from `starts` random stabilizing initial policies
/// and groups the converged certificates. Policies more than `threshold` apart
/// (max entry) count as distinct equilibria.
pub fn equilibrium_multiplicity(
    game: &LQGame,
    starts: usize,
    seed: u64,
    threshold: f64,
    cfg: &NashConfig,
) -> Result<MultiplicityReport> {
    let center = auto_initial_policy(game)?;
    let mut distinct: Vec<JointPolicy> = Vec::new();
    let mut converged = 0;
    for s in 0..starts {
        // Rejection-sample a stabilizing start in a unit ball around the auto policy.
        let mut init = None;
        for attempt in 0..1000u64 {
            let cand = sample_near(&center, 1.0, seed ^ ((s as u64) << 20) ^ attempt);
            if lq::is_stabilizing(game, &cand)?.stabilizing {
                init = Some(cand);
                break;
            }
        }
        let Some(init) = init else { continue };
        if let Ok(cert) = lyapunov_iterations(game, Some(&init), cfg) {
            converged += 1;
            if !distinct
                .iter()
                .any(|d| d.max_abs_diff(&cert.policy) <= threshold)
            {
                distinct.push(cert.policy);
            }
        }
    }
    Ok(MultiplicityReport {
        attempts: starts,
        converged,
        multi_equilibrium: distinct.len() > 1,
        distinct,
    })
}
