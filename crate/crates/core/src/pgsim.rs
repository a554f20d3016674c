//! Simultaneous policy-gradient play and trajectory diagnostics.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lq::{self, Cost, PolicyEvaluation};
use crate::{Error, JointPolicy, LQGame, Result, Vector};

/// Gradient norm below which a simulation stops as converged to a critical point.
pub const CRITICAL_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Per-player step sizes `γ_i`.
    pub step_sizes: Vec<f64>,
    pub max_iters: usize,
    pub record_every: usize,
    /// Radius of the ball the initial policy is drawn from (see [`simulate_from_ball`]).
    pub init_radius: f64,
    pub seed: u64,
    /// When false, the first non-stabilizing iterate is appended to the trajectory
    /// (with non-finite costs) before the run ends. Either way the run ends there.
    pub stop_on_destabilize: bool,
}

impl SimConfig {
    /// Same step size for every player.
    pub fn uniform(players: usize, step: f64, max_iters: usize) -> Self {
        Self {
            step_sizes: alloc::vec![step; players],
            max_iters,
            record_every: 1,
            init_radius: 0.0,
            seed: 0,
            stop_on_destabilize: true,
        }
    }

    pub fn validate(&self, players: usize) -> Result<()> {
        if self.step_sizes.len() != players {
            return Err(Error::InvalidParameter("one step size per player required"));
        }
        if !self.step_sizes.iter().all(|g| *g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter("step sizes must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1"));
        }
        if !(self.init_radius >= 0.0) {
            return Err(Error::InvalidParameter("init_radius must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStatus {
    Completed,
    ConvergedToCritical,
    /// Iteration at which the joint policy stopped stabilizing.
    Destabilized(usize),
}

/// Recorded gradient-play run. All series are indexed by recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    /// Iteration number of each recorded sample.
    pub iters: Vec<usize>,
    pub iterates: Vec<JointPolicy>,
    /// `costs[k][i]` is player `i`'s cost at sample `k`.
    pub costs: Vec<Vec<Cost>>,
    /// `‖ω‖_∞` per sample; `None` for a non-stabilizing sample.
    pub grad_norms: Vec<Option<f64>>,
    pub status: SimStatus,
    /// Iterations between regular samples.
    pub record_every: usize,
}

impl SimTrajectory {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn final_policy(&self) -> &JointPolicy {
        self.iterates
            .last()
            .expect("trajectory records at least the initial policy")
    }

    /// Stacked iterates.
    pub fn points(&self) -> Vec<Vector> {
        self.iterates.iter().map(|p| p.to_vector()).collect()
    }

    fn push(
        &mut self,
        iter: usize,
        policy: &JointPolicy,
        eval: Option<&PolicyEvaluation>,
        players: usize,
    ) {
        if self.iters.last() == Some(&iter) {
            return;
        }
        self.iters.push(iter);
        self.iterates.push(policy.clone());
        match eval {
            Some(e) => {
                self.costs
                    .push(e.costs.iter().map(|c| Cost::Finite(*c)).collect());
                self.grad_norms.push(Some(e.gradient.norm_inf()));
            }
            None => {
                self.costs.push(alloc::vec![Cost::NonFinite; players]);
                self.grad_norms.push(None);
            }
        }
    }
}

fn apply_step(policy: &JointPolicy, eval: &PolicyEvaluation, steps: &[f64]) -> JointPolicy {
    JointPolicy::new(
        policy
            .gains()
            .iter()
            .zip(&eval.gradient.per_player)
            .zip(steps)
            .map(|((k, g), gamma)| k - g * *gamma)
            .collect(),
    )
}

/// One simultaneous step `K_i ← K_i − γ_i D_if_i(K)`, all gradients taken at the
/// current point.
pub fn pg_step(game: &LQGame, policy: &JointPolicy, steps: &[f64]) -> Result<JointPolicy> {
    if steps.len() != game.players() {
        return Err(Error::InvalidParameter("one step size per player required"));
    }
    let eval = lq::evaluate(game, policy)?;
    Ok(apply_step(policy, &eval, steps))
}

/// Runs gradient play from `init` until `max_iters`, destabilization, or
/// `‖ω‖_∞ < 1e-10`. Samples every `record_every` iterations plus the last one.
pub fn simulate(game: &LQGame, init: &JointPolicy, cfg: &SimConfig) -> Result<SimTrajectory> {
    cfg.validate(game.players())?;
    game.check_policy(init)?;
    let players = game.players();
    let mut traj = SimTrajectory {
        iters: Vec::new(),
        iterates: Vec::new(),
        costs: Vec::new(),
        grad_norms: Vec::new(),
        status: SimStatus::Completed,
        record_every: cfg.record_every,
    };
    let mut x = init.clone();
    // Last stabilizing iterate, kept so the trajectory ends on it.
    let mut previous: Option<(usize, JointPolicy, PolicyEvaluation)> = None;
    let mut n = 0;
    loop {
        let eval = match lq::evaluate(game, &x) {
            Ok(e) => e,
            Err(Error::UnstableSystem { .. } | Error::SolveFailure(_)) => {
                if let Some((k, p, e)) = &previous {
                    traj.push(*k, p, Some(e), players);
                }
                if !cfg.stop_on_destabilize || traj.is_empty() {
                    traj.push(n, &x, None, players);
                }
                traj.status = SimStatus::Destabilized(n);
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if eval.gradient.norm_inf() < CRITICAL_GRAD_TOL {
            traj.push(n, &x, Some(&eval), players);
            traj.status = SimStatus::ConvergedToCritical;
            return Ok(traj);
        }
        if n == cfg.max_iters {
            traj.push(n, &x, Some(&eval), players);
            traj.status = SimStatus::Completed;
            return Ok(traj);
        }
        if n % cfg.record_every == 0 {
            traj.push(n, &x, Some(&eval), players);
        }
        let next = apply_step(&x, &eval, &cfg.step_sizes);
        previous = Some((n, x, eval));
        x = next;
        n += 1;
    }
}

/// Draws the initial policy uniformly from the ball of radius `cfg.init_radius`
/// around `center` (seeded by `cfg.seed`), then runs [`simulate`].
pub fn simulate_from_ball(
    game: &LQGame,
    center: &JointPolicy,
    cfg: &SimConfig,
) -> Result<(JointPolicy, SimTrajectory)> {
    let init = sample_near(center, cfg.init_radius, cfg.seed);
    let traj = simulate(game, &init, cfg)?;
    Ok((init, traj))
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}

/// Uniform sample from the Euclidean ball of the given radius around the stacked
/// policy: Gaussian direction, radius `r·U^{1/n}`.
pub fn sample_near(policy: &JointPolicy, radius: f64, seed: u64) -> JointPolicy {
    let center = policy.to_vector();
    let n = center.len();
    if radius == 0.0 || n == 0 {
        return policy.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = random_unit(&mut rng, n);
    let u: f64 = rng.random();
    let r = radius * libm::pow(u, 1.0 / n as f64);
    policy
        .reshaped(&(center + dir * r))
        .expect("shape preserved")
}

/// Running means `x̄_n = (1/(n − burn_in)) Σ_{burn_in < k ≤ n} x_k` over recorded
/// samples.
pub fn time_average(traj: &SimTrajectory, burn_in: usize) -> Result<Vec<JointPolicy>> {
    if burn_in + 1 >= traj.len() {
        return Err(Error::InvalidParameter("time-average window is empty"));
    }
    let template = &traj.iterates[0];
    let mut sum = Vector::zeros(template.len());
    let mut out = Vec::with_capacity(traj.len() - burn_in - 1);
    for (count, p) in traj.iterates[burn_in + 1..].iter().enumerate() {
        sum += p.to_vector();
        out.push(template.reshaped(&(&sum / (count + 1) as f64))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub is_recurrent: bool,
    /// Modal return time in iterations.
    pub period_estimate: Option<usize>,
    /// Largest pairwise distance over the post-burn-in segment.
    pub amplitude: f64,
    pub eps_rec: f64,
    /// Fraction of probe points whose neighbourhood the trajectory re-entered.
    pub return_fraction: f64,
}

const CYCLE_ANCHORS: usize = 64;
const MIN_RETURN_FRACTION: f64 = 0.9;
const MIN_REGULAR_FRACTION: f64 = 0.8;

/// Recurrence test on recorded samples after `burn_in`. `eps_rec` defaults to
/// `1e-3` times the bounding-box diagonal of the segment.
pub fn detect_cycle(traj: &SimTrajectory, burn_in: usize, eps_rec: Option<f64>) -> CycleReport {
    detect_cycle_in(&traj.points(), traj.record_every, burn_in, eps_rec)
}

/// [`detect_cycle`] on raw points sampled every `stride` iterations.
///
/// A probe point `y_k` returns when, after leaving its `10·ε` neighbourhood, the
/// polyline through later samples passes within `ε` of it. The run is recurrent
/// when the amplitude exceeds `10·ε`, at least 90% of probes return, and at least
/// 80% of return times sit within 10% of the modal one.
pub fn detect_cycle_in(
    points: &[Vector],
    stride: usize,
    burn_in: usize,
    eps_rec: Option<f64>,
) -> CycleReport {
    let segment = points.get(burn_in..).unwrap_or(&[]);
    let amplitude = max_pairwise_distance(segment);
    let eps = eps_rec.unwrap_or_else(|| 1e-3 * bounding_box_diagonal(segment));
    let mut report = CycleReport {
        is_recurrent: false,
        period_estimate: None,
        amplitude,
        eps_rec: eps,
        return_fraction: 0.0,
    };
    if segment.len() < 3 || !(amplitude > 10.0 * eps) {
        return report;
    }
    let half = segment.len() / 2;
    let anchors = CYCLE_ANCHORS.min(half.max(1));
    let mut lags = Vec::with_capacity(anchors);
    for a in 0..anchors {
        let k = a * half / anchors;
        if let Some(lag) = first_return(segment, k, eps) {
            lags.push(lag);
        }
    }
    report.return_fraction = lags.len() as f64 / anchors as f64;
    if lags.is_empty() {
        return report;
    }
    let rounded: Vec<usize> = lags.iter().map(|l| libm::round(*l) as usize).collect();
    let modal = mode(&rounded);
    let regular = lags
        .iter()
        .filter(|l| libm::fabs(**l - modal as f64) <= (0.1 * modal as f64).max(1.0))
        .count();
    report.period_estimate = Some(modal * stride.max(1));
    report.is_recurrent = report.return_fraction >= MIN_RETURN_FRACTION
        && regular as f64 >= MIN_REGULAR_FRACTION * lags.len() as f64;
    report
}

/// Fractional number of samples until the polyline re-enters the `eps` ball
/// around `segment[k]` after having left the `10·eps` ball.
fn first_return(segment: &[Vector], k: usize, eps: f64) -> Option<f64> {
    let anchor = &segment[k];
    let exit = 10.0 * eps;
    let mut exited = false;
    for j in k + 1..segment.len() - 1 {
        if !exited {
            exited = (&segment[j] - anchor).norm() > exit;
            continue;
        }
        let (a, b) = (&segment[j], &segment[j + 1]);
        let ab = b - a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((anchor - a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if (a + &ab * t - anchor).norm() <= eps {
            return Some((j - k) as f64 + t);
        }
    }
    None
}

fn mode(values: &[usize]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let (mut best, mut best_count) = (sorted[0], 0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best_count {
            best = sorted[i];
            best_count = j - i;
        }
        i = j;
    }
    best
}

fn max_pairwise_distance(points: &[Vector]) -> f64 {
    let mut best = 0.0_f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    libm::sqrt(best)
}

fn bounding_box_diagonal(points: &[Vector]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
