use lqgame_core::nash::{auto_initial_policy, dare_residual};
use lqgame_core::{
    best_response, equilibrium_multiplicity, evaluate, family, lyapunov_iterations, sample_near,
    solve_dare, verify_nash, Error, LQGame, Matrix, NashConfig, VerifyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_dare(a: f64, b: f64, q: f64, r: f64) -> f64 {
    let lin = r - a * a * r - q * b * b;
    (-lin + (lin * lin + 4.0 * b * b * q * r).sqrt()) / (2.0 * b * b)
}

#[test]
fn scalar_dare_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(0.2..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let q = rng.random_range(0.05..3.0);
        let r = rng.random_range(0.05..3.0);
        let m = |v: f64| Matrix::from_element(1, 1, v);
        let sol = solve_dare(&m(a), &m(b), &m(q), &m(r)).unwrap();
        let exact = scalar_dare(a, b, q, r);
        assert!(
            (sol.p[(0, 0)] - exact).abs() < 1e-10 * exact.max(1.0),
            "{a} {b} {q} {r}"
        );
        assert!((a - b * sol.k[(0, 0)]).abs() < 1.0);
    }
}

#[test]
fn dare_residual_small_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut solved = 0;
    while solved < 300 {
        let m = rng.random_range(1..=4);
        let d = rng.random_range(1..=m);
        let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        let g = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose() + Matrix::identity(m, m) * 0.1;
        let r = Matrix::identity(d, d) * rng.random_range(0.1..2.0);
        match solve_dare(&a, &b, &q, &r) {
            Ok(sol) => {
                assert!(dare_residual(&a, &b, &q, &r, &sol.p) < 1e-9 * sol.p.amax().max(1.0));
                let closed = &a - &b * &sol.k;
                assert!(lqgame_core::linalg::spectral_radius(&closed).unwrap() < 1.0);
                solved += 1;
            }
            Err(Error::NotStabilizable) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

fn check_theorem_one(game: &LQGame) {
    let cert = lyapunov_iterations(game, None, &NashConfig::default()).unwrap();
    assert!(cert.converged);
    assert!(cert.grad_norm < 1e-6);
    assert!(cert.dare_gaps.iter().all(|g| *g < 1e-6));
    for i in 0..game.players() {
        let br = best_response(game, &cert.policy, i).unwrap();
        assert!((&br.k - cert.policy.gain(i)).amax() < 1e-6);
        assert!((&br.p - cert.values[i].matrix()).amax() < 1e-6 * br.p.amax().max(1.0));
    }
    let report = verify_nash(game, &cert.policy, &VerifyConfig::default()).unwrap();
    assert!(report.is_critical);
    assert!(
        report.directional_probe <= 1e-8,
        "probe {}",
        report.directional_probe
    );
}

#[test]
fn reference_games_satisfy_nash_conditions() {
    check_theorem_one(&family::game_i());
    check_theorem_one(&family::game_ii());
}

#[test]
fn sampled_games_satisfy_nash_conditions_when_solved() {
    let init = family::two_atom_initial_state();
    let params = family::FamilyParams {
        b: 0.0,
        q: 0.01,
        r: 0.5,
    };
    let mut solved = 0;
    for s in 0..40 {
        let mut rng = family::substream_rng(21, 0, s);
        let game = family::sample_game(params, &init, &mut rng).unwrap();
        match lyapunov_iterations(&game, None, &NashConfig::default()) {
            Ok(_) => {
                check_theorem_one(&game);
                solved += 1;
            }
            Err(Error::NoConvergence { .. } | Error::DestabilizedDuringIteration { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(solved > 20);
}

#[test]
fn nash_is_a_fixed_point_of_the_iteration() {
    let game = family::game_i();
    let cfg = NashConfig::default();
    let cert = lyapunov_iterations(&game, None, &cfg).unwrap();
    let again = lyapunov_iterations(&game, Some(&cert.policy), &cfg).unwrap();
    assert!(again.iterations <= 2);
    assert!(again.policy.max_abs_diff(&cert.policy) < 1e-8);
}

#[test]
fn perturbed_policy_fails_verification() {
    let game = family::game_i();
    let cert = lyapunov_iterations(&game, None, &NashConfig::default()).unwrap();
    let off = sample_near(&cert.policy, 0.05, 4);
    let report = verify_nash(&game, &off, &VerifyConfig::default()).unwrap();
    assert!(!report.is_critical);
    assert!(report.directional_probe > 1e-8);
    assert!(report.dare_gaps.iter().any(|g| *g > 1e-4));
}

#[test]
fn auto_initial_policy_is_stabilizing() {
    for game in [family::game_i(), family::game_ii()] {
        let p = auto_initial_policy(&game).unwrap();
        assert!(evaluate(&game, &p).is_ok());
        assert_eq!(p.gain(1).amax(), 0.0);
    }
}

#[test]
fn game_i_has_a_single_equilibrium() {
    let game = family::game_i();
    let report = equilibrium_multiplicity(&game, 20, 3, 1e-6, &NashConfig::default()).unwrap();
    assert!(report.converged > 0);
    assert_eq!(report.distinct.len(), 1);
    assert!(!report.multi_equilibrium);
}
