use lqgame_core::jacobian::{DEFAULT_STEP, DEFAULT_TAU};
use lqgame_core::{
    classify_equilibrium, family, lyapunov_iterations, numerical_jacobian, spectrum,
    Classification, InitialStateModel, LQGame, Matrix, NashConfig,
};

fn solved(game: &LQGame) -> lqgame_core::NashCertificate {
    lyapunov_iterations(game, None, &NashConfig::default()).unwrap()
}

#[test]
fn jacobian_is_stable_under_step_halving() {
    for game in [family::game_i(), family::game_ii()] {
        let cert = solved(&game);
        let j1 = numerical_jacobian(&game, &cert.policy, 1e-4).unwrap();
        let j2 = numerical_jacobian(&game, &cert.policy, 5e-5).unwrap();
        assert!((&j1 - &j2).amax() < 1e-5 * j1.amax());
        let a = classify_equilibrium(&game, &cert, 1e-4, DEFAULT_TAU).unwrap();
        let b = classify_equilibrium(&game, &cert, 1e-6, DEFAULT_TAU).unwrap();
        assert_eq!(a.classification, b.classification);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).norm() < 1e-4 * (1.0 + x.norm()));
        }
    }
}

#[test]
fn eigenvalues_are_sorted_and_counted() {
    let cert = solved(&family::game_ii());
    let report =
        classify_equilibrium(&family::game_ii(), &cert, DEFAULT_STEP, DEFAULT_TAU).unwrap();
    assert_eq!(report.eigenvalues.len(), 4);
    assert!(report.eigenvalues.windows(2).all(|w| w[0].re >= w[1].re));
    assert_eq!(report.n_neg + report.n_pos + report.n_marginal, 4);
}

#[test]
fn single_player_optimum_is_attracting() {
    let init = family::two_atom_initial_state();
    for s in 0..10 {
        let mut rng = family::substream_rng(5, 0, s);
        let game = family::sample_game(family::REFERENCE_PARAMS, &init, &mut rng).unwrap();
        let lqr = game.single_player(0).unwrap();
        let cert = solved(&lqr);
        let report = classify_equilibrium(&lqr, &cert, DEFAULT_STEP, DEFAULT_TAU).unwrap();
        assert_eq!(report.classification, Classification::Attracting);
    }
}

#[test]
fn zero_dynamics_is_not_a_strict_saddle() {
    let g = family::game_i();
    let game = LQGame::new(
        Matrix::zeros(2, 2),
        vec![g.b(0).clone(), g.b(1).clone()],
        vec![g.q(0).clone(), g.q(1).clone()],
        vec![g.r(0).clone(), g.r(1).clone()],
        InitialStateModel::from_covariance(Matrix::identity(2, 2)).unwrap(),
    )
    .unwrap();
    let cert = solved(&game);
    assert_eq!(cert.policy.to_vector().amax(), 0.0);
    let report = classify_equilibrium(&game, &cert, DEFAULT_STEP, DEFAULT_TAU).unwrap();
    assert_ne!(report.classification, Classification::StrictSaddle);
}

#[test]
fn jacobian_of_quadratic_surrogate_is_exact() {
    let j = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -3.0]);
    let r = spectrum(&j, DEFAULT_TAU).unwrap();
    assert_eq!(r.classification, Classification::StrictSaddle);
    assert!((r.eigenvalues[0].re - 2.0).abs() < 1e-12);
    assert!((r.eigenvalues[1].re + 3.0).abs() < 1e-12);
}
