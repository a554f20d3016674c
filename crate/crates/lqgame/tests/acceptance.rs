//! Acceptance criteria 1 to 8. Each test writes one `PASS`/`FAIL` line to the
//! process stdout (bypassing the test harness capture) before asserting.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lqgame::sweep::{compute_sweep, parse_grid, SweepParam, SweepResult, SweepSpec};
use lqgame_core::family::{self, EvaluationConfig, FamilyParams};
use lqgame_core::jacobian::{DEFAULT_STEP, DEFAULT_TAU};
use lqgame_core::linalg::{lyapunov_residual, solve_discrete_lyapunov, spectral_radius};
use lqgame_core::nash::{auto_initial_policy, dare_residual};
use lqgame_core::{
    classify_equilibrium, cost, detect_cycle, gradient_field, is_stabilizing, lyapunov_iterations,
    numerical_jacobian, sample_near, simulate, solve_dare, spectrum, time_average, verify_nash,
    Classification, Error, InitialStateModel, JointPolicy, LQGame, Matrix, NashCertificate,
    NashConfig, SimConfig, SimStatus, VerifyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {id} {verdict}: {name} ({detail})").unwrap();
    out.flush().unwrap();
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

const BASE: FamilyParams = FamilyParams {
    b: 0.0,
    q: 0.01,
    r: 0.1,
};

fn sampled_games(params: FamilyParams, seed: u64, count: u32) -> Vec<LQGame> {
    let init = family::two_atom_initial_state();
    (0..count)
        .map(|s| {
            family::sample_game(params, &init, &mut family::substream_rng(seed, 0, s)).unwrap()
        })
        .collect()
}

fn random_stabilizing(
    game: &LQGame,
    center: &JointPolicy,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> JointPolicy {
    loop {
        let p = sample_near(center, radius, rng.random());
        if is_stabilizing(game, &p).unwrap().stabilizing {
            return p;
        }
    }
}

#[test]
fn criterion_1_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for game in sampled_games(BASE, 1, 10) {
        let center = auto_initial_policy(&game).unwrap();
        for _ in 0..10 {
            let policy = random_stabilizing(&game, &center, 0.5, &mut rng);
            let grad = gradient_field(&game, &policy).unwrap();
            for i in 0..2 {
                for c in 0..2 {
                    let x = policy.gain(i)[(0, c)];
                    let h = 1e-6 * (1.0 + x.abs());
                    let f = |delta: f64| {
                        let mut p = policy.clone();
                        p.gain_mut(i)[(0, c)] += delta;
                        cost(&game, &p, i).unwrap().value().unwrap()
                    };
                    let fd = (f(h) - f(-h)) / (2.0 * h);
                    let an = grad.per_player[i][(0, c)];
                    let err = (an - fd).abs();
                    let allowed = (1e-5 * fd.abs()).max(1e-8);
                    worst = worst.max(err / allowed);
                    if err > allowed {
                        failures += 1;
                    }
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && checked == 400 && elapsed < Duration::from_secs(10);
    report(
        1,
        "policy gradient vs central differences",
        pass,
        &format!(
            "{checked} entries, {failures} outside tolerance, worst error/allowed {worst:.3}, {:.2}s",
            secs(elapsed)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_solver_residuals() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_lyap = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..=4);
        let f = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let rho = spectral_radius(&f).unwrap().max(1e-12);
        let f = f * (rng.random_range(0.0..0.99) / rho);
        let g = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let w = &g * g.transpose() + Matrix::identity(m, m) * 0.01;
        let x = solve_discrete_lyapunov(&f, &w).unwrap();
        worst_lyap = worst_lyap.max(lyapunov_residual(&f, &w, &x) / x.amax());
    }
    let mut worst_dare = 0.0f64;
    let mut solved = 0;
    let mut failed = 0;
    while solved < 1000 {
        let m = rng.random_range(1..=4);
        let d = rng.random_range(1..=m);
        let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        let g = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose() + Matrix::identity(m, m) * 0.01;
        let h = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let r = &h * h.transpose() + Matrix::identity(d, d) * 0.01;
        match solve_dare(&a, &b, &q, &r) {
            Ok(sol) => {
                worst_dare = worst_dare.max(dare_residual(&a, &b, &q, &r, &sol.p) / sol.p.amax());
                solved += 1;
            }
            Err(Error::NotStabilizable) => {}
            Err(_) => {
                failed += 1;
                solved += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass =
        worst_lyap < 1e-9 && worst_dare < 1e-9 && failed == 0 && elapsed < Duration::from_secs(10);
    report(
        2,
        "Lyapunov and DARE residuals",
        pass,
        &format!(
            "worst relative residual Lyapunov {worst_lyap:.2e}, DARE {worst_dare:.2e}, {failed} DARE failures, {:.2}s",
            secs(elapsed)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_certificates_satisfy_nash_conditions() {
    let mut games = vec![family::game_i(), family::game_ii()];
    for (k, params) in [
        BASE,
        FamilyParams {
            b: 0.0,
            q: 0.01,
            r: 0.35,
        },
        FamilyParams {
            b: 0.0,
            q: 0.5,
            r: 0.1,
        },
        FamilyParams {
            b: 0.3,
            q: 0.01,
            r: 0.1,
        },
        FamilyParams {
            b: -0.3,
            q: 0.01,
            r: 0.1,
        },
    ]
    .into_iter()
    .enumerate()
    {
        games.extend(sampled_games(params, 30 + k as u64, 40));
    }
    let cfg = VerifyConfig::default();
    let mut certs = 0;
    let mut worst_grad = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut worst_probe = f64::NEG_INFINITY;
    for game in &games {
        let Ok(cert) = lyapunov_iterations(game, None, &NashConfig::default()) else {
            continue;
        };
        certs += 1;
        let r = verify_nash(game, &cert.policy, &cfg).unwrap();
        worst_grad = worst_grad.max(cert.grad_norm).max(r.grad_norm);
        worst_gap = cert
            .dare_gaps
            .iter()
            .chain(&r.dare_gaps)
            .fold(worst_gap, |a, b| a.max(*b));
        worst_probe = worst_probe.max(r.directional_probe);
    }
    let pass = certs > 0 && worst_grad < 1e-6 && worst_gap < 1e-6 && worst_probe <= 1e-8;
    report(
        3,
        "converged certificates satisfy the Nash conditions",
        pass,
        &format!(
            "{certs} certificates from {} games, max grad {worst_grad:.2e}, max DARE gap {worst_gap:.2e}, max probe {worst_probe:.2e}",
            games.len()
        ),
    );
    assert!(pass);
}

struct Expected {
    re: [f64; 4],
    /// Imaginary part magnitude of the complex pair, if any.
    im: Option<f64>,
}

fn spectrum_matches(cert: &NashCertificate, game: &LQGame, want: &Expected) -> (bool, String) {
    let r = classify_equilibrium(game, cert, DEFAULT_STEP, DEFAULT_TAU).unwrap();
    let mut got: Vec<f64> = r.eigenvalues.iter().map(|z| z.re).collect();
    got.sort_by(|a, b| b.total_cmp(a));
    let mut exp = want.re.to_vec();
    exp.sort_by(|a, b| b.total_cmp(a));
    let close = |g: f64, e: f64| (g - e).abs() <= (0.05 * e.abs()).max(0.02);
    let mut ok = got.iter().zip(&exp).all(|(g, e)| close(*g, *e));
    if let Some(im) = want.im {
        let pair = r.eigenvalues.iter().filter(|z| z.im.abs() > 1e-12).count() == 2;
        ok &= pair
            && r.eigenvalues
                .iter()
                .filter(|z| z.im.abs() > 1e-12)
                .all(|z| (z.im.abs() - im).abs() <= 0.02);
    }
    ok &= r.classification == Classification::StrictSaddle;
    let eig: Vec<String> = r
        .eigenvalues
        .iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{:.4}", z.re)
            } else {
                format!("{:.4}{:+.4}i", z.re, z.im)
            }
        })
        .collect();
    (ok, format!("[{}] {}", eig.join(", "), r.classification))
}

#[test]
fn criterion_4_reference_spectra() {
    let start = Instant::now();
    let cases = [
        (
            "(i)",
            family::game_i(),
            Expected {
                re: [10.88, 2.02, -0.21, -0.06],
                im: None,
            },
        ),
        (
            "(ii)",
            family::game_ii(),
            Expected {
                re: [9.76, 0.54, -0.01, -0.01],
                im: Some(0.08),
            },
        ),
    ];
    let identity = InitialStateModel::from_covariance(Matrix::identity(2, 2)).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, game, want) in &cases {
        let cert = lyapunov_iterations(game, None, &NashConfig::default()).unwrap();
        let (ok, text) = spectrum_matches(&cert, game, want);
        let alt = game.with_init(identity.clone()).unwrap();
        let alt_cert = lyapunov_iterations(&alt, None, &NashConfig::default()).unwrap();
        let (alt_ok, alt_text) = spectrum_matches(&alt_cert, &alt, want);
        details.push(format!("game {name}: {text}; with sigma0 = I: {alt_text}"));
        pass &= ok || alt_ok;
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    report(
        4,
        "reference game spectra",
        pass,
        &format!("{}; {:.2}s", details.join("; "), secs(elapsed)),
    );
    assert!(pass);
}

fn sweep(param: SweepParam, grid: &str, params: FamilyParams) -> SweepResult {
    let spec = SweepSpec {
        param,
        grid: parse_grid(grid).unwrap(),
        b: params.b,
        q: params.q,
        r: params.r,
        n_samples: 1000,
        seed: 7,
        out_path: PathBuf::from("unused.csv"),
        sigma0: None,
    };
    compute_sweep(&spec, &EvaluationConfig::default()).unwrap()
}

fn freq_list(result: &SweepResult) -> String {
    result
        .cells
        .iter()
        .map(|c| format!("{}:{:.3}", c.param_value, c.frequency()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_5_counterexample_frequencies() {
    let start = Instant::now();
    let r_sweep = sweep(
        SweepParam::R,
        "0.05:0.05:1.0",
        FamilyParams {
            b: 0.0,
            q: 0.01,
            r: 0.1,
        },
    );
    let q_sweep = sweep(
        SweepParam::Q,
        "0.05:0.1:0.95",
        FamilyParams {
            b: 0.0,
            q: 0.01,
            r: 0.1,
        },
    );
    let b_sweep = sweep(
        SweepParam::B,
        "-0.45:0.1:0.45",
        FamilyParams {
            b: 0.0,
            q: 0.01,
            r: 0.1,
        },
    );
    let elapsed = start.elapsed();

    let at_035 = r_sweep
        .cells
        .iter()
        .find(|c| (c.param_value - 0.35).abs() < 1e-9)
        .unwrap()
        .frequency();
    let a = (0.19..=0.31).contains(&at_035);
    let b_min = r_sweep
        .cells
        .iter()
        .chain(&q_sweep.cells)
        .map(|c| c.frequency())
        .fold(1.0, f64::min);
    let b = b_min >= 0.04;
    let c_max = b_sweep
        .cells
        .iter()
        .map(|c| c.frequency())
        .fold(0.0, f64::max);
    let c = c_max <= 0.01;
    let d_max = r_sweep
        .cells
        .iter()
        .map(|c| c.frequency())
        .fold(0.0, f64::max);
    let d = (0.18..=0.32).contains(&d_max);
    let failed: u32 = [&r_sweep, &q_sweep, &b_sweep]
        .iter()
        .flat_map(|s| &s.cells)
        .map(|c| c.counts.solve_failed)
        .sum();
    let pass = a && b && c && d;
    report(
        5,
        "strict-saddle frequencies over the game family",
        pass,
        &format!(
            "(a) r=0.35 freq {at_035:.3} {}; (b) min b=0 freq {b_min:.3} {}; (c) max b-sweep freq {c_max:.3} {}; \
             (d) max r-sweep freq {d_max:.3} {}; solve failures {failed}; r-sweep [{}]; q-sweep [{}]; b-sweep [{}]; {:.0}s",
            verdict(a),
            verdict(b),
            verdict(c),
            verdict(d),
            freq_list(&r_sweep),
            freq_list(&q_sweep),
            freq_list(&b_sweep),
            secs(elapsed)
        ),
    );
    assert!(pass);
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fail"
    }
}

#[derive(Default)]
struct AvoidanceStats {
    runs: usize,
    unstable_start: usize,
    farther: usize,
    destabilized: usize,
    recurrent: usize,
    recurrent_far_average: usize,
}

fn avoidance(game: &LQGame) -> AvoidanceStats {
    let nash = lyapunov_iterations(game, None, &NashConfig::default())
        .unwrap()
        .policy;
    let mut stats = AvoidanceStats::default();
    for seed in 0..100u64 {
        stats.runs += 1;
        let init = sample_near(&nash, 0.25, seed);
        if !is_stabilizing(game, &init).unwrap().stabilizing {
            stats.unstable_start += 1;
            continue;
        }
        let mut cfg = SimConfig::uniform(2, 0.05, 100_000);
        cfg.record_every = 10;
        cfg.init_radius = 0.25;
        cfg.seed = seed;
        let traj = simulate(game, &init, &cfg).unwrap();
        if matches!(traj.status, SimStatus::Destabilized(_)) {
            stats.destabilized += 1;
        }
        if traj.final_policy().distance(&nash) > init.distance(&nash) {
            stats.farther += 1;
        }
        let burn_in = traj.len() / 2;
        let cycle = detect_cycle(&traj, burn_in, None);
        if cycle.is_recurrent {
            stats.recurrent += 1;
            let avg = time_average(&traj, burn_in).unwrap();
            if avg.last().unwrap().distance(&nash) > 0.25 * cycle.amplitude {
                stats.recurrent_far_average += 1;
            }
        }
    }
    stats
}

#[test]
fn criterion_6_avoidance_and_cycles() {
    let start = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, game) in [("(i)", family::game_i()), ("(ii)", family::game_ii())] {
        let s = avoidance(&game);
        pass &= s.farther >= 95 && s.recurrent >= 90 && s.recurrent_far_average == s.recurrent;
        details.push(format!(
            "game {name}: {} runs, {} unstable starts, {} farther, {} destabilized, {} recurrent, {} with far time average",
            s.runs, s.unstable_start, s.farther, s.destabilized, s.recurrent, s.recurrent_far_average
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(
        6,
        "gradient play avoids the equilibrium",
        pass,
        &format!("{}; {:.0}s", details.join("; "), secs(elapsed)),
    );
    assert!(pass);
}

#[test]
fn criterion_7_single_player_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut converged = 0;
    let mut worst = 0.0f64;
    let games = sampled_games(BASE, 70, 10);
    for game in &games {
        let lqr = game.single_player(0).unwrap();
        let opt = lyapunov_iterations(&lqr, None, &NashConfig::default())
            .unwrap()
            .policy;
        let jac = numerical_jacobian(&lqr, &opt, DEFAULT_STEP).unwrap();
        let top = spectrum(&jac, 0.0).unwrap().eigenvalues[0].re;
        let dir = lqgame_core::Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let start = opt.reshaped(&(opt.to_vector() + dir * 0.01)).unwrap();
        let traj = simulate(&lqr, &start, &SimConfig::uniform(1, 1.0 / top, 1_000_000)).unwrap();
        let g = gradient_field(&lqr, traj.final_policy())
            .unwrap()
            .norm_inf();
        worst = worst.max(g);
        if traj.status == SimStatus::ConvergedToCritical
            && g < 1e-8
            && traj.final_policy().max_abs_diff(&opt) < 1e-6
        {
            converged += 1;
        }
    }
    let pass = converged == games.len();
    report(
        7,
        "single-player gradient descent converges to the LQR gain",
        pass,
        &format!(
            "{converged}/{} converged, worst final gradient {worst:.2e}",
            games.len()
        ),
    );
    assert!(pass);
}

fn lqgame(args: &[&str], envs: &[(&str, &str)]) {
    let out = Command::new(env!("CARGO_BIN_EXE_lqgame"))
        .args(args)
        .envs(envs.iter().copied())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn run_all_commands(dir: &Path, threads: &str) {
    let game = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/game_ii.json");
    let game = game.to_str().unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let env = [("LQGAME_THREADS", threads)];
    lqgame(&["nash", "--game", game, "--out", &p("cert.json")], &env);
    lqgame(
        &[
            "classify",
            "--game",
            game,
            "--cert",
            &p("cert.json"),
            "--out",
            &p("spectrum.json"),
        ],
        &env,
    );
    lqgame(
        &[
            "verify",
            "--game",
            game,
            "--cert",
            &p("cert.json"),
            "--seed",
            "4",
            "--out",
            &p("verify.json"),
        ],
        &env,
    );
    lqgame(
        &[
            "simulate",
            "--game",
            game,
            "--iters",
            "20000",
            "--seed",
            "11",
            "--out",
            &p("traj.csv"),
            "--report",
            &p("report.json"),
        ],
        &env,
    );
    lqgame(
        &[
            "export",
            "time-average",
            &p("traj.csv"),
            "--burn-in",
            "5",
            "--out",
            &p("avg.csv"),
        ],
        &env,
    );
    lqgame(
        &[
            "sweep",
            "--param",
            "r",
            "--grid",
            "0.05:0.3:0.95",
            "--b",
            "0",
            "--q",
            "0.01",
            "--n",
            "30",
            "--seed",
            "5",
            "--out",
            &p("sweep.csv"),
        ],
        &env,
    );
    lqgame(
        &[
            "export",
            "summary",
            &p("sweep.csv"),
            "--out",
            &p("summary.csv"),
        ],
        &env,
    );
    lqgame(
        &["export", "fixture", "i", "--out", &p("game_i.json")],
        &env,
    );
}

#[test]
fn criterion_8_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all_commands(a.path(), "1");
    run_all_commands(b.path(), "3");
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let names: Vec<String> = fa.iter().map(|(p, _)| p.display().to_string()).collect();
    let pass = !fa.is_empty() && fa == fb;
    report(
        8,
        "repeated commands give byte-identical files",
        pass,
        &format!("{} files compared: {}", fa.len(), names.join(" ")),
    );
    assert!(pass);
}
