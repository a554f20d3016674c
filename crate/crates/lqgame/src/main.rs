use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lqgame::format::{self, CertificateFile, SpectrumFile};
use lqgame::sweep::{self, SweepParam, SweepSpec};
use lqgame::trajectory::{self, TrajectoryHeader};
use lqgame::{Error, Result};
use lqgame_core::family::{self, EvaluationConfig};
use lqgame_core::jacobian::{DEFAULT_STEP, DEFAULT_TAU};
use lqgame_core::{
    classify_equilibrium, detect_cycle, is_stabilizing, lyapunov_iterations, pgsim, time_average,
    verify_nash, JointPolicy, LQGame, NashCertificate, NashConfig, SimConfig, SimStatus,
    VerifyConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "lqgame",
    version,
    about = "Nash equilibria and gradient play in N-player LQ games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a Nash equilibrium by Lyapunov iterations.
    Nash {
        #[arg(long)]
        game: PathBuf,
        /// Certificate whose gains are the starting policy.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_sweeps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify an equilibrium by the spectrum of the gradient-field Jacobian.
    Classify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        h: f64,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the Nash conditions at the gains of a certificate.
    Verify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run simultaneous gradient play from a random point near the equilibrium.
    Simulate {
        #[arg(long)]
        game: PathBuf,
        /// Equilibrium to start near; solved for when absent.
        #[arg(long)]
        init_from_certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        init_radius: f64,
        /// Step size, shared by all players unless given once per player.
        #[arg(long, num_args = 1.., default_values_t = [0.05])]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        record_every: usize,
        /// Keep the first non-stabilizing iterate in the output.
        #[arg(long)]
        keep_unstable: bool,
        /// Recorded samples dropped before cycle detection and averaging.
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// JSON report with distances to the equilibrium and cycle statistics.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Count strict-saddle equilibria over a parameter grid of the game family.
    Sweep {
        /// JSON sweep specification; replaces the flags below.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        param: Option<ParamArg>,
        /// `start:step:stop` or a comma-separated list.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = family::REFERENCE_PARAMS.b, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 0.01)]
        q: f64,
        #[arg(long, default_value_t = 0.1)]
        r: f64,
        #[arg(long, default_value_t = 1000)]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derived artifacts: sweep summaries, reference games, time averages.
    Export {
        #[command(subcommand)]
        what: Export,
    },
}

#[derive(Subcommand)]
enum Export {
    /// Frequency table across sweep CSVs.
    Summary {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SummaryFormat::Csv)]
        format: SummaryFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference game of the family as JSON.
    Fixture {
        #[arg(value_enum)]
        which: FixtureArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Running time average of a trajectory CSV.
    TimeAverage {
        trajectory: PathBuf,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    B,
    Q,
    R,
}

#[derive(Clone, Copy, ValueEnum)]
enum SummaryFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureArg {
    I,
    Ii,
}

enum Failure {
    Input(Error),
    NoConvergence(Error),
    Precondition(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        use lqgame_core::Error as Core;
        match e {
            Error::Core(Core::DestabilizedDuringIteration {
                iteration: 0,
                spectral_radius,
            }) => Failure::Precondition(format!(
                "initial policy is not stabilizing (spectral radius {spectral_radius})"
            )),
            Error::Core(Core::NoConvergence { .. } | Core::DestabilizedDuringIteration { .. }) => {
                Failure::NoConvergence(e)
            }
            e => Failure::Input(e),
        }
    }
}

impl From<lqgame_core::Error> for Failure {
    fn from(e: lqgame_core::Error) -> Self {
        Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::NoConvergence(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Precondition(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    emit(out, &format::to_json_pretty(value)?)
}

fn read_certificate(path: &Path, game: &LQGame) -> Result<(CertificateFile, JointPolicy)> {
    let file: CertificateFile = format::read_json(path)?;
    let policy = file.policy_for(game)?;
    Ok((file, policy))
}

/// Rebuilds a certificate from a file, recomputing values at the stored gains.
fn certificate_from_file(
    game: &LQGame,
    file: &CertificateFile,
    policy: JointPolicy,
) -> std::result::Result<NashCertificate, Failure> {
    let stab = is_stabilizing(game, &policy)?;
    if !stab.stabilizing {
        return Err(Failure::Precondition(format!(
            "certificate gains are not stabilizing (spectral radius {})",
            stab.spectral_radius
        )));
    }
    let eval = lqgame_core::evaluate(game, &policy)?;
    Ok(NashCertificate {
        values: eval.values,
        grad_norm: eval.gradient.norm_inf(),
        iterations: file.iterations,
        converged: file.converged,
        dare_gaps: Vec::new(),
        policy,
    })
}

#[derive(Serialize)]
struct VerifyFile {
    grad_norm: f64,
    dare_gaps: Vec<f64>,
    is_critical: bool,
    directional_probe: f64,
}

#[derive(Serialize)]
struct CycleFile {
    is_recurrent: bool,
    period_estimate: Option<usize>,
    amplitude: f64,
    eps_rec: f64,
    return_fraction: f64,
}

#[derive(Serialize)]
struct SimulationReport {
    status: String,
    iterations: usize,
    samples: usize,
    init_radius: f64,
    seed: u64,
    initial_distance: f64,
    final_distance: f64,
    farther_than_started: bool,
    burn_in: usize,
    cycle: CycleFile,
    /// Distance from the final running average to the equilibrium.
    time_average_distance: Option<f64>,
    delta_avg: f64,
    time_average_within_delta: Option<bool>,
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Nash {
            game,
            init,
            tol,
            max_sweeps,
            out,
        } => {
            let game = format::read_game(&game)?;
            let init = match init {
                Some(path) => Some(read_certificate(&path, &game)?.1),
                None => None,
            };
            let cfg = NashConfig { tol, max_sweeps };
            let cert = lyapunov_iterations(&game, init.as_ref(), &cfg)?;
            emit_json(out.as_deref(), &CertificateFile::from_certificate(&cert))?;
        }
        Command::Classify {
            game,
            cert,
            h,
            tau,
            out,
        } => {
            let game = format::read_game(&game)?;
            let (file, policy) = read_certificate(&cert, &game)?;
            let cert = certificate_from_file(&game, &file, policy)?;
            let report = classify_equilibrium(&game, &cert, h, tau).map_err(|e| match e {
                lqgame_core::Error::PerturbationDestabilizes { coordinate } => {
                    Failure::Precondition(format!(
                    "perturbing coordinate {coordinate} leaves the stabilizing set; use a smaller h"
                ))
                }
                e => e.into(),
            })?;
            emit_json(out.as_deref(), &SpectrumFile::from_report(&report))?;
        }
        Command::Verify {
            game,
            cert,
            seed,
            out,
        } => {
            let game = format::read_game(&game)?;
            let (_, policy) = read_certificate(&cert, &game)?;
            let stab = is_stabilizing(&game, &policy)?;
            if !stab.stabilizing {
                return Err(Failure::Precondition(format!(
                    "policy is not stabilizing (spectral radius {})",
                    stab.spectral_radius
                )));
            }
            let cfg = VerifyConfig {
                seed,
                ..VerifyConfig::default()
            };
            let r = verify_nash(&game, &policy, &cfg)?;
            emit_json(
                out.as_deref(),
                &VerifyFile {
                    grad_norm: r.grad_norm,
                    dare_gaps: r.dare_gaps,
                    is_critical: r.is_critical,
                    directional_probe: r.directional_probe,
                },
            )?;
        }
        Command::Simulate {
            game,
            init_from_certificate,
            init_radius,
            gamma,
            iters,
            seed,
            record_every,
            keep_unstable,
            burn_in,
            out,
            report,
        } => {
            let game = format::read_game(&game)?;
            let nash = match init_from_certificate {
                Some(path) => read_certificate(&path, &game)?.1,
                None => lyapunov_iterations(&game, None, &NashConfig::default())?.policy,
            };
            let players = game.players();
            let step_sizes = match gamma.len() {
                1 => vec![gamma[0]; players],
                n if n == players => gamma,
                n => {
                    return Err(Failure::Input(Error::Format(format!(
                        "{n} step sizes given for {players} players"
                    ))))
                }
            };
            let cfg = SimConfig {
                step_sizes,
                max_iters: iters,
                record_every,
                init_radius,
                seed,
                stop_on_destabilize: !keep_unstable,
            };
            cfg.validate(players)?;
            let init = lqgame_core::sample_near(&nash, init_radius, seed);
            let stab = is_stabilizing(&game, &init)?;
            if !stab.stabilizing {
                return Err(Failure::Precondition(format!(
                    "initial policy is not stabilizing (spectral radius {})",
                    stab.spectral_radius
                )));
            }
            let traj = pgsim::simulate(&game, &init, &cfg)?;
            let header = TrajectoryHeader {
                step_sizes: cfg.step_sizes.clone(),
                max_iters: cfg.max_iters,
                record_every: cfg.record_every,
                init_radius,
                seed,
                stop_on_destabilize: cfg.stop_on_destabilize,
                status: trajectory::status_label(traj.status),
                state_dim: game.state_dim(),
                input_dims: game.input_dims(),
            };
            let mut buf = Vec::new();
            trajectory::write_trajectory(&mut buf, &header, &traj)?;
            fs::write(&out, buf).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            if let Some(path) = report {
                let burn_in = burn_in.unwrap_or(traj.len() / 2);
                let cycle = detect_cycle(&traj, burn_in, None);
                let averages = time_average(&traj, burn_in).ok();
                let time_average_distance = averages
                    .as_ref()
                    .and_then(|a| a.last())
                    .map(|p| p.distance(&nash));
                let delta_avg = 0.25 * cycle.amplitude;
                let initial_distance = init.distance(&nash);
                let final_distance = traj.final_policy().distance(&nash);
                let iterations = match traj.status {
                    SimStatus::Destabilized(n) => n,
                    _ => *traj.iters.last().unwrap_or(&0),
                };
                let rep = SimulationReport {
                    status: trajectory::status_label(traj.status),
                    iterations,
                    samples: traj.len(),
                    init_radius,
                    seed,
                    initial_distance,
                    final_distance,
                    farther_than_started: final_distance > initial_distance,
                    burn_in,
                    time_average_within_delta: time_average_distance
                        .map(|d| cycle.is_recurrent && d <= delta_avg),
                    cycle: CycleFile {
                        is_recurrent: cycle.is_recurrent,
                        period_estimate: cycle.period_estimate,
                        amplitude: cycle.amplitude,
                        eps_rec: cycle.eps_rec,
                        return_fraction: cycle.return_fraction,
                    },
                    time_average_distance,
                    delta_avg,
                };
                emit_json(Some(&path), &rep)?;
            }
        }
        Command::Sweep {
            spec,
            param,
            grid,
            b,
            q,
            r,
            n,
            seed,
            out,
        } => {
            let spec = match spec {
                Some(path) => {
                    let mut spec: SweepSpec = format::read_json(&path)?;
                    if let Some(out) = out {
                        spec.out_path = out;
                    }
                    spec
                }
                None => {
                    let (Some(param), Some(grid), Some(out)) = (param, grid, out) else {
                        return Err(Failure::Input(Error::Format(
                            "sweep needs --spec or all of --param, --grid, --out".into(),
                        )));
                    };
                    SweepSpec {
                        param: match param {
                            ParamArg::B => SweepParam::B,
                            ParamArg::Q => SweepParam::Q,
                            ParamArg::R => SweepParam::R,
                        },
                        grid: sweep::parse_grid(&grid)?,
                        b,
                        q,
                        r,
                        n_samples: n,
                        seed,
                        out_path: out,
                        sigma0: None,
                    }
                }
            };
            let cfg = EvaluationConfig::default();
            let result = sweep::run_sweep(&spec, &cfg)?;
            for row in result.rows() {
                eprintln!(
                    "{}={} strict_saddle={}/{} freq={:.4} [{:.4}, {:.4}] solve_failed={}",
                    spec.param.name(),
                    row.param_value,
                    row.strict_saddle,
                    row.n,
                    row.freq,
                    row.ci_lo,
                    row.ci_hi,
                    row.solve_failed
                );
            }
        }
        Command::Export { what } => match what {
            Export::Summary {
                inputs,
                format: fmt,
                out,
            } => {
                let mut sweeps = Vec::new();
                for path in &inputs {
                    let (meta, rows) = sweep::read_sweep_csv(path)?;
                    sweeps.push((meta.param, rows));
                }
                let summary = sweep::summarize(&sweeps)?;
                match fmt {
                    SummaryFormat::Csv => emit(out.as_deref(), &sweep::summary_csv(&summary))?,
                    SummaryFormat::Json => emit_json(out.as_deref(), &summary)?,
                }
            }
            Export::Fixture { which, out } => {
                let game = match which {
                    FixtureArg::I => family::game_i(),
                    FixtureArg::Ii => family::game_ii(),
                };
                emit(out.as_deref(), &format::game_to_json(&game)?)?;
            }
            Export::TimeAverage {
                trajectory: path,
                burn_in,
                out,
            } => {
                let file = fs::File::open(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let data = trajectory::read_trajectory(BufReader::new(file))?;
                let averages = time_average(&data.to_trajectory(), burn_in)?;
                let mut text = String::from("iter");
                if let Some(first) = averages.first() {
                    for (i, k) in first.gains().iter().enumerate() {
                        for j in 0..k.len() {
                            text.push_str(&format!(",K{}_{}", i + 1, j + 1));
                        }
                    }
                }
                text.push('\n');
                for (iter, avg) in data.iters[burn_in + 1..].iter().zip(&averages) {
                    text.push_str(&iter.to_string());
                    for v in avg.to_vector().iter() {
                        text.push_str(&format!(",{v}"));
                    }
                    text.push('\n');
                }
                emit(out.as_deref(), &text)?;
            }
        },
    }
    Ok(())
}
