//! Counterexample search over the `(b, q, r)` game family.
//!
//! Each grid point draws `n_samples` games, solves for the Nash equilibrium by
//! Lyapunov iterations, classifies it by the spectrum of the gradient-field
//! Jacobian and tallies the outcome. Sample `s` at grid index `g` uses its own
//! generator (see [`family::substream_rng`]), so results do not depend on the
//! order or the number of threads the games are evaluated on.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lqgame_core::family::{self, EvaluationConfig, FamilyParams, Outcome};
use lqgame_core::{Classification, InitialStateModel, LQGame, NashCertificate, SpectrumReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::format::{matrix_to_rows, CertificateFile, GameFile, Rows, SpectrumFile};
use crate::{Error, Result};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "LQGAME_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    B,
    Q,
    R,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::B => "b",
            SweepParam::Q => "q",
            SweepParam::R => "r",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "b" => Some(SweepParam::B),
            "q" => Some(SweepParam::Q),
            "r" => Some(SweepParam::R),
            _ => None,
        }
    }

    fn apply(self, base: FamilyParams, value: f64) -> FamilyParams {
        let mut p = base;
        match self {
            SweepParam::B => p.b = value,
            SweepParam::Q => p.q = value,
            SweepParam::R => p.r = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    /// Values of `b`, `q`, `r`; the varied one is overridden by the grid.
    pub b: f64,
    pub q: f64,
    pub r: f64,
    #[serde(rename = "n")]
    pub n_samples: u32,
    pub seed: u64,
    /// Output CSV; counterexample sidecars go to `<stem>_counterexamples/`.
    #[serde(rename = "out")]
    pub out_path: PathBuf,
    /// Initial-state second moment; the two-atom default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<Rows>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Format("sweep grid is empty".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Format("n must be at least 1".into()));
        }
        if self.grid.len() > u32::MAX as usize {
            return Err(Error::Format("grid too large".into()));
        }
        for &v in &self.grid {
            self.params_at(v).validate()?;
        }
        Ok(())
    }

    pub fn base_params(&self) -> FamilyParams {
        FamilyParams {
            b: self.b,
            q: self.q,
            r: self.r,
        }
    }

    pub fn params_at(&self, value: f64) -> FamilyParams {
        self.param.apply(self.base_params(), value)
    }

    pub fn initial_state(&self) -> Result<InitialStateModel> {
        match &self.sigma0 {
            Some(rows) => Ok(InitialStateModel::from_covariance(
                crate::format::rows_to_matrix(rows, "sigma0")?,
            )?),
            None => Ok(family::two_atom_initial_state()),
        }
    }

    pub fn sidecar_dir(&self) -> PathBuf {
        let stem = self
            .out_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into());
        self.out_path
            .with_file_name(format!("{stem}_counterexamples"))
    }
}

/// Parses `start:step:stop` (inclusive, tolerant to rounding) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Format(format!("bad grid {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let (start, step, stop) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Round to 12 decimals so 0.1 + 2·0.05 prints as 0.2.
        return Ok((0..count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub strict_saddle: u32,
    pub attracting: u32,
    pub repelling: u32,
    pub marginal: u32,
    pub solve_failed: u32,
    pub destabilized: u32,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Classified(Classification::StrictSaddle) => self.strict_saddle += 1,
            Outcome::Classified(Classification::Attracting) => self.attracting += 1,
            Outcome::Classified(Classification::Repelling) => self.repelling += 1,
            Outcome::Classified(Classification::Marginal) => self.marginal += 1,
            Outcome::SolveFailed => self.solve_failed += 1,
            Outcome::Destabilized => self.destabilized += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.strict_saddle
            + self.attracting
            + self.repelling
            + self.marginal
            + self.solve_failed
            + self.destabilized
    }
}

/// Game, certificate and spectrum of one strict-saddle sample.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub sample_index: u32,
    pub game: LQGame,
    pub certificate: NashCertificate,
    pub spectrum: SpectrumReport,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub param_value: f64,
    pub n: u32,
    pub counts: OutcomeCounts,
    pub counterexamples: Vec<Counterexample>,
}

impl SweepCell {
    pub fn frequency(&self) -> f64 {
        self.counts.strict_saddle as f64 / self.n as f64
    }

    /// 95% Wilson interval for the strict-saddle frequency.
    pub fn confidence_interval(&self) -> (f64, f64) {
        wilson_interval(self.counts.strict_saddle, self.n)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<SweepCell>,
}

pub fn wilson_interval(successes: u32, n: u32) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if p == 1.0 {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Evaluates every game of the sweep. Pure computation; see [`run_sweep`] for output.
pub fn compute_sweep(spec: &SweepSpec, cfg: &EvaluationConfig) -> Result<SweepResult> {
    spec.validate()?;
    let init = spec.initial_state()?;
    let n = spec.n_samples;
    let tasks: Vec<(u32, u32)> = (0..spec.grid.len() as u32)
        .flat_map(|g| (0..n).map(move |s| (g, s)))
        .collect();
    let evaluate = |&(g, s): &(u32, u32)| -> Result<(Outcome, Option<Counterexample>)> {
        let params = spec.params_at(spec.grid[g as usize]);
        let mut rng = family::substream_rng(spec.seed, g, s);
        let game = family::sample_game(params, &init, &mut rng)?;
        let eval = family::evaluate_sample(&game, cfg);
        let counterexample = match (eval.outcome, eval.certificate, eval.spectrum) {
            (
                Outcome::Classified(Classification::StrictSaddle),
                Some(certificate),
                Some(spectrum),
            ) => Some(Counterexample {
                sample_index: s,
                game,
                certificate,
                spectrum,
            }),
            _ => None,
        };
        Ok((eval.outcome, counterexample))
    };
    let outcomes: Vec<Result<(Outcome, Option<Counterexample>)>> =
        with_pool(|| tasks.par_iter().map(evaluate).collect());
    let mut cells: Vec<SweepCell> = spec
        .grid
        .iter()
        .map(|&v| SweepCell {
            param_value: v,
            n,
            counts: OutcomeCounts::default(),
            counterexamples: Vec::new(),
        })
        .collect();
    for ((g, _), res) in tasks.iter().zip(outcomes) {
        let (outcome, cx) = res?;
        let cell = &mut cells[*g as usize];
        cell.counts.add(outcome);
        cell.counterexamples.extend(cx);
    }
    Ok(SweepResult {
        spec: spec.clone(),
        cells,
    })
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0);
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Sweep metadata written as `#` lines at the top of the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub param: String,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub n: u32,
    pub seed: u64,
    pub sigma0: Rows,
    pub nash_tol: f64,
    pub nash_max_sweeps: usize,
    pub fd_step: f64,
    pub tau: f64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "param_value",
    "n",
    "strict_saddle",
    "attracting",
    "repelling",
    "marginal",
    "solve_failed",
    "freq",
    "ci_lo",
    "ci_hi",
    "destabilized",
];

pub fn sweep_csv(result: &SweepResult, cfg: &EvaluationConfig) -> Result<String> {
    let meta = SweepMetadata {
        param: result.spec.param.name().to_string(),
        b: result.spec.b,
        q: result.spec.q,
        r: result.spec.r,
        n: result.spec.n_samples,
        seed: result.spec.seed,
        sigma0: matrix_to_rows(result.spec.initial_state()?.sigma0()),
        nash_tol: cfg.nash.tol,
        nash_max_sweeps: cfg.nash.max_sweeps,
        fd_step: cfg.step,
        tau: cfg.tau,
    };
    let mut out = String::new();
    for line in serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::json("sweep metadata", e))?
        .lines()
    {
        writeln!(out, "# {line}").expect("write to string");
    }
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for cell in &result.cells {
        let c = cell.counts;
        let (lo, hi) = cell.confidence_interval();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            cell.param_value,
            cell.n,
            c.strict_saddle,
            c.attracting,
            c.repelling,
            c.marginal,
            c.solve_failed,
            cell.frequency(),
            lo,
            hi,
            c.destabilized
        )
        .expect("write to string");
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CounterexampleFile<'a> {
    param: &'a str,
    param_value: f64,
    sample_index: u32,
    game: GameFile,
    certificate: CertificateFile,
    spectrum: SpectrumFile,
}

/// Writes the CSV and one `{param}{value}_{sample}.json` per counterexample.
pub fn write_sweep(result: &SweepResult, cfg: &EvaluationConfig) -> Result<()> {
    let out = &result.spec.out_path;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, sweep_csv(result, cfg)?).map_err(|e| Error::io(out, e))?;
    let dir = result.spec.sidecar_dir();
    let any = result.cells.iter().any(|c| !c.counterexamples.is_empty());
    if any {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let name = result.spec.param.name();
    for cell in &result.cells {
        for cx in &cell.counterexamples {
            let file = CounterexampleFile {
                param: name,
                param_value: cell.param_value,
                sample_index: cx.sample_index,
                game: GameFile::from_game(&cx.game),
                certificate: CertificateFile::from_certificate(&cx.certificate),
                spectrum: SpectrumFile::from_report(&cx.spectrum),
            };
            let path = dir.join(format!(
                "{name}{}_{}.json",
                cell.param_value, cx.sample_index
            ));
            crate::format::write_json(&path, &file)?;
        }
    }
    Ok(())
}

/// [`compute_sweep`] followed by [`write_sweep`].
pub fn run_sweep(spec: &SweepSpec, cfg: &EvaluationConfig) -> Result<SweepResult> {
    let result = compute_sweep(spec, cfg)?;
    write_sweep(&result, cfg)?;
    Ok(result)
}

/// One row of a sweep CSV read back from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub n: u32,
    pub strict_saddle: u32,
    pub attracting: u32,
    pub repelling: u32,
    pub marginal: u32,
    pub solve_failed: u32,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(default)]
    pub destabilized: u32,
}

/// Reads a sweep CSV: metadata from the `#` lines and the rows.
pub fn read_sweep_csv(path: &Path) -> Result<(SweepMetadata, Vec<SweepRow>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta_json: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .collect::<Vec<_>>()
        .join("\n");
    let meta: SweepMetadata =
        serde_json::from_str(&meta_json).map_err(|e| Error::json(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok((meta, rows))
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .map(|c| {
                let (ci_lo, ci_hi) = c.confidence_interval();
                SweepRow {
                    param_value: c.param_value,
                    n: c.n,
                    strict_saddle: c.counts.strict_saddle,
                    attracting: c.counts.attracting,
                    repelling: c.counts.repelling,
                    marginal: c.counts.marginal,
                    solve_failed: c.counts.solve_failed,
                    freq: c.frequency(),
                    ci_lo,
                    ci_hi,
                    destabilized: c.counts.destabilized,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param: String,
    pub param_value: f64,
    pub n: u32,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Mean frequency across each parameter's grid.
    pub mean_frequency: Vec<(String, f64)>,
    pub max_frequency: Vec<(String, f64)>,
}

/// Frequency-versus-parameter table across one or more sweeps.
pub fn summarize(sweeps: &[(String, Vec<SweepRow>)]) -> Result<Summary> {
    if sweeps.is_empty() {
        return Err(Error::Format("nothing to summarize".into()));
    }
    let mut rows = Vec::new();
    let mut mean_frequency = Vec::new();
    let mut max_frequency = Vec::new();
    for (param, cells) in sweeps {
        for c in cells {
            rows.push(SummaryRow {
                param: param.clone(),
                param_value: c.param_value,
                n: c.n,
                freq: c.freq,
                ci_lo: c.ci_lo,
                ci_hi: c.ci_hi,
            });
        }
        let mean = if cells.is_empty() {
            0.0
        } else {
            cells.iter().map(|c| c.freq).sum::<f64>() / cells.len() as f64
        };
        let max = cells.iter().map(|c| c.freq).fold(0.0, f64::max);
        mean_frequency.push((param.clone(), mean));
        max_frequency.push((param.clone(), max));
    }
    Ok(Summary {
        rows,
        mean_frequency,
        max_frequency,
    })
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from("param,param_value,n,freq,ci_lo,ci_hi\n");
    for r in &summary.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.param, r.param_value, r.n, r.freq, r.ci_lo, r.ci_hi
        )
        .expect("write to string");
    }
    for (param, mean) in &summary.mean_frequency {
        writeln!(out, "# mean {param} {mean}").expect("write to string");
    }
    out
}
