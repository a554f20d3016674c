//! JSON encodings of games, certificates and spectra.

use std::fs;
use std::path::Path;

use lqgame_core::{
    Classification, InitialStateModel, JointPolicy, LQGame, Matrix, NashCertificate,
    SpectrumReport, Vector,
};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major nested rows.
pub type Rows = Vec<Vec<f64>>;

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{what}: non-finite entry")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomFile {
    pub z: Vec<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: Vec<usize>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Vec<Rows>,
    #[serde(rename = "Q")]
    pub q: Vec<Rows>,
    #[serde(rename = "R")]
    pub r: Vec<Rows>,
    pub init: InitFile,
}

impl GameFile {
    pub fn from_game(game: &LQGame) -> Self {
        let players = game.players();
        let init = match game.init().atoms() {
            Some(atoms) => InitFile {
                atoms: Some(
                    atoms
                        .iter()
                        .map(|(z, p)| AtomFile {
                            z: z.iter().copied().collect(),
                            p: *p,
                        })
                        .collect(),
                ),
                sigma0: None,
            },
            None => InitFile {
                atoms: None,
                sigma0: Some(matrix_to_rows(game.sigma0())),
            },
        };
        Self {
            m: game.state_dim(),
            n: players,
            d: game.input_dims(),
            a: matrix_to_rows(game.a()),
            b: (0..players).map(|i| matrix_to_rows(game.b(i))).collect(),
            q: (0..players).map(|i| matrix_to_rows(game.q(i))).collect(),
            r: (0..players).map(|i| matrix_to_rows(game.r(i))).collect(),
            init,
        }
    }

    pub fn to_game(&self) -> Result<LQGame> {
        if self.b.len() != self.n
            || self.q.len() != self.n
            || self.r.len() != self.n
            || self.d.len() != self.n
        {
            return Err(Error::Format(format!(
                "N = {} but d, B, Q, R list {}, {}, {}, {} entries",
                self.n,
                self.d.len(),
                self.b.len(),
                self.q.len(),
                self.r.len()
            )));
        }
        let a = rows_to_matrix(&self.a, "A")?;
        if a.shape() != (self.m, self.m) {
            return Err(Error::Format(format!(
                "A is {:?}, expected m = {}",
                a.shape(),
                self.m
            )));
        }
        let mut b = Vec::with_capacity(self.n);
        let mut q = Vec::with_capacity(self.n);
        let mut r = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let bi = rows_to_matrix(&self.b[i], "B")?;
            if bi.shape() != (self.m, self.d[i]) {
                return Err(Error::Format(format!(
                    "B[{i}] is {:?}, expected ({}, {})",
                    bi.shape(),
                    self.m,
                    self.d[i]
                )));
            }
            b.push(bi);
            q.push(rows_to_matrix(&self.q[i], "Q")?);
            r.push(rows_to_matrix(&self.r[i], "R")?);
        }
        let init = match (&self.init.atoms, &self.init.sigma0) {
            (Some(atoms), None) => InitialStateModel::from_atoms(
                atoms
                    .iter()
                    .map(|a| (Vector::from_vec(a.z.clone()), a.p))
                    .collect(),
            )?,
            (None, Some(sigma0)) => {
                InitialStateModel::from_covariance(rows_to_matrix(sigma0, "sigma0")?)?
            }
            _ => {
                return Err(Error::Format(
                    "init needs exactly one of atoms or sigma0".into(),
                ))
            }
        };
        Ok(LQGame::new(a, b, q, r, init)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
    #[serde(rename = "P")]
    pub p: Vec<Rows>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CertificateFile {
    pub fn from_certificate(cert: &NashCertificate) -> Self {
        Self {
            k: cert.policy.gains().iter().map(matrix_to_rows).collect(),
            p: cert
                .values
                .iter()
                .map(|v| matrix_to_rows(v.matrix()))
                .collect(),
            grad_norm: cert.grad_norm,
            iterations: cert.iterations,
            converged: cert.converged,
        }
    }

    /// Joint policy stored in the certificate, checked against the game's shape.
    pub fn policy_for(&self, game: &LQGame) -> Result<JointPolicy> {
        let gains = self
            .k
            .iter()
            .map(|rows| rows_to_matrix(rows, "K"))
            .collect::<Result<Vec<_>>>()?;
        let policy = JointPolicy::new(gains);
        if policy.players() != game.players()
            || policy
                .gains()
                .iter()
                .enumerate()
                .any(|(i, k)| k.shape() != (game.input_dim(i), game.state_dim()))
        {
            return Err(Error::Format(
                "certificate gains do not match the game".into(),
            ));
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexFile {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub eigenvalues: Vec<ComplexFile>,
    pub classification: String,
    pub n_neg: usize,
    pub n_pos: usize,
    pub n_marginal: usize,
    pub h: Option<f64>,
    pub tau: f64,
}

impl SpectrumFile {
    pub fn from_report(report: &SpectrumReport) -> Self {
        Self {
            eigenvalues: report
                .eigenvalues
                .iter()
                .map(|z| ComplexFile { re: z.re, im: z.im })
                .collect(),
            classification: report.classification.as_str().to_string(),
            n_neg: report.n_neg,
            n_pos: report.n_pos,
            n_marginal: report.n_marginal,
            h: report.step,
            tau: report.tau,
        }
    }

    pub fn classification(&self) -> Option<Classification> {
        Classification::parse(&self.classification)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json("serialize", e))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_pretty(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_game(path: &Path) -> Result<LQGame> {
    read_json::<GameFile>(path)?.to_game()
}

pub fn parse_game(text: &str) -> Result<LQGame> {
    serde_json::from_str::<GameFile>(text)
        .map_err(|e| Error::json("game", e))?
        .to_game()
}

pub fn game_to_json(game: &LQGame) -> Result<String> {
    to_json_pretty(&GameFile::from_game(game))
}
