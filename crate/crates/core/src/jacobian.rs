//! Finite-difference Jacobian of the gradient field and the strict-saddle test
//! on its spectrum.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::lq::gradient_field;
use crate::{linalg, Error, JointPolicy, LQGame, Matrix, NashCertificate, Result};

/// Default base step; coordinate `j` uses `h·(1 + |x_j|)`.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Real parts within `±τ` count as marginal.
pub const DEFAULT_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Classification {
    /// Eigenvalues with negative and positive real parts, none marginal.
    StrictSaddle,
    /// All real parts positive: locally attracting for gradient descent.
    Attracting,
    /// All real parts negative.
    Repelling,
    Marginal,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::StrictSaddle => "StrictSaddle",
            Classification::Attracting => "Attracting",
            Classification::Repelling => "Repelling",
            Classification::Marginal => "Marginal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "StrictSaddle" => Some(Classification::StrictSaddle),
            "Attracting" => Some(Classification::Attracting),
            "Repelling" => Some(Classification::Repelling),
            "Marginal" => Some(Classification::Marginal),
            _ => None,
        }
    }
}

impl core::fmt::Display for Classification {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub jacobian: Matrix,
    /// Sorted by decreasing real part, then decreasing imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub n_neg: usize,
    pub n_pos: usize,
    pub n_marginal: usize,
    pub classification: Classification,
    pub tau: f64,
    /// Finite-difference base step, when the Jacobian came from [`numerical_jacobian`].
    pub step: Option<f64>,
}

/// Central-difference Jacobian of `ω`: column `j` is
/// `[ω(x + h_j e_j) − ω(x − h_j e_j)] / (2 h_j)` with `h_j = h·(1 + |x_j|)`.
pub fn numerical_jacobian(game: &LQGame, policy: &JointPolicy, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(
            "finite-difference step must be positive",
        ));
    }
    game.check_policy(policy)?;
    let m = game.state_dim();
    let dims = game.input_dims();
    let x = policy.to_vector();
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    for j in 0..n {
        let hj = h * (1.0 + x[j].abs());
        let mut plus = x.clone();
        plus[j] += hj;
        let mut minus = x.clone();
        minus[j] -= hj;
        let eval = |v| -> Result<_> {
            let p = JointPolicy::from_vector(m, &dims, &v)?;
            match gradient_field(game, &p) {
                Ok(g) => Ok(g.stacked()),
                Err(Error::UnstableSystem { .. }) => {
                    Err(Error::PerturbationDestabilizes { coordinate: j })
                }
                Err(e) => Err(e),
            }
        };
        let col = (eval(plus)? - eval(minus)?) / (2.0 * hj);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Eigenvalues of `J` and the strict-saddle classification with marginal band `τ`.
pub fn spectrum(jacobian: &Matrix, tau: f64) -> Result<SpectrumReport> {
    let mut eigenvalues = linalg::eigenvalues(jacobian)?;
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let n_neg = eigenvalues.iter().filter(|z| z.re < -tau).count();
    let n_pos = eigenvalues.iter().filter(|z| z.re > tau).count();
    let n_marginal = eigenvalues.len() - n_neg - n_pos;
    Ok(SpectrumReport {
        jacobian: jacobian.clone(),
        eigenvalues,
        n_neg,
        n_pos,
        n_marginal,
        classification: classify_counts(n_neg, n_pos, n_marginal),
        tau,
        step: None,
    })
}

fn classify_counts(n_neg: usize, n_pos: usize, n_marginal: usize) -> Classification {
    if n_marginal == 0 && n_neg >= 1 && n_pos >= 1 {
        Classification::StrictSaddle
    } else if n_pos == 0 && n_marginal == 0 {
        Classification::Repelling
    } else if n_neg == 0 && n_marginal == 0 {
        Classification::Attracting
    } else {
        Classification::Marginal
    }
}

/// [`numerical_jacobian`] at the certificate followed by [`spectrum`].
pub fn classify_equilibrium(
    game: &LQGame,
    cert: &NashCertificate,
    h: f64,
    tau: f64,
) -> Result<SpectrumReport> {
    if !cert.converged {
        return Err(Error::InvalidParameter("certificate is not converged"));
    }
    let jac = numerical_jacobian(game, &cert.policy, h)?;
    let mut report = spectrum(&jac, tau)?;
    report.step = Some(h);
    Ok(report)
}
