//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{Cholesky, Schur};
use num_complex::Complex64;

use crate::{Error, Matrix, Result};

/// Relative residual tolerance accepted from [`solve_discrete_lyapunov`].
pub const LYAPUNOV_TOL: f64 = 1e-9;

/// A closed loop counts as stable when its spectral radius is below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            what: "eigenvalue input",
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entry"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(
        Error::NumericalFailure("Schur decomposition did not converge"),
    )?;
    let ev = schur.complex_eigenvalues();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue"));
    }
    Ok(ev.iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `(X + Xᵀ) / 2`; the result is bitwise symmetric.
pub fn symmetrize(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

pub fn is_symmetric(x: &Matrix, tol: f64) -> bool {
    x.is_square() && (x - x.transpose()).amax() <= tol * (1.0 + x.amax())
}

pub fn is_positive_definite(x: &Matrix) -> bool {
    x.is_square() && Cholesky::new(symmetrize(x)).is_some()
}

/// Solves `F X Fᵀ + W = X` through the Kronecker form `(F⊗F − I) vec(X) = −vec(W)`.
///
/// Requires `ρ(F) < 1 - STABILITY_MARGIN`. The returned `X` is symmetrized and its
/// residual is checked against [`LYAPUNOV_TOL`].
pub fn solve_discrete_lyapunov(f: &Matrix, w: &Matrix) -> Result<Matrix> {
    let m = f.nrows();
    if !f.is_square() {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov F",
            expected: (m, m),
            found: f.shape(),
        });
    }
    if w.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov W",
            expected: (m, m),
            found: w.shape(),
        });
    }
    let radius = spectral_radius(f)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableSystem {
            spectral_radius: radius,
        });
    }
    let system = f.kronecker(f) - Matrix::identity(m * m, m * m);
    // Column-major vec on both sides; F⊗F maps vec(X) to vec(F X Fᵀ).
    let rhs = -nalgebra::DVector::from_column_slice(w.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::SolveFailure("singular Kronecker system"))?;
    let x = symmetrize(&Matrix::from_column_slice(m, m, sol.as_slice()));
    let residual = lyapunov_residual(f, w, &x);
    if !(residual <= LYAPUNOV_TOL * (1.0 + x.norm())) {
        return Err(Error::SolveFailure("Lyapunov residual above tolerance"));
    }
    Ok(x)
}

/// `‖F X Fᵀ + W − X‖_F`.
pub fn lyapunov_residual(f: &Matrix, w: &Matrix, x: &Matrix) -> f64 {
    (f * x * f.transpose() + w - x).norm()
}

/// PBH test: `(A, B)` is stabilizable iff `rank [λI − A, B] = m` for every
/// eigenvalue with `|λ| ≥ 1`. Rank uses singular values with tolerance
/// `1e-10·max(‖A‖, 1)`.
pub fn is_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool> {
    let m = a.nrows();
    if !a.is_square() || b.nrows() != m {
        return Err(Error::DimensionMismatch {
            what: "stabilizability pair",
            expected: (m, m),
            found: b.shape(),
        });
    }
    let tol = 1e-10 * a.norm().max(1.0);
    for lambda in eigenvalues(a)? {
        if lambda.norm() < 1.0 {
            continue;
        }
        // Real embedding of the complex matrix [λI − A, B]: rank doubles.
        let cols = m + b.ncols();
        let mut block = Matrix::zeros(2 * m, 2 * cols);
        for i in 0..m {
            for j in 0..m {
                let re = if i == j { lambda.re } else { 0.0 } - a[(i, j)];
                let im = if i == j { lambda.im } else { 0.0 };
                block[(i, j)] = re;
                block[(i + m, j + cols)] = re;
                block[(i, j + cols)] = -im;
                block[(i + m, j)] = im;
            }
            for j in 0..b.ncols() {
                block[(i, m + j)] = b[(i, j)];
                block[(i + m, cols + m + j)] = b[(i, j)];
            }
        }
        let svd = block.svd(false, false);
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        if rank < 2 * m {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solves `S X = B` for symmetric positive definite `S`, falling back to LU.
pub fn solve_spd(s: &Matrix, b: &Matrix) -> Result<Matrix> {
    if let Some(chol) = Cholesky::new(symmetrize(s)) {
        return Ok(chol.solve(b));
    }
    s.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SolveFailure("singular gain system"))
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.amax()
}
