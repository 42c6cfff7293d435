//! Small dense helpers on top of nalgebra: SPD solves and symmetric matrix roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor for inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NAN;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn singular(a: &DMatrix<f64>, context: &str) -> Error {
    Error::Singular {
        context: context.to_string(),
        min_eigenvalue: min_eigenvalue(a),
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Err(Error::Degenerate(format!("{context}: empty matrix")));
    }
    let chol = a.clone().cholesky().ok_or_else(|| singular(a, context))?;
    let inv = chol.inverse();
    check_conditioning(a, &inv, context)?;
    Ok(symmetrize(inv))
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = a.clone().cholesky().ok_or_else(|| singular(a, context))?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(singular(a, context));
    }
    Ok(x)
}

fn check_conditioning(a: &DMatrix<f64>, inv: &DMatrix<f64>, context: &str) -> Result<()> {
    // Cholesky succeeds on numerically rank-deficient matrices now and then
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let inv_scale = inv.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !inv_scale.is_finite() || scale * inv_scale > 1e14 {
        return Err(singular(a, context));
    }
    Ok(())
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `A^{-1/2}` by eigendecomposition; rejects eigenvalues below `EIGEN_FLOOR · λ_max`.
pub fn inv_sqrt_sym(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    sym_power(a, -0.5, context)
}

/// `A^{1/2}` for symmetric positive semidefinite `A`.
pub fn sqrt_sym(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    sym_power(a, 0.5, context)
}

fn sym_power(a: &DMatrix<f64>, power: f64, context: &str) -> Result<DMatrix<f64>> {
    let q = a.nrows();
    if q == 0 {
        return Err(Error::Degenerate(format!("{context}: empty matrix")));
    }
    if q == 1 {
        let v = a[(0, 0)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Singular {
                context: context.to_string(),
                min_eigenvalue: v,
            });
        }
        return Ok(DMatrix::from_element(1, 1, v.powf(power)));
    }
    let eig = SymmetricEigen::new(symmetrize(a.clone()));
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < EIGEN_FLOOR * max {
        return Err(Error::Singular {
            context: context.to_string(),
            min_eigenvalue: min,
        });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    let v = &eig.eigenvectors;
    Ok(symmetrize(v * d * v.transpose()))
}
