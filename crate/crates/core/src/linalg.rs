//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative pivot tolerance for positive-definiteness checks.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Ratio of the largest to the smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factorization that also rejects nearly singular input: every
/// squared pivot must exceed `PD_TOLERANCE * trace(m)`.
pub fn cholesky_pd(m: &DMatrix<f64>, block: &str) -> Result<Cholesky<f64, Dyn>> {
    let singular = || Error::SingularBlock {
        block: block.to_string(),
        condition: condition_number(m),
    };
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let trace = m.trace();
    if m.nrows() > 0 && trace <= 0.0 {
        return Err(singular());
    }
    let chol = Cholesky::new(symmetrize(m)).ok_or_else(singular)?;
    let floor = PD_TOLERANCE * trace;
    if chol.l_dirty().diagonal().iter().any(|d| d * d <= floor) {
        return Err(singular());
    }
    Ok(chol)
}

/// `ln det m` for a symmetric positive definite matrix.
pub fn log_det_pd(m: &DMatrix<f64>, block: &str) -> Result<f64> {
    let chol = cholesky_pd(m, block)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_pd(m: &DMatrix<f64>, block: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky_pd(m, block)?.inverse()))
}

/// Eigenvalues of the symmetric-definite pencil `a x = λ b x`, ascending.
///
/// `b` is whitened by its Cholesky factor `L`, so the eigenvalues are those of
/// the symmetric matrix `L⁻¹ a L⁻ᵀ` and are guaranteed real.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>, block: &str) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            got: a.nrows(),
        });
    }
    let chol = cholesky_pd(b, block)?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&symmetrize(a))
        .expect("cholesky factor has a positive diagonal");
    let whitened = l
        .solve_lower_triangular(&left.transpose())
        .expect("cholesky factor has a positive diagonal");
    let mut values: Vec<f64> = SymmetricEigen::new(symmetrize(&whitened))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` when empty).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Copies the square sub-block `[start, start + len)` of `m`.
pub fn principal_block(m: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    m.view((start, start), (len, len)).into_owned()
}
