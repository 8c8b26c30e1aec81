//! The selection criterion and the asymptotic error coefficients.
//!
//! With `λ` the generalized eigenvalues of `(K̃₂₂, Ã₂₂)` and `μ` those of
//! `(L̃₂₂, Ã₂₂)`, the criterion is `IC = Π (1 + α μᵢ) / (1 + α λᵢ)`. Its
//! logarithm equals twice the drop in the `1/n` error coefficient,
//! `½ ln det(I_XY I_X⁻¹) − ½ ln det(J_XY J_X⁻¹)`, which this module computes
//! independently as a consistency check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blocks::{shared_blocks, SharedBlocks};
use crate::error::{Error, Result};
use crate::fisher::{assemble_j, FisherTriple, JPair};
use crate::format;
use crate::linalg::{generalized_eigenvalues, log_det_pd, principal_block};
use crate::scenarios::ParameterLayout;

/// Width of the neutral band around `log IC = 0`.
pub const VERDICT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// The additional data reduce the leading error term.
    Effective,
    /// The additional data increase it.
    Degrading,
    /// No change within the tolerance.
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ICReport {
    #[serde(serialize_with = "format::serialize_vec")]
    pub lambdas: Vec<f64>,
    #[serde(serialize_with = "format::serialize_vec")]
    pub mus: Vec<f64>,
    #[serde(serialize_with = "format::serialize_f64")]
    pub alpha: f64,
    #[serde(serialize_with = "format::serialize_f64")]
    pub ic: f64,
    #[serde(serialize_with = "format::serialize_f64")]
    pub log_ic: f64,
    /// `½ ln det(I_XY I_X⁻¹)`: error coefficient without additional data.
    #[serde(serialize_with = "format::serialize_f64")]
    pub coeff_d: f64,
    /// `½ ln det(J_XY J_X⁻¹)`: error coefficient with additional data.
    #[serde(serialize_with = "format::serialize_f64")]
    pub coeff_da: f64,
    pub verdict: Verdict,
    /// `μᵢ > λᵢ` for every `i` after sorting both ascending.
    pub sufficient_holds: bool,
}

/// `(λ, μ)`, each ascending.
pub fn eigenvalues_shared(blocks: &SharedBlocks) -> Result<(Vec<f64>, Vec<f64>)> {
    let lambdas = generalized_eigenvalues(&blocks.k22_tilde, &blocks.a22_tilde, "A22 tilde")?;
    let mus = generalized_eigenvalues(&blocks.l22_tilde, &blocks.a22_tilde, "A22 tilde")?;
    Ok((lambdas, mus))
}

/// `(IC, ln IC)`, accumulated in log space.
pub fn ic_value(lambdas: &[f64], mus: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if lambdas.len() != mus.len() {
        return Err(Error::DimensionMismatch {
            expected: lambdas.len(),
            got: mus.len(),
        });
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidAlpha(format!("alpha must be nonnegative, got {alpha}")));
    }
    let mut log_ic = 0.0;
    for (&l, &m) in lambdas.iter().zip(mus) {
        if !(1.0 + alpha * l > 0.0 && 1.0 + alpha * m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "1 + alpha * eigenvalue must be positive (lambda {l}, mu {m})"
            )));
        }
        log_ic += (alpha * m).ln_1p() - (alpha * l).ln_1p();
    }
    Ok((log_ic.exp(), log_ic))
}

/// Verdict from `ln IC` and whether the eigenvalue-wise sufficient condition holds.
pub fn effectiveness(lambdas: &[f64], mus: &[f64], log_ic: f64, tol: f64) -> (Verdict, bool) {
    let verdict = if log_ic > tol {
        Verdict::Effective
    } else if log_ic < -tol {
        Verdict::Degrading
    } else {
        Verdict::Neutral
    };
    let mut l = lambdas.to_vec();
    let mut m = mus.to_vec();
    l.sort_by(f64::total_cmp);
    m.sort_by(f64::total_cmp);
    let sufficient = !l.is_empty() && l.iter().zip(&m).all(|(l, m)| m > l);
    (verdict, sufficient)
}

/// `½ ln det(I_XY I_X⁻¹)` on the initial parameter block.
pub fn baseline_error_coefficient(i_xy_w: &DMatrix<f64>, i_x_w: &DMatrix<f64>) -> Result<f64> {
    Ok(0.5 * (log_det_pd(i_xy_w, "I_XY w-block")? - log_det_pd(i_x_w, "I_X w-block")?))
}

/// `½ ln det(J_XY J_X⁻¹)` over all of `u`.
///
/// At `α = 0` the additional-only coordinates carry no information and the
/// matrices are singular there; their contributions to the two determinants
/// cancel in the `α → 0` limit, so the coefficient is taken on the initial
/// block instead.
pub fn joint_error_coefficient(j: &JPair, layout: &ParameterLayout) -> Result<f64> {
    if j.alpha == 0.0 {
        let n = layout.d1 + layout.d2;
        return baseline_error_coefficient(&principal_block(&j.j_xy, 0, n), &principal_block(&j.j_x, 0, n));
    }
    Ok(0.5 * (log_det_pd(&j.j_xy, "J_XY")? - log_det_pd(&j.j_x, "J_X")?))
}

/// `|(coeff_d − coeff_da) − ½ ln IC|`, zero in exact arithmetic.
pub fn consistency_residual(coeff_d: f64, coeff_da: f64, log_ic: f64) -> f64 {
    ((coeff_d - coeff_da) - 0.5 * log_ic).abs()
}

/// Full report for one scenario at one parameter point.
pub fn ic_report(triple: &FisherTriple, layout: &ParameterLayout, alpha: f64, tol: f64) -> Result<ICReport> {
    let blocks = shared_blocks(triple, layout)?;
    let (lambdas, mus) = eigenvalues_shared(&blocks)?;
    let (ic, log_ic) = ic_value(&lambdas, &mus, alpha)?;
    let (verdict, sufficient_holds) = effectiveness(&lambdas, &mus, log_ic, tol);
    let n = layout.d1 + layout.d2;
    let coeff_d = baseline_error_coefficient(
        &principal_block(&triple.i_xy, 0, n),
        &principal_block(&triple.i_x, 0, n),
    )?;
    let coeff_da = joint_error_coefficient(&assemble_j(triple, alpha)?, layout)?;
    Ok(ICReport {
        lambdas,
        mus,
        alpha,
        ic,
        log_ic,
        coeff_d,
        coeff_da,
        verdict,
        sufficient_holds,
    })
}

impl ICReport {
    pub fn consistency_residual(&self) -> f64 {
        consistency_residual(self.coeff_d, self.coeff_da, self.log_ic)
    }
}
