//! Shared-parameter blocks of the inverse Fisher matrices.
//!
//! `K̃₂₂` and `L̃₂₂` are the shared (`d2 × d2`) blocks of the inverses of the
//! initial blocks of `I_XY` and `I_X`; `Ã₂₂` is the shared block of the
//! inverse of the additional block of `I_Z`. Each is obtained from a Schur
//! complement, never from a full inverse.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fisher::FisherTriple;
use crate::linalg::{cholesky_pd, inverse_pd, principal_block, symmetrize};
use crate::scenarios::ParameterLayout;

/// Which diagonal block of the inverse to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseBlock {
    /// The leading `split × split` block.
    Leading,
    /// The trailing `(n − split) × (n − split)` block.
    Trailing,
}

/// Returns a diagonal block of `m⁻¹` for symmetric positive definite `m`
/// partitioned at `split`, e.g. the trailing block `(M₂₂ − M₂₁ M₁₁⁻¹ M₁₂)⁻¹`.
pub fn schur_inverse_block(m: &DMatrix<f64>, split: usize, which: InverseBlock, name: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || split > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: split.max(m.ncols()),
        });
    }
    cholesky_pd(m, name)?;
    let (keep_start, keep_len, drop_start, drop_len) = match which {
        InverseBlock::Leading => (0, split, split, n - split),
        InverseBlock::Trailing => (split, n - split, 0, split),
    };
    let keep = principal_block(m, keep_start, keep_len);
    if drop_len == 0 {
        return inverse_pd(&keep, name);
    }
    let dropped = principal_block(m, drop_start, drop_len);
    let cross = m.view((drop_start, keep_start), (drop_len, keep_len)).into_owned();
    let chol = cholesky_pd(&dropped, name)?;
    // keep − crossᵀ dropped⁻¹ cross
    let solved = chol.solve(&cross);
    let schur = symmetrize(&(keep - cross.transpose() * solved));
    inverse_pd(&schur, name)
}

/// `K̃₂₂`, `L̃₂₂` and `Ã₂₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBlocks {
    pub k22_tilde: DMatrix<f64>,
    pub l22_tilde: DMatrix<f64>,
    pub a22_tilde: DMatrix<f64>,
}

/// Extracts the shared blocks. When `d1 = 0` (resp. `d3 = 0`) the inverse is
/// taken of the shared block directly.
pub fn shared_blocks(triple: &FisherTriple, layout: &ParameterLayout) -> Result<SharedBlocks> {
    let n = layout.dim_u();
    if triple.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: triple.dim(),
        });
    }
    let (d1, d2, d3) = (layout.d1, layout.d2, layout.d3);
    if d2 == 0 {
        return Err(Error::Unsupported("layout has no shared parameters".into()));
    }
    let initial = |m: &DMatrix<f64>, name: &str| {
        schur_inverse_block(&principal_block(m, 0, d1 + d2), d1, InverseBlock::Trailing, name)
    };
    let blocks = SharedBlocks {
        k22_tilde: initial(&triple.i_xy, "I_XY initial block")?,
        l22_tilde: initial(&triple.i_x, "I_X initial block")?,
        a22_tilde: schur_inverse_block(
            &principal_block(&triple.i_z, d1, d2 + d3),
            d2,
            InverseBlock::Leading,
            "I_Z additional block",
        )?,
    };
    for (name, m) in [
        ("K22 tilde", &blocks.k22_tilde),
        ("L22 tilde", &blocks.l22_tilde),
        ("A22 tilde", &blocks.a22_tilde),
    ] {
        cholesky_pd(m, name)?;
    }
    Ok(blocks)
}
