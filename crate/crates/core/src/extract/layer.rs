use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::QueryMatrix;
use crate::error::{Error, Result};
use crate::linalg::{leading_left_singular, lstsq, rms};
use crate::matfile;
use crate::victim::{Precision, TokenId};

/// The unknown factor separating a stolen layer from the true one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// `W̃ = W · G` for an unknown invertible `G`.
    Affine,
    /// `W̃ = W · O` for an unknown orthogonal `O`.
    Orthogonal,
}

/// How the logit vectors were preprocessed before the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLogits {
    Raw,
    /// Every vector had the first query's logits subtracted.
    ShiftedByFirstRow,
}

/// A recovered `l × h` projection.
#[derive(Debug, Clone, PartialEq)]
pub struct StolenLayer {
    pub w: DMatrix<f64>,
    pub symmetry: Symmetry,
    pub source: SourceLogits,
    pub source_precision: Precision,
    /// Vocabulary ids of the rows when the query matrix used a subset.
    pub tokens: Option<Vec<TokenId>>,
}

impl StolenLayer {
    pub fn vocab_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Save `W̃` in the binary matrix format; the tags are not stored.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        matfile::save(path, &self.w)
    }
}

/// `W̃ = U Σ` from the rank-`h` truncated SVD of `Qᵀ`.
pub fn extract_layer(q: &QueryMatrix, h: usize) -> Result<StolenLayer> {
    let (n, l) = (q.rows(), q.cols());
    if h == 0 || h > n.min(l) {
        return Err(Error::InvalidInput(format!("cannot extract rank {h} from a {n}x{l} query matrix")));
    }
    let (u, sigma) = leading_basis(&q.q, h)?;
    let tol = sigma[0] * f64::EPSILON * n.max(l) as f64;
    if !(sigma[h - 1] > tol) {
        return Err(Error::IllConditioned {
            condition: if sigma[h - 1] > 0.0 { sigma[0] / sigma[h - 1] } else { f64::INFINITY },
            detail: format!("requested rank {h} exceeds the numerical rank of the query matrix"),
        });
    }
    let mut w = u;
    for (j, s) in sigma.iter().enumerate() {
        w.column_mut(j).scale_mut(*s);
    }
    Ok(StolenLayer {
        w,
        symmetry: Symmetry::Affine,
        source: SourceLogits::Raw,
        source_precision: q.precision,
        tokens: q.tokens.clone(),
    })
}

/// Leading `h` left singular vectors and values of `mᵀ`.
pub(super) fn leading_basis(m: &DMatrix<f64>, h: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    // mᵀ = Rᵀ Q₁ᵀ with orthonormal Q₁, so both share left singular vectors
    // and values; factoring the small triangle is much cheaper when n ≫ l.
    let mt = if m.nrows() > m.ncols() { m.clone().qr().r().transpose() } else { m.transpose() };
    leading_left_singular(&mt, h)
}

/// Best `G` in `W̃ G ≈ W` and the RMS of the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub g: DMatrix<f64>,
    pub rms: f64,
}

/// Least-squares alignment of a stolen layer onto the true projection.
pub fn align_affine(w_tilde: &DMatrix<f64>, w_true: &DMatrix<f64>) -> Result<Alignment> {
    if w_tilde.nrows() != w_true.nrows() {
        return Err(Error::InvalidInput(format!(
            "row mismatch: stolen {} vs true {}",
            w_tilde.nrows(),
            w_true.nrows()
        )));
    }
    let g = lstsq(w_tilde, w_true)?;
    let rms = rms(&(w_tilde * &g - w_true));
    Ok(Alignment { g, rms })
}
