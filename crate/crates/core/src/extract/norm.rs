use serde::{Deserialize, Serialize};

use super::{extract_hidden_dim, QueryMatrix, SpectrumReport};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormVerdict {
    LayerNorm,
    RmsNorm,
    /// The rank moved by something other than 0 or 1.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormDetection {
    pub verdict: NormVerdict,
    pub dim_before: usize,
    pub dim_after: usize,
    pub spectrum_before: SpectrumReport,
    pub spectrum_after: SpectrumReport,
}

/// Tell LayerNorm from RMSNorm by whether removing the mean logit vector
/// costs exactly one dimension.
///
/// LayerNorm outputs live on an affine hyperplane, so they span one more
/// direction than their centered versions; RMSNorm outputs lie on an
/// ellipsoid and lose nothing. Each logit vector is first centered across
/// the vocabulary. A LayerNorm without a bias already sits in a linear
/// subspace, so it reads as `RmsNorm` with dimension h-1. The column means are taken in the matrix's source
/// precision, the spectra in f64.
pub fn detect_norm_layer(q: &QueryMatrix) -> Result<NormDetection> {
    let mut centered = q.q.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let before = QueryMatrix { q: centered.clone(), ..q.clone() };
    let (dim_before, spectrum_before) = extract_hidden_dim(&before)?;

    for mut col in centered.column_iter_mut() {
        let mean = q.precision.mean(col.iter().copied());
        col.add_scalar_mut(-mean);
    }
    let after = QueryMatrix { q: centered, ..q.clone() };
    let (dim_after, spectrum_after) = extract_hidden_dim(&after)?;

    let verdict = match dim_before as i64 - dim_after as i64 {
        1 => NormVerdict::LayerNorm,
        0 => NormVerdict::RmsNorm,
        _ => NormVerdict::Inconclusive,
    };
    Ok(NormDetection { verdict, dim_before, dim_after, spectrum_before, spectrum_after })
}
