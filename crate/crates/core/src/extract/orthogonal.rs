use nalgebra::{DMatrix, DVector};

use super::layer::leading_basis;
use super::{QueryMatrix, SourceLogits, StolenLayer, Symmetry};
use crate::error::{Error, Result};
use crate::linalg::smallest_right_singular;

/// The two smallest singular values of the design matrix must differ by at
/// least this factor for the ellipsoid to count as determined.
pub const NULLSPACE_RATIO: f64 = 1e3;

/// Minimum number of logit vectors for an `h`-dimensional ellipsoid fit.
pub fn orthogonal_query_count(h: usize) -> usize {
    h * (h + 1) / 2 + h + 1
}

/// Output of [`extract_layer_orthogonal`].
#[derive(Debug, Clone)]
pub struct OrthogonalFit {
    /// `W̃ = U M⁻¹`, equal to the true folded projection times an orthogonal
    /// matrix.
    pub layer: StolenLayer,
    /// Upper-triangular factor with `‖M (xᵢ − c)‖ = 1` for every projected
    /// query point `xᵢ`.
    pub m: DMatrix<f64>,
    /// Ellipsoid center in the projected, shifted coordinates.
    pub center: DVector<f64>,
    /// Ellipsoid center mapped back to logit space.
    pub center_logits: DVector<f64>,
    /// Largest `|‖M (xᵢ − c)‖ − 1|` over all query points.
    pub sphere_residual: f64,
    /// Second-smallest over smallest singular value of the design matrix.
    pub nullspace_ratio: f64,
}

/// Recover the final layer up to an orthogonal factor by fitting the
/// ellipsoid that the logit vectors of a normalized model lie on.
///
/// Assumes the normalization gain is folded into `W`, no additive bias after
/// normalization, and that the hidden states do not concentrate on a
/// lower-dimensional subspace. Costs `O(h⁶)`; keep `h` below about 48.
pub fn extract_layer_orthogonal(q: &QueryMatrix, h: usize) -> Result<OrthogonalFit> {
    let n = q.rows();
    let need = orthogonal_query_count(h);
    if h == 0 || n < need {
        return Err(Error::NeedMoreQueries(format!("ellipsoid fit in dimension {h} needs {need} queries, got {n}")));
    }
    let origin = q.q.row(0).transpose();
    let mut shifted = q.q.clone();
    for mut row in shifted.row_iter_mut() {
        row -= origin.transpose();
    }
    let (u, _) = leading_basis(&shifted, h)?;
    let x = &shifted * &u;
    let scale = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if !(scale > 0.0) {
        return Err(Error::Degenerate("all query points coincide".into()));
    }
    let xs = &x / scale;

    // Unknowns: upper triangle of A (off-diagonals doubled), then d, for
    // xᵀ A x − 2 dᵀ x = 0.
    let tri = h * (h + 1) / 2;
    let mut design = DMatrix::zeros(n, tri + h);
    for (i, p) in xs.row_iter().enumerate() {
        let mut c = 0;
        for j in 0..h {
            for k in j..h {
                design[(i, c)] = if j == k { p[j] * p[j] } else { 2.0 * p[j] * p[k] };
                c += 1;
            }
        }
        for j in 0..h {
            design[(i, tri + j)] = -2.0 * p[j];
        }
    }
    let (v, s0, s1) = smallest_right_singular(&design)?;
    let nullspace_ratio = if s0 > 0.0 { s1 / s0 } else { f64::INFINITY };
    if nullspace_ratio < NULLSPACE_RATIO {
        return Err(Error::Degenerate(format!(
            "design matrix nullspace is not one-dimensional (singular value ratio {nullspace_ratio:.3e})"
        )));
    }

    let mut a = DMatrix::zeros(h, h);
    let mut c = 0;
    for j in 0..h {
        for k in j..h {
            a[(j, k)] = v[c];
            a[(k, j)] = v[c];
            c += 1;
        }
    }
    let d = v.rows(tri, h).into_owned();
    let center = a
        .clone()
        .lu()
        .solve(&d)
        .ok_or_else(|| Error::Degenerate("quadratic form is singular".into()))?;
    let k = center.dot(&(&a * &center));
    if !(k.abs() > 0.0) || !k.is_finite() {
        return Err(Error::Degenerate("ellipsoid does not pass through its defining points".into()));
    }
    let a = a / k;
    let m = a
        .cholesky()
        .ok_or_else(|| Error::Degenerate("quadratic form is not positive definite".into()))?
        .l()
        .transpose();

    let sphere_residual = xs
        .row_iter()
        .map(|p| ((&m * (p.transpose() - &center)).norm() - 1.0).abs())
        .fold(0.0, f64::max);

    // Undo the coordinate scaling: x = scale · xs.
    let m = m / scale;
    let center = center * scale;
    let m_inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Cholesky factor is singular".into()))?;
    let w = &u * m_inv;
    let center_logits = &u * &center + origin;
    Ok(OrthogonalFit {
        layer: StolenLayer {
            w,
            symmetry: Symmetry::Orthogonal,
            source: SourceLogits::ShiftedByFirstRow,
            source_precision: q.precision,
            tokens: q.tokens.clone(),
        },
        m,
        center,
        center_logits,
        sphere_residual,
        nullspace_ratio,
    })
}

/// `O = W̃⁺ W`, the residual symmetry between a stolen and a true layer.
pub fn residual_symmetry(w_tilde: &DMatrix<f64>, w_true: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::linalg::lstsq(w_tilde, w_true)
}

/// `‖OᵀO − I‖_F`.
pub fn orthogonality_defect(o: &DMatrix<f64>) -> f64 {
    (o.transpose() * o - DMatrix::identity(o.ncols(), o.ncols())).norm()
}
