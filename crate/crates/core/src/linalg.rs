//! Dense linear-algebra helpers shared by the attack modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values of `m`, sorted in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Leading `rank` left singular vectors and singular values of `m`.
pub fn leading_left_singular(m: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = m.nrows().min(m.ncols());
    if rank == 0 || rank > k {
        return Err(Error::InvalidInput(format!(
            "requested rank {rank} for a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD did not produce U".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut basis = DMatrix::zeros(m.nrows(), rank);
    let mut sigma = Vec::with_capacity(rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        basis.set_column(dst, &u.column(src));
        sigma.push(svd.singular_values[src]);
    }
    Ok((basis, sigma))
}

/// Right singular vector belonging to the smallest singular value, together
/// with the two smallest singular values (smallest first).
pub fn smallest_right_singular(m: &DMatrix<f64>) -> Result<(DVector<f64>, f64, f64)> {
    if m.ncols() < 2 || m.nrows() < m.ncols() {
        return Err(Error::NeedMoreQueries(format!(
            "design matrix is {}x{}; need at least as many rows as columns",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD did not produce V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smallest = order[0];
    let v = v_t.row(smallest).transpose();
    Ok((v, svd.singular_values[order[0]], svd.singular_values[order[1]]))
}

/// Least-squares solution of `a x = b` (column by column).
///
/// Fails when `a` is numerically rank deficient; the reported condition
/// number is `sigma_max / sigma_min`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidInput(format!(
            "lstsq shape mismatch: {} vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() < a.ncols() {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            detail: format!("{} equations for {} unknowns", a.nrows(), a.ncols()),
        });
    }
    let svd = a.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(mx, mn), &s| (mx.max(s), mn.min(s)));
    let tol = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    if !(smin > tol) {
        return Err(Error::IllConditioned {
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            detail: "matrix is numerically rank deficient".into(),
        });
    }
    svd.solve(b, 0.0).map_err(|e| Error::Degenerate(e.to_string()))
}

/// Condition number `sigma_max / sigma_min` of `a` (infinite if singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&mx), Some(&mn)) if mn > 0.0 => mx / mn,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of the column space of `m` (assumed full column rank).
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`.
///
/// Computed through the sine of the angle, which stays accurate for tiny
/// angles where `acos` of the cosine would not.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let s = singular_values(&residual).first().copied().unwrap_or(0.0);
    s.clamp(0.0, 1.0).asin()
}

/// Root-mean-square of all entries.
pub fn rms(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    (m.iter().map(|x| x * x).sum::<f64>() / m.len() as f64).sqrt()
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn logsumexp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
