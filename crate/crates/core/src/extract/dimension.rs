use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{collect_for_prompts, random_prompts, QueryMatrix};
use crate::api::CompletionApi;
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::victim::TokenId;

/// A gap counts as the rank boundary only if it spans at least this factor.
pub const MIN_GAP_RATIO: f64 = 10.0;

/// Singular spectrum of a query matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `log_gaps[i] = ln λ_{i+1} − ln λ_{i+2}` (1-based λ); one shorter than
    /// `singular_values`.
    pub log_gaps: Vec<f64>,
    /// Number of singular values before the largest gap.
    pub gap_index: usize,
}

impl SpectrumReport {
    pub fn from_singular_values(mut singular_values: Vec<f64>) -> Self {
        singular_values.sort_by(|a, b| b.total_cmp(a));
        // Values below roundoff of the largest one are indistinguishable from
        // zero; flooring them there keeps exact zeros from creating a gap
        // larger than the real one.
        let floor = (singular_values.first().copied().unwrap_or(0.0) * f64::EPSILON).max(f64::MIN_POSITIVE);
        let guarded = |s: f64| s.max(floor).ln();
        let log_gaps: Vec<f64> = singular_values.windows(2).map(|w| guarded(w[0]) - guarded(w[1])).collect();
        let gap_index = log_gaps
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &g)| if g > bv { (i, g) } else { (bi, bv) })
            .0
            + 1;
        SpectrumReport { singular_values, log_gaps, gap_index }
    }

    pub fn largest_gap(&self) -> f64 {
        self.log_gaps.get(self.gap_index - 1).copied().unwrap_or(0.0)
    }

    /// Plot rows `(index, singular value, log-gap to the next value)`,
    /// 1-based; the last row has no gap.
    pub fn plot_rows(&self) -> Vec<(usize, f64, Option<f64>)> {
        self.singular_values
            .iter()
            .enumerate()
            .map(|(i, &s)| (i + 1, s, self.log_gaps.get(i).copied()))
            .collect()
    }

    /// CSV with header `index,singular_value,log_gap`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,singular_value,log_gap")?;
        for (i, s, g) in self.plot_rows() {
            match g {
                Some(g) => writeln!(w, "{i},{s:e},{g}")?,
                None => writeln!(w, "{i},{s:e},")?,
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Hidden dimension as the position of the largest multiplicative gap in
/// the singular spectrum of `q`.
///
/// Fails with [`Error::NeedMoreQueries`] when the spectrum has no gap of at
/// least [`MIN_GAP_RATIO`], which is what a matrix with fewer rows than the
/// hidden dimension looks like.
pub fn extract_hidden_dim(q: &QueryMatrix) -> Result<(usize, SpectrumReport)> {
    let report = SpectrumReport::from_singular_values(singular_values(&q.q));
    if report.singular_values.len() < 2 {
        return Err(Error::NeedMoreQueries(format!(
            "a {}x{} matrix has no interior gap",
            q.rows(),
            q.cols()
        )));
    }
    if report.largest_gap() < MIN_GAP_RATIO.ln() {
        return Err(Error::NeedMoreQueries(format!(
            "no gap in {} singular values; the matrix is likely full rank",
            report.singular_values.len()
        )));
    }
    Ok((report.gap_index, report))
}

/// Result of [`extract_hidden_dim_adaptive`].
#[derive(Debug, Clone)]
pub struct AdaptiveDim {
    pub dim: usize,
    pub spectrum: SpectrumReport,
    pub matrix: QueryMatrix,
    /// `(rows, extracted dimension)` per attempt; `None` when no gap was found.
    pub history: Vec<(usize, Option<usize>)>,
}

/// Collect `2 · expected` rows, then keep doubling until the gap index is at
/// most half the row count.
pub fn extract_hidden_dim_adaptive<A: CompletionApi + ?Sized>(
    api: &A,
    expected: usize,
    token_subset: Option<&[TokenId]>,
    seed: u64,
    max_rows: usize,
) -> Result<AdaptiveDim> {
    if expected == 0 {
        return Err(Error::InvalidInput("expected dimension must be positive".into()));
    }
    let vocab = api.descriptor().vocab_size;
    let mut n = (2 * expected).min(max_rows);
    let mut matrix = collect_for_prompts(api, random_prompts(vocab, n, seed), token_subset)?;
    let mut history = Vec::new();
    loop {
        let outcome = extract_hidden_dim(&matrix);
        history.push((n, outcome.as_ref().ok().map(|(d, _)| *d)));
        match outcome {
            Ok((dim, spectrum)) if 2 * dim <= n => return Ok(AdaptiveDim { dim, spectrum, matrix, history }),
            Err(e) if !matches!(e, Error::NeedMoreQueries(_)) => return Err(e),
            _ if n >= max_rows => {
                return Err(Error::NeedMoreQueries(format!(
                    "no stable gap below half the row count within {max_rows} rows"
                )))
            }
            _ => {}
        }
        let next = (2 * n).min(max_rows);
        let prompts = random_prompts(vocab, next, seed).split_off(n);
        matrix.append(collect_for_prompts(api, prompts, token_subset)?)?;
        n = next;
    }
}
