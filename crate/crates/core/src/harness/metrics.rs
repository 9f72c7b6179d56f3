use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::align_affine;
use crate::recover::{EntryStatus, RecoveredLogits};
use crate::victim::gaussian_matrix;

/// Reported instead of infinity for an exact recovery.
pub const MAX_BITS: f64 = 52.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitsOfPrecision {
    pub bits: f64,
    /// The additive shift `δ*` that was removed.
    pub shift: f64,
    pub compared: usize,
    pub missing: usize,
}

/// `−log₂` of the mean absolute error after the best additive shift.
///
/// The shift minimizing a mean absolute error is the median of the
/// differences. Missing entries are skipped and counted.
pub fn bits_of_precision(truth: &[f64], recovered: &RecoveredLogits) -> Result<BitsOfPrecision> {
    if truth.len() != recovered.len() {
        return Err(Error::InvalidInput(format!(
            "truth has {} logits, recovery has {}",
            truth.len(),
            recovered.len()
        )));
    }
    let mut diffs: Vec<f64> = recovered
        .values
        .iter()
        .zip(truth)
        .zip(&recovered.status)
        .filter(|(_, s)| **s != EntryStatus::Missing)
        .map(|((r, t), _)| r - t)
        .collect();
    let missing = truth.len() - diffs.len();
    if diffs.is_empty() {
        return Err(Error::UndefinedMetric("every logit is missing".into()));
    }
    diffs.sort_by(f64::total_cmp);
    let mid = diffs.len() / 2;
    let shift = if diffs.len() % 2 == 1 { diffs[mid] } else { 0.5 * (diffs[mid - 1] + diffs[mid]) };
    let mean = diffs.iter().map(|d| (d - shift).abs()).sum::<f64>() / diffs.len() as f64;
    let bits = if mean > 0.0 { (-mean.log2()).min(MAX_BITS) } else { MAX_BITS };
    Ok(BitsOfPrecision { bits, shift, compared: diffs.len(), missing })
}

/// Alignment RMS of a random `l × h` Gaussian matrix onto `w_true`: what a
/// layer "extracted" without any queries would score.
pub fn random_baseline_rms(w_true: &DMatrix<f64>, h: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = gaussian_matrix(&mut rng, w_true.nrows(), h, 1.0);
    Ok(align_affine(&random, w_true)?.rms)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

/// Median of `values` (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::api::CostLedger;
    use crate::recover::Normalization;

    fn recovered(values: Vec<f64>) -> RecoveredLogits {
        RecoveredLogits {
            status: values.iter().map(|v| if v.is_nan() { EntryStatus::Missing } else { EntryStatus::Exact }).collect(),
            values,
            normalization: Normalization::UnitNormalizer,
            cost: CostLedger::default(),
            retry_queries: 0,
        }
    }

    #[test]
    fn exact_is_capped() {
        let z = vec![0.5, -1.0, 2.0];
        let b = bits_of_precision(&z, &recovered(z.clone())).unwrap();
        assert_eq!(b.bits, MAX_BITS);
        assert_eq!(b.missing, 0);
    }

    #[test]
    fn uniform_noise_gives_eleven_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z: Vec<f64> = (0..200_001).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r: Vec<f64> = z.iter().map(|v| v + rng.random_range(-1.0..1.0) / 1024.0).collect();
        let b = bits_of_precision(&z, &recovered(r)).unwrap();
        assert!((b.bits - 11.0).abs() < 0.02, "{}", b.bits);
    }

    #[test]
    fn missing_entries_are_skipped() {
        let z = vec![0.0, 1.0, 2.0, 3.0];
        let b = bits_of_precision(&z, &recovered(vec![0.0, f64::NAN, 2.0, 3.0 + 0.25])).unwrap();
        assert_eq!((b.compared, b.missing), (3, 1));
        assert!((b.bits - -(0.25f64 / 3.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn all_missing_is_undefined() {
        let err = bits_of_precision(&[1.0, 2.0], &recovered(vec![f64::NAN, f64::NAN])).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn length_mismatch() {
        assert!(bits_of_precision(&[1.0], &recovered(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn baseline_is_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = gaussian_matrix(&mut rng, 500, 8, 0.3);
        let rms = random_baseline_rms(&w, 8, 2).unwrap();
        assert!(rms > 0.25, "{rms}");
    }

    #[test]
    fn summary_and_median() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 1.0, 3));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert!(Summary::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn shift_invariant(values in proptest::collection::vec(-10.0f64..10.0, 3..40),
                           noise in proptest::collection::vec(-0.1f64..0.1, 40),
                           offset in -50.0f64..50.0) {
            let r: Vec<f64> = values.iter().zip(&noise).map(|(v, e)| v + e).collect();
            let shifted: Vec<f64> = r.iter().map(|v| v + offset).collect();
            let a = bits_of_precision(&values, &recovered(r)).unwrap();
            let b = bits_of_precision(&values, &recovered(shifted)).unwrap();
            prop_assert!((a.bits - b.bits).abs() < 1e-6);
        }
    }
}
