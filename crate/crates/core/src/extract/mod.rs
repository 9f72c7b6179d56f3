//! From logit vectors to the stolen model.
//!
//! Stack full logit vectors for many prompts into a [`QueryMatrix`]. Its
//! numerical rank is the hidden dimension ([`extract_hidden_dim`]), its
//! leading left singular vectors span the final projection
//! ([`extract_layer`]), a rank drop after mean subtraction fingerprints
//! LayerNorm ([`detect_norm_layer`]), and an ellipsoid fit narrows the
//! symmetry down to an orthogonal matrix ([`extract_layer_orthogonal`]).

mod dimension;
mod layer;
mod norm;
mod orthogonal;

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::api::{query_all_logits, CompletionApi};
use crate::error::{Error, Result};
use crate::matfile;
use crate::victim::{Precision, TokenId};

pub use dimension::{extract_hidden_dim, extract_hidden_dim_adaptive, AdaptiveDim, SpectrumReport};
pub use layer::{align_affine, extract_layer, Alignment, SourceLogits, StolenLayer, Symmetry};
pub use norm::{detect_norm_layer, NormDetection, NormVerdict};
pub use orthogonal::{
    extract_layer_orthogonal, orthogonal_query_count, orthogonality_defect, residual_symmetry, OrthogonalFit,
};

/// Logit vectors for `n` prompts, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatrix {
    pub q: DMatrix<f64>,
    pub prompts: Vec<Vec<TokenId>>,
    /// Vocabulary ids of the columns, when restricted to a subset.
    pub tokens: Option<Vec<TokenId>>,
    /// Finest precision every entry is exactly representable in.
    pub precision: Precision,
}

impl QueryMatrix {
    /// Wrap an existing matrix; the precision tag is inferred from the data.
    pub fn from_matrix(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::InvalidInput("query matrix must be non-empty".into()));
        }
        let precision = detect_precision(q.as_slice());
        Ok(QueryMatrix { q, prompts: Vec::new(), tokens: None, precision })
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn cols(&self) -> usize {
        self.q.ncols()
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> QueryMatrix {
        let n = n.min(self.rows());
        QueryMatrix {
            q: self.q.rows(0, n).into_owned(),
            prompts: self.prompts.iter().take(n).cloned().collect(),
            tokens: self.tokens.clone(),
            precision: self.precision,
        }
    }

    /// Append the rows of `other` (same columns).
    pub fn append(&mut self, other: QueryMatrix) -> Result<()> {
        if other.cols() != self.cols() || other.tokens != self.tokens {
            return Err(Error::InvalidInput("appended query matrix has different columns".into()));
        }
        let n = self.rows();
        let q = std::mem::replace(&mut self.q, DMatrix::zeros(0, 0));
        let mut q = q.resize_vertically(n + other.rows(), 0.0);
        q.rows_mut(n, other.rows()).copy_from(&other.q);
        self.q = q;
        self.prompts.extend(other.prompts);
        self.precision = self.precision.coarser(other.precision);
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        matfile::save(path, &self.q)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_matrix(matfile::load(path)?)
    }
}

fn detect_precision(values: &[f64]) -> Precision {
    if values.iter().all(|&v| Precision::Fp16.round(v) == v) {
        Precision::Fp16
    } else if values.iter().all(|&v| Precision::Fp32.round(v) == v) {
        Precision::Fp32
    } else {
        Precision::Fp64
    }
}

/// `n` distinct random prompts of 1 to 4 tokens drawn from `vocab`.
pub fn random_prompts(vocab: usize, n: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut prompts = Vec::with_capacity(n);
    while prompts.len() < n {
        let len = rng.random_range(1..=4);
        let p: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..vocab as TokenId)).collect();
        if seen.insert(p.clone()) {
            prompts.push(p);
        }
    }
    prompts
}

/// Query `n` random distinct prompts for their full logit vectors,
/// optionally keeping only the columns in `token_subset`.
pub fn collect_query_matrix<A: CompletionApi + ?Sized>(
    api: &A,
    n: usize,
    token_subset: Option<&[TokenId]>,
    seed: u64,
) -> Result<QueryMatrix> {
    let prompts = random_prompts(api.descriptor().vocab_size, n, seed);
    collect_for_prompts(api, prompts, token_subset)
}

/// Like [`collect_query_matrix`] with caller-chosen prompts.
pub fn collect_for_prompts<A: CompletionApi + ?Sized>(
    api: &A,
    prompts: Vec<Vec<TokenId>>,
    token_subset: Option<&[TokenId]>,
) -> Result<QueryMatrix> {
    if prompts.is_empty() {
        return Err(Error::InvalidInput("need at least one prompt".into()));
    }
    let l = api.descriptor().vocab_size;
    if let Some(subset) = token_subset {
        if subset.is_empty() {
            return Err(Error::InvalidInput("token subset is empty".into()));
        }
        if let Some(&t) = subset.iter().find(|&&t| t as usize >= l) {
            return Err(Error::InvalidInput(format!("subset token {t} outside vocabulary of {l}")));
        }
    }
    let cols = token_subset.map_or(l, <[TokenId]>::len);
    let mut q = DMatrix::zeros(prompts.len(), cols);
    for (i, p) in prompts.iter().enumerate() {
        let z = query_all_logits(api, p)?;
        if z.len() != l {
            return Err(Error::Protocol(format!("expected {l} logits, got {}", z.len())));
        }
        match token_subset {
            Some(subset) => {
                for (j, &t) in subset.iter().enumerate() {
                    q[(i, j)] = z[t as usize];
                }
            }
            None => {
                for (j, v) in z.into_iter().enumerate() {
                    q[(i, j)] = v;
                }
            }
        }
    }
    let precision = detect_precision(q.as_slice());
    Ok(QueryMatrix { q, prompts, tokens: token_subset.map(<[TokenId]>::to_vec), precision })
}

#[cfg(test)]
pub(crate) mod testing {
    use std::sync::Arc;

    use crate::api::{ApiConfig, ApiMode, Session};
    use crate::victim::{build_victim, Victim, VictimSpec};

    pub fn victim(spec: VictimSpec) -> Arc<Victim> {
        Arc::new(build_victim(&spec).unwrap())
    }

    pub fn session(v: &Arc<Victim>) -> Session {
        Session::new(v.clone(), ApiConfig::new(ApiMode::AllLogits)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::linalg::singular_values;
    use crate::victim::VictimSpec;

    #[test]
    fn prompts_are_distinct_and_deterministic() {
        let a = random_prompts(50, 300, 4);
        let set: HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 300);
        assert_eq!(a, random_prompts(50, 300, 4));
    }

    #[test]
    fn rank_matches_hidden_dim() {
        let v = victim(VictimSpec::new(256, 64, 1));
        let qm = collect_query_matrix(&session(&v), 2 * 64 + 16, None, 0).unwrap();
        let sv = singular_values(&qm.q);
        let rank = sv.iter().filter(|&&s| s > sv[0] * 1e-10).count();
        assert_eq!(rank, 64);
        assert_eq!(qm.precision, Precision::Fp64);
    }

    #[test]
    fn single_row_has_rank_one() {
        let v = victim(VictimSpec::new(40, 8, 1));
        let qm = collect_query_matrix(&session(&v), 1, None, 0).unwrap();
        let sv = singular_values(&qm.q);
        assert_eq!(sv.len(), 1);
        assert!(sv[0] > 0.0);
    }

    #[test]
    fn subset_columns_and_precision_tag() {
        let v = victim(VictimSpec::new(100, 8, 2).with_precision(Precision::Fp16));
        let subset: Vec<TokenId> = (0..16).map(|i| i * 5).collect();
        let qm = collect_query_matrix(&session(&v), 10, Some(&subset), 3).unwrap();
        assert_eq!((qm.rows(), qm.cols()), (10, 16));
        assert_eq!(qm.precision, Precision::Fp16);
        let full = v.logits(&qm.prompts[3]).unwrap();
        assert_eq!(qm.q[(3, 2)], full[10]);
    }

    #[test]
    fn append_and_roundtrip() {
        let v = victim(VictimSpec::new(30, 4, 2));
        let s = session(&v);
        let mut a = collect_query_matrix(&s, 5, None, 1).unwrap();
        let b = collect_query_matrix(&s, 3, None, 2).unwrap();
        a.append(b.clone()).unwrap();
        assert_eq!(a.rows(), 8);
        assert_eq!(a.q.rows(5, 3), b.q.rows(0, 3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.mat");
        a.save(&path).unwrap();
        assert_eq!(QueryMatrix::load(&path).unwrap().q, a.q);
    }

    #[test]
    fn needs_full_logits() {
        let v = victim(VictimSpec::new(30, 4, 2));
        let s = crate::api::Session::new(v, crate::api::ApiConfig::new(crate::api::ApiMode::ArgmaxOnlyWithBias)).unwrap();
        assert!(collect_query_matrix(&s, 2, None, 0).is_err());
    }
}
