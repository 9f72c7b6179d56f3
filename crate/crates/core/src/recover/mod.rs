//! Full logit-vector recovery through restricted APIs.
//!
//! Logits are only identifiable up to an additive constant, so every result
//! carries its [`Normalization`]: either a reference token pinned to zero or
//! the softmax normalizer pinned to one. Logprob-free attacks return
//! [`IntervalBounds`] on gaps to a reference token instead of point values.

mod binarized;
mod graph;
mod logprob;
mod logprob_free;
mod lower_bound;
mod multi_token;
mod reference;

use serde::{Deserialize, Serialize};

pub use binarized::recover_binarized;
pub use graph::{shortest_path_bounds, ConstraintGraph, GraphBounds, IncrementalBounds};
pub use logprob::{
    collect_single_token_observations, recover_k_logprob, recover_least_squares, recover_single_logprob,
    KLogprobConfig, Observation,
};
pub use logprob_free::{recover_binary_search, recover_hyperrectangle, Centering, HyperrectangleAttack};
pub use lower_bound::{lower_bound_per_logit, query_lower_bound};
pub use multi_token::{recover_multi_token, MultiTokenConfig};
pub use reference::recover_reference_token;

use crate::api::CostLedger;
use crate::linalg::logsumexp;
use crate::victim::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "token", rename_all = "snake_case")]
pub enum Normalization {
    /// `values[R] = 0`.
    ReferenceTokenZero(TokenId),
    /// `sum(exp(values)) = 1`.
    UnitNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Exact,
    /// Midpoint of an interval.
    Interval,
    /// Recovered, but from a degenerate observation (clamped).
    LowConfidence,
    Missing,
}

/// A recovered logit vector. Missing entries hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredLogits {
    pub values: Vec<f64>,
    pub normalization: Normalization,
    pub status: Vec<EntryStatus>,
    /// Ledger delta of the run that produced this vector.
    pub cost: CostLedger,
    /// Queries spent re-asking after a failed guard, included in `cost`.
    pub retry_queries: u64,
}

impl RecoveredLogits {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.status.iter().filter(|s| **s == EntryStatus::Missing).count()
    }

    pub fn recovered(&self) -> usize {
        self.len() - self.missing()
    }

    /// The true logits expressed in this vector's normalization.
    pub fn aligned_truth(&self, truth: &[f64]) -> Vec<f64> {
        let shift = match self.normalization {
            Normalization::ReferenceTokenZero(r) => truth[r as usize],
            Normalization::UnitNormalizer => logsumexp(truth),
        };
        truth.iter().map(|t| t - shift).collect()
    }

    /// Largest absolute error against `truth` over recovered entries.
    pub fn max_abs_error(&self, truth: &[f64]) -> f64 {
        self.aligned_truth(truth)
            .iter()
            .zip(&self.values)
            .zip(&self.status)
            .filter(|(_, s)| **s != EntryStatus::Missing)
            .map(|((t, v), _)| (t - v).abs())
            .fold(0.0, f64::max)
    }

    /// Queries charged per recovered logit.
    pub fn queries_per_logit(&self) -> f64 {
        self.cost.queries as f64 / self.recovered().max(1) as f64
    }
}

/// Per-token enclosures `alpha[i] <= z_i - z_ref <= beta[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBounds {
    pub reference: TokenId,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Tokens whose gap lies below the bias range; their bounds mean nothing.
    pub unreachable: Vec<bool>,
    pub cost: CostLedger,
}

impl IntervalBounds {
    /// Prior box `[-bound, 0]` for every token, `[0, 0]` for the reference.
    pub fn prior(l: usize, reference: TokenId, bound: f64) -> Self {
        let mut alpha = vec![-bound; l];
        let mut beta = vec![0.0; l];
        alpha[reference as usize] = 0.0;
        beta[reference as usize] = 0.0;
        IntervalBounds { reference, alpha, beta, unreachable: vec![false; l], cost: CostLedger::default() }
    }

    pub fn width(&self, i: usize) -> f64 {
        self.beta[i] - self.alpha[i]
    }

    /// Mean width over reachable non-reference tokens.
    pub fn mean_width(&self) -> f64 {
        let widths: Vec<f64> = self.tokens().map(|i| self.width(i)).collect();
        widths.iter().sum::<f64>() / widths.len().max(1) as f64
    }

    fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.alpha.len()).filter(move |&i| i != self.reference as usize && !self.unreachable[i])
    }

    /// Whether every reachable token's true gap lies inside its interval,
    /// allowing `slack` for rounding.
    pub fn contains(&self, truth: &[f64], slack: f64) -> bool {
        let r = truth[self.reference as usize];
        self.tokens().all(|i| {
            let gap = truth[i] - r;
            self.alpha[i] - slack <= gap && gap <= self.beta[i] + slack
        })
    }

    /// Tokens whose true gap falls outside their interval.
    pub fn violations(&self, truth: &[f64], slack: f64) -> Vec<usize> {
        let r = truth[self.reference as usize];
        self.tokens()
            .filter(|&i| {
                let gap = truth[i] - r;
                gap < self.alpha[i] - slack || gap > self.beta[i] + slack
            })
            .collect()
    }

    /// Interval midpoints as a point estimate.
    pub fn midpoints(&self) -> RecoveredLogits {
        let l = self.alpha.len();
        let mut values = vec![f64::NAN; l];
        let mut status = vec![EntryStatus::Missing; l];
        for i in 0..l {
            if self.unreachable[i] {
                continue;
            }
            values[i] = 0.5 * (self.alpha[i] + self.beta[i]);
            status[i] = if i == self.reference as usize { EntryStatus::Exact } else { EntryStatus::Interval };
        }
        RecoveredLogits {
            values,
            normalization: Normalization::ReferenceTokenZero(self.reference),
            status,
            cost: self.cost,
            retry_queries: 0,
        }
    }

    /// Queries charged per non-reference token.
    pub fn queries_per_logit(&self) -> f64 {
        self.cost.queries as f64 / (self.alpha.len().saturating_sub(1)).max(1) as f64
    }
}
