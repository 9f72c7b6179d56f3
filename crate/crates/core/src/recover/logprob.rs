use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EntryStatus, Normalization, RecoveredLogits};
use crate::api::{query_topk, ApiMode, CompletionApi, LogitBias};
use crate::error::{Error, RejectCode, Result};
use crate::linalg::logsumexp;
use crate::victim::TokenId;

/// Parameters of the closed-form logprob attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KLogprobConfig {
    /// Starting bias added to every token of a batch.
    pub bias: f64,
    /// Tokens per query; `None` uses the API's K.
    pub k: Option<usize>,
    /// Re-query when `1 - (1 - e^-B) * sum(exp(a))` falls below this.
    pub guard: f64,
    /// Bias change per retry.
    pub step: f64,
    pub max_retries: usize,
}

impl Default for KLogprobConfig {
    fn default() -> Self {
        KLogprobConfig { bias: 40.0, k: None, guard: 1e-6, step: 5.0, max_retries: 20 }
    }
}

impl KLogprobConfig {
    pub fn with_bias(bias: f64) -> Self {
        KLogprobConfig { bias, ..Default::default() }
    }
}

fn check_mode<A: CompletionApi + ?Sized>(api: &A) -> Result<usize> {
    match api.descriptor().mode {
        ApiMode::TopKLogprobsWithBias { k } | ApiMode::GenerationLogprobs { k } => Ok(k),
        mode => Err(Error::rejected(
            RejectCode::Capability,
            format!("logprob recovery needs real-valued bias with logprobs, API offers {mode:?}"),
        )),
    }
}

/// One logprob per query: bias `B` on token `i` and invert the softmax.
pub fn recover_single_logprob<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    config: &KLogprobConfig,
) -> Result<RecoveredLogits> {
    recover_k_logprob(api, prompt, &KLogprobConfig { k: Some(1), ..config.clone() })
}

/// `K` logits per query through the rank-one closed form
/// `z_k = a_k - B - ln(1 - (1 - e^-B) * sum_j exp(a_j))`, under the
/// convention `sum(exp(z)) = 1`.
///
/// When the bracket falls below `guard` the batch is re-queried with a
/// smaller bias; when a biased token fails to reach the top-K the bias is
/// raised. Retries are reported separately in `retry_queries`.
pub fn recover_k_logprob<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    config: &KLogprobConfig,
) -> Result<RecoveredLogits> {
    let api_k = check_mode(api)?;
    let descriptor = api.descriptor();
    let k = config.k.unwrap_or(api_k);
    if k == 0 || k > api_k {
        return Err(Error::InvalidInput(format!("batch size {k} must lie in 1..={api_k}")));
    }
    let bound = descriptor.restrictions.bias_bound;
    let l = descriptor.vocab_size;
    let start = api.ledger();
    let mut values = vec![f64::NAN; l];
    let mut status = vec![EntryStatus::Missing; l];
    let mut retry_queries = 0u64;
    let tokens: Vec<TokenId> = (0..l as TokenId).collect();

    for batch in tokens.chunks(k) {
        let mut b = config.bias.min(bound);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for attempt in 0..=config.max_retries {
            if attempt > 0 {
                retry_queries += 1;
            }
            let response = query_topk(api, prompt, &LogitBias::uniform(batch.iter().copied(), b))?;
            let logprobs: Option<Vec<f64>> = batch.iter().map(|&t| response.logprob(t)).collect();
            let next = match logprobs {
                None => {
                    lo = b;
                    if hi.is_finite() { 0.5 * (b + hi) } else { b + config.step }
                }
                Some(a) => {
                    let mass: f64 = a.iter().map(|v| v.exp()).sum();
                    let residual = 1.0 - (1.0 - (-b).exp()) * mass;
                    if residual >= config.guard {
                        let log_residual = residual.ln();
                        for (&t, &at) in batch.iter().zip(&a) {
                            values[t as usize] = at - b - log_residual;
                            status[t as usize] = EntryStatus::Exact;
                        }
                        break;
                    }
                    hi = b;
                    if lo.is_finite() { 0.5 * (b + lo) } else { b - config.step }
                }
            };
            if !(next > 0.0 && next <= bound) || next == b {
                break;
            }
            b = next;
        }
    }

    Ok(RecoveredLogits {
        values,
        normalization: Normalization::UnitNormalizer,
        status,
        cost: api.ledger().since(&start),
        retry_queries,
    })
}

/// One observed logprob: token `token` had logprob `logprob` under `bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub bias: LogitBias,
    pub token: TokenId,
    pub logprob: f64,
}

/// For each `(token, bias)` pair, bias that single token and record every
/// returned logprob as an observation.
pub fn collect_single_token_observations<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    plan: &[(TokenId, f64)],
) -> Result<Vec<Observation>> {
    check_mode(api)?;
    let mut out = Vec::new();
    for &(t, b) in plan {
        let bias = LogitBias::new().with(t, b);
        let response = query_topk(api, prompt, &bias)?;
        for (token, logprob) in response.items {
            out.push(Observation { bias: bias.clone(), token, logprob });
        }
    }
    Ok(out)
}

/// Solve the linear system every logprob observation implies for
/// `x = exp(z)`:
/// `sum_j exp(b_j) x_j - exp(b_i - a) x_i = 0`, with `x_0 = 1` pinned.
/// Rows are scaled to unit norm before an SVD least-squares solve. The
/// result is reported under `sum(exp(z)) = 1`.
pub fn recover_least_squares(observations: &[Observation], vocab_size: usize) -> Result<RecoveredLogits> {
    let l = vocab_size;
    if l < 2 {
        return Err(Error::InvalidInput("need at least two tokens".into()));
    }
    if observations.len() + 1 < l {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            detail: format!("{} observations for {} unknowns", observations.len(), l - 1),
        });
    }
    let rows = observations.len() + 1;
    let mut a = DMatrix::zeros(rows, l);
    for (r, obs) in observations.iter().enumerate() {
        if obs.token as usize >= l {
            return Err(Error::InvalidInput(format!("observed token {} outside vocabulary", obs.token)));
        }
        // Divide by max exp(b) to keep entries bounded.
        let bmax = obs.bias.entries.values().copied().fold(0.0f64, f64::max);
        for j in 0..l {
            a[(r, j)] = (obs.bias.get(j as TokenId) - bmax).exp();
        }
        let i = obs.token as usize;
        a[(r, i)] -= (obs.bias.get(obs.token) - bmax - obs.logprob).exp();
        let norm = a.row(r).norm();
        if norm > 0.0 {
            a.row_mut(r).scale_mut(1.0 / norm);
        }
    }
    a[(rows - 1, 0)] = 1.0;
    let mut rhs = DVector::zeros(rows);
    rhs[rows - 1] = 1.0;

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let tol = smax * 1e-12;
    if smin <= tol {
        let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Degenerate("SVD did not produce V".into()))?;
        let mut tokens: Vec<usize> = Vec::new();
        for (idx, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                tokens.extend((0..l).filter(|&j| v_t[(idx, j)].abs() > 1e-6));
            }
        }
        tokens.sort_unstable();
        tokens.dedup();
        return Err(Error::Underdetermined { tokens });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|e| Error::Degenerate(e.to_string()))?;
    if let Some(j) = (0..l).find(|&j| !(x[j] > 0.0)) {
        return Err(Error::Degenerate(format!(
            "solution entry {j} is {} (condition {:.3e}); exp(z) must be positive",
            x[j],
            smax / smin
        )));
    }
    let z: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let lse = logsumexp(&z);
    Ok(RecoveredLogits {
        values: z.iter().map(|v| v - lse).collect(),
        normalization: Normalization::UnitNormalizer,
        status: vec![EntryStatus::Exact; l],
        cost: Default::default(),
        retry_queries: 0,
    })
}
