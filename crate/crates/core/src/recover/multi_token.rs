use serde::{Deserialize, Serialize};

use super::{EntryStatus, Normalization, RecoveredLogits};
use crate::api::{query_generation_logprobs, ApiMode, CompletionApi, LogitBias};
use crate::error::{Error, RejectCode, Result};
use crate::victim::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiTokenConfig {
    /// Bias on the forced token `x`.
    pub bias: f64,
    /// `B - B'`: how far below `x` the batch tokens are biased.
    pub separation: f64,
    /// The token forced at every position.
    pub forced: TokenId,
}

impl Default for MultiTokenConfig {
    fn default() -> Self {
        MultiTokenConfig { bias: 100.0, separation: 10.0, forced: 0 }
    }
}

/// Force the model to emit `x x ... x` for `m` positions while `K - 1` other
/// tokens ride along at bias `B' = B - separation`. Every position exposes
/// their logits relative to `x`, so one pass over the vocabulary recovers the
/// logit vectors of the `m` prefixes `p`, `p x`, ..., `p x^(m-1)`.
pub fn recover_multi_token<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    m: usize,
    config: &MultiTokenConfig,
) -> Result<Vec<RecoveredLogits>> {
    let d = api.descriptor();
    let k = match d.mode {
        ApiMode::GenerationLogprobs { k } if k >= 2 => k,
        mode => {
            return Err(Error::rejected(
                RejectCode::Capability,
                format!("multi-token recovery needs generation with K >= 2 logprobs, API offers {mode:?}"),
            ))
        }
    };
    let l = d.vocab_size;
    let x = config.forced;
    if x as usize >= l || m == 0 {
        return Err(Error::InvalidInput("forced token outside vocabulary or m = 0".into()));
    }
    let start = api.ledger();
    let secondary = config.bias - config.separation;
    let mut values = vec![vec![f64::NAN; l]; m];
    for v in &mut values {
        v[x as usize] = 0.0;
    }
    let others: Vec<TokenId> = (0..l as TokenId).filter(|&t| t != x).collect();
    for batch in others.chunks(k - 1) {
        let mut bias = LogitBias::uniform(batch.iter().copied(), secondary);
        bias.insert(x, config.bias);
        let (tokens, positions) = query_generation_logprobs(api, prompt, &bias, m)?;
        let valid = tokens.iter().take_while(|&&t| t == x).count();
        for (j, pos) in positions.iter().enumerate().take(valid) {
            let Some(yx) = pos.logprob(x) else { continue };
            for &t in batch {
                if let Some(yt) = pos.logprob(t) {
                    values[j][t as usize] = yt - yx + config.separation;
                }
            }
        }
    }
    let cost = api.ledger().since(&start);
    Ok(values
        .into_iter()
        .map(|v| RecoveredLogits {
            status: v.iter().map(|x| if x.is_nan() { EntryStatus::Missing } else { EntryStatus::Exact }).collect(),
            values: v,
            normalization: Normalization::ReferenceTokenZero(x),
            cost,
            retry_queries: 0,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::api::{ApiConfig, Session};
    use crate::recover::testing::victim;

    #[test]
    fn recovers_every_prefix() {
        let v = victim(101, 8, 5);
        let s = Session::new(v.clone(), ApiConfig::new(ApiMode::GenerationLogprobs { k: 5 }).with_overhead(7)).unwrap();
        let p = [1u32, 2];
        let m = 3;
        let config = MultiTokenConfig { forced: 4, ..Default::default() };
        let out = recover_multi_token(&s, &p, m, &config).unwrap();
        assert_eq!(s.ledger().queries, 25);
        assert_eq!(s.ledger().total_tokens(), 25 * (2 + 3 + 7));
        for (j, r) in out.iter().enumerate() {
            let mut prefix = p.to_vec();
            prefix.extend(std::iter::repeat_n(4, j));
            let truth = v.logits(&prefix).unwrap();
            assert_eq!(r.missing(), 0);
            assert!(r.max_abs_error(&truth) < 1e-9, "position {j}: {}", r.max_abs_error(&truth));
        }
        let _ = Arc::strong_count(&v);
    }

    #[test]
    fn needs_generation_mode() {
        let v = victim(50, 4, 5);
        let s = Session::new(v, ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 })).unwrap();
        assert!(recover_multi_token(&s, &[1], 2, &MultiTokenConfig::default()).is_err());
    }
}
