use super::{EntryStatus, Normalization, RecoveredLogits};
use crate::api::{query_topk, CompletionApi, LogitBias};
use crate::error::{Error, Result};
use crate::victim::TokenId;

/// Smallest probability reported when an observation gives `p <= 0`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Recover probabilities from the top-1 logprob alone, with biases in
/// `{-1, 0}`: pushing token `t` down by one changes the top logprob by
/// `-ln(1 - p_t (1 - 1/e))`, so `p_t = (exp(y - y') - 1) / (1/e - 1)`.
///
/// One baseline query plus one per non-top token. Values are `ln p` under
/// `sum(exp(z)) = 1`.
pub fn recover_binarized<A: CompletionApi + ?Sized>(api: &A, prompt: &[TokenId]) -> Result<RecoveredLogits> {
    let l = api.descriptor().vocab_size;
    let start = api.ledger();
    let baseline = query_topk(api, prompt, &LogitBias::new())?;
    let (top, y) = baseline.top().ok_or_else(|| Error::Protocol("empty top-1 response".into()))?;
    let mut values = vec![f64::NAN; l];
    let mut status = vec![EntryStatus::Missing; l];
    values[top as usize] = y;
    status[top as usize] = EntryStatus::Exact;
    let scale = (-1f64).exp() - 1.0;
    for t in (0..l as TokenId).filter(|&t| t != top) {
        let response = query_topk(api, prompt, &LogitBias::new().with(t, -1.0))?;
        let Some(y_shifted) = response.logprob(top) else { continue };
        let p = ((y - y_shifted).exp() - 1.0) / scale;
        if p > 0.0 {
            values[t as usize] = p.ln();
            status[t as usize] = EntryStatus::Exact;
        } else {
            values[t as usize] = PROBABILITY_FLOOR.ln();
            status[t as usize] = EntryStatus::LowConfidence;
        }
    }
    Ok(RecoveredLogits {
        values,
        normalization: Normalization::UnitNormalizer,
        status,
        cost: api.ledger().since(&start),
        retry_queries: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::{ApiConfig, ApiMode};
    use crate::recover::testing::{fixed, session, victim};
    use crate::victim::Precision;

    #[test]
    fn two_token_closed_form() {
        let s = fixed(vec![0.75f64.ln(), 0.25f64.ln()], ApiConfig::new(ApiMode::Top1BinaryBias));
        let r = recover_binarized(&s, &[0]).unwrap();
        assert!((r.values[1].exp() - 0.25).abs() < 1e-9);
        assert!((r.values[0].exp() - 0.75).abs() < 1e-12);
        assert_eq!(r.cost.queries, 2);
    }

    #[test]
    fn no_change_hits_floor() {
        // fp16 emission swallows the tiny shift from a negligible token.
        let s = fixed(vec![0.0, -30.0, -1.0], ApiConfig::new(ApiMode::Top1BinaryBias).with_emission(Precision::Fp16));
        let r = recover_binarized(&s, &[0]).unwrap();
        assert_eq!(r.status[1], EntryStatus::LowConfidence);
        assert_eq!(r.values[1], PROBABILITY_FLOOR.ln());
    }

    #[test]
    fn one_query_per_logit_and_accurate_at_fp64() {
        let v = victim(100, 8, 9);
        let s = session(&v, ApiMode::Top1BinaryBias);
        let r = recover_binarized(&s, &[5]).unwrap();
        assert_eq!(r.cost.queries, 100);
        let truth = v.logits(&[5]).unwrap();
        assert!(r.max_abs_error(&truth) < 1e-6, "{}", r.max_abs_error(&truth));
    }
}
