use super::{EntryStatus, Normalization, RecoveredLogits};
use crate::api::{query_topk, ApiMode, CompletionApi, LogitBias, TopKResponse};
use crate::error::{Error, RejectCode, Result};
use crate::victim::TokenId;

/// Recover every logit relative to the top token by biasing `K - 1` tokens
/// per query with `bias` and reading them against an unbiased token whose
/// value is already known.
///
/// The first response fixes the anchor (its highest unbiased item), so the
/// whole vocabulary costs `ceil((l - 1) / (K - 1))` queries.
pub fn recover_reference_token<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    bias: f64,
) -> Result<RecoveredLogits> {
    let descriptor = api.descriptor();
    let k = match descriptor.mode {
        ApiMode::TopKLogprobsWithBias { k } if k >= 2 => k,
        mode => {
            return Err(Error::rejected(
                RejectCode::Capability,
                format!("reference-token recovery needs top-K logprobs with K >= 2 and a logit bias, API offers {mode:?}"),
            ))
        }
    };
    let l = descriptor.vocab_size;
    let start = api.ledger();
    let mut known: Vec<Option<f64>> = vec![None; l];
    let mut pending: Vec<TokenId> = (0..l as TokenId).collect();
    pending.reverse();

    let read_batch = |batch: &[TokenId], response: &TopKResponse, known: &mut Vec<Option<f64>>| {
        let anchor = response
            .items
            .iter()
            .find(|(t, _)| known[*t as usize].is_some() && !batch.contains(t))
            .or_else(|| response.items.iter().find(|(t, _)| known[*t as usize].is_some()));
        let Some(&(a, ya)) = anchor else { return };
        let a_biased = batch.contains(&a);
        let base = known[a as usize].expect("anchor is known") - ya + if a_biased { bias } else { 0.0 };
        for &t in batch {
            if let Some(yt) = response.logprob(t) {
                known[t as usize] = Some(base + yt - bias);
            }
        }
    };

    let first: Vec<TokenId> = (0..(k - 1).min(l)).map(|_| pending.pop().expect("l >= K - 1")).collect();
    let response = query_topk(api, prompt, &LogitBias::uniform(first.iter().copied(), bias))?;
    let &(anchor, _) = response
        .items
        .iter()
        .find(|(t, _)| !first.contains(t))
        .ok_or_else(|| Error::Degenerate("first response carried no unbiased token".into()))?;
    known[anchor as usize] = Some(0.0);
    read_batch(&first, &response, &mut known);
    pending.retain(|t| *t != anchor);

    while !pending.is_empty() {
        let batch: Vec<TokenId> = (0..(k - 1).min(pending.len())).map(|_| pending.pop().expect("non-empty")).collect();
        let response = query_topk(api, prompt, &LogitBias::uniform(batch.iter().copied(), bias))?;
        read_batch(&batch, &response, &mut known);
    }

    let top = (0..l)
        .filter(|&i| known[i].is_some())
        .fold(anchor as usize, |best, i| if known[i] > known[best] { i } else { best });
    let shift = known[top].expect("top is known");
    let values = known.iter().map(|v| v.map_or(f64::NAN, |v| v - shift)).collect();
    let status = known.iter().map(|v| if v.is_some() { EntryStatus::Exact } else { EntryStatus::Missing }).collect();
    Ok(RecoveredLogits {
        values,
        normalization: Normalization::ReferenceTokenZero(top as TokenId),
        status,
        cost: api.ledger().since(&start),
        retry_queries: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::ApiConfig;
    use crate::recover::testing::{fixed, session, victim};

    #[test]
    fn cost_is_l_minus_one_over_k_minus_one() {
        let v = victim(1001, 16, 1);
        let s = session(&v, ApiMode::TopKLogprobsWithBias { k: 5 });
        let r = recover_reference_token(&s, &[1, 2, 3], 100.0).unwrap();
        assert_eq!(r.cost.queries, 250);
        assert_eq!(r.missing(), 0);
        assert!((r.queries_per_logit() - 250.0 / 1001.0).abs() < 1e-12);
    }

    #[test]
    fn accurate_at_fp64() {
        let v = victim(300, 16, 2);
        let s = session(&v, ApiMode::TopKLogprobsWithBias { k: 5 });
        let p = [4, 4, 2];
        let r = recover_reference_token(&s, &p, 100.0).unwrap();
        let truth = v.logits(&p).unwrap();
        let Normalization::ReferenceTokenZero(top) = r.normalization else { panic!() };
        assert_eq!(r.values[top as usize], 0.0);
        assert!(r.max_abs_error(&truth) < 2f64.powi(-20), "{}", r.max_abs_error(&truth));
    }

    #[test]
    fn equal_logits_give_zeros() {
        let s = fixed(vec![0.5; 40], ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }));
        let r = recover_reference_token(&s, &[0], 100.0).unwrap();
        assert!(r.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn weak_bias_marks_missing() {
        let z: Vec<f64> = (0..20).map(|i| -(i as f64)).collect();
        let s = fixed(z, ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }));
        let r = recover_reference_token(&s, &[0], 2.0).unwrap();
        assert!(r.missing() > 0);
        assert!(r.max_abs_error(&(0..20).map(|i| -(i as f64)).collect::<Vec<_>>()) < 1e-9);
    }

    #[test]
    fn wrong_mode_is_capability_error() {
        let v = victim(50, 4, 1);
        let s = session(&v, ApiMode::ArgmaxOnlyWithBias);
        let e = recover_reference_token(&s, &[1], 100.0).unwrap_err();
        assert_eq!(e.reject_code(), Some(RejectCode::Capability));
    }
}
