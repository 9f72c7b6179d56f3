//! Full logit vectors from a top-K logprob API with logit bias: the
//! reference-token attack, the K-at-a-time closed form, and the top-1
//! binary-bias variant.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::harness::bits_of_precision;
use lmextract::recover::{recover_binarized, recover_k_logprob, recover_reference_token, KLogprobConfig, RecoveredLogits};
use lmextract::victim::{build_victim, Precision, VictimSpec};

fn show(name: &str, r: &RecoveredLogits, truth: &[f64]) -> lmextract::Result<()> {
    let bits = bits_of_precision(truth, r)?;
    println!(
        "{name:<22} {:>6.1} bits  {:.3} queries/logit  ({} retries)",
        bits.bits,
        r.queries_per_logit(),
        r.retry_queries
    );
    Ok(())
}

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(1000, 16, 0))?);
    let prompt = [9, 9, 2];
    let truth = victim.logits(&prompt)?;
    let topk = ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 });

    let api = Session::new(victim.clone(), topk.clone().with_emission(Precision::Fp32))?;
    show("reference (fp32)", &recover_reference_token(&api, &prompt, 40.0)?, &truth)?;

    let api = Session::new(victim.clone(), topk.with_emission(Precision::Fp16))?;
    let config = KLogprobConfig { guard: 1e-2, ..KLogprobConfig::with_bias(6.0) };
    show("k-logprob (fp16)", &recover_k_logprob(&api, &prompt, &config)?, &truth)?;

    let api = Session::new(victim, ApiConfig::new(ApiMode::Top1BinaryBias))?;
    show("binarized (fp64)", &recover_binarized(&api, &prompt)?, &truth)?;
    Ok(())
}
