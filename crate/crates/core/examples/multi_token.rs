//! Recover logits at several generated positions from one generation call
//! per bias pattern.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, CompletionApi, Session};
use lmextract::recover::{recover_multi_token, MultiTokenConfig};
use lmextract::victim::{build_victim, VictimSpec};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(300, 8, 5))?);
    let api = Session::new(victim.clone(), ApiConfig::new(ApiMode::GenerationLogprobs { k: 5 }))?;
    let config = MultiTokenConfig::default();
    let prompt = vec![4, 4];
    let positions = recover_multi_token(&api, &prompt, 3, &config)?;
    let mut prefix = prompt.clone();
    for (i, r) in positions.iter().enumerate() {
        println!("position {i}: max error {:.2e}", r.max_abs_error(&victim.logits(&prefix)?));
        prefix.push(config.forced);
    }
    println!("{} queries, {} tokens", api.ledger().queries, api.ledger().total_tokens());
    Ok(())
}
