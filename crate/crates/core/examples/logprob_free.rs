//! Argmax-only recovery: per-token binary search against the hyperrectangle
//! attacks, which bias up to N tokens per query and tighten all intervals
//! through shortest paths.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::harness::bits_of_precision;
use lmextract::recover::{lower_bound_per_logit, recover_binary_search, Centering, HyperrectangleAttack};
use lmextract::victim::{build_victim, VictimSpec};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(1000, 16, 0))?);
    let prompt = [1, 2, 3];
    let truth = victim.logits(&prompt)?;
    let api = || Session::new(victim.clone(), ApiConfig::new(ApiMode::ArgmaxOnlyWithBias));

    let b = recover_binary_search(&api()?, &prompt, 100.0 / 1024.0, 100.0)?;
    let bits = bits_of_precision(&truth, &b.midpoints())?.bits;
    println!("binary search   {bits:>6.1} bits  {:.2} queries/logit", b.queries_per_logit());

    let eps = 2f64.powi(-18);
    for centering in [Centering::Midpoint, Centering::OneOfN] {
        let s = api()?;
        let mut run = HyperrectangleAttack::new(&s, &prompt, centering, 100.0)?;
        run.run_until_width(eps, 3000)?;
        let b = run.bounds();
        let bits = bits_of_precision(&truth, &b.midpoints())?.bits;
        println!(
            "{:<15} {bits:>6.1} bits  {:.2} queries/logit  contains truth: {}",
            format!("{centering:?}"),
            b.queries_per_logit(),
            b.contains(&truth, 1e-9)
        );
    }
    println!("lower bound at 2^-18: {:.2} queries/logit", lower_bound_per_logit(100.0, eps, 300));
    Ok(())
}
