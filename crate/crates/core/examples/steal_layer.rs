//! Recover the final projection up to an invertible h x h matrix and measure
//! how close it is once aligned.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::extract::{align_affine, collect_query_matrix, extract_hidden_dim, extract_layer};
use lmextract::harness::random_baseline_rms;
use lmextract::victim::{build_victim, Precision, VictimSpec};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(1000, 64, 0))?);
    for emission in [Precision::Fp64, Precision::Fp16] {
        let api = Session::new(victim.clone(), ApiConfig::new(ApiMode::AllLogits).with_emission(emission))?;
        let q = collect_query_matrix(&api, 256, None, 0)?;
        let (h, _) = extract_hidden_dim(&q)?;
        let stolen = extract_layer(&q, h)?;
        let aligned = align_affine(&stolen.w, victim.effective_weights())?;
        let baseline = random_baseline_rms(victim.effective_weights(), h, 0)?;
        println!("{}: rms {:.2e} (random baseline {baseline:.2e})", emission.as_str(), aligned.rms);
    }
    Ok(())
}
