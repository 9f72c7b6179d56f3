//! Find the hidden dimension from the singular values of stacked logit
//! vectors, and print the spectrum around the gap.

use std::sync::Arc;

use lmextract::api::{ApiConfig, ApiMode, Session};
use lmextract::extract::{collect_query_matrix, extract_hidden_dim, extract_hidden_dim_adaptive};
use lmextract::victim::{build_victim, VictimSpec};

fn main() -> lmextract::Result<()> {
    let victim = Arc::new(build_victim(&VictimSpec::new(2000, 96, 3))?);
    let api = Session::new(victim, ApiConfig::new(ApiMode::AllLogits))?;

    let q = collect_query_matrix(&api, 256, None, 0)?;
    let (h, spectrum) = extract_hidden_dim(&q)?;
    println!("256 queries -> h = {h}");
    for (i, s) in spectrum.singular_values.iter().enumerate().skip(h - 3).take(6) {
        println!("  sigma[{i}] = {s:.3e}");
    }

    // Starting from a bad guess, the adaptive driver doubles n until the
    // gap sits well inside the matrix.
    let a = extract_hidden_dim_adaptive(&api, 16, None, 1, 4096)?;
    println!("adaptive: h = {} after {:?} rows", a.dim, a.history);
    Ok(())
}
