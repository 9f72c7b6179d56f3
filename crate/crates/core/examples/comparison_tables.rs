//! The two headline comparisons at desk scale: extraction across victim
//! shapes, and precision against cost for every logit-recovery attack.

use lmextract::harness::{run_suite, table3_suite, table4_suite, Metric};

fn main() -> lmextract::Result<()> {
    let extraction = run_suite("extraction", &table3_suite(&[0]))?;
    for r in &extraction.runs {
        println!("{:<22} dim {:?} rms {:.1e}", r.label, r.extracted_dim, r.rms.unwrap_or(f64::NAN));
    }

    let recovery = run_suite("recovery", &table4_suite(1000, 16, &[0, 1, 2]))?;
    for label in ["logprob-4", "sherman-morrison", "binarized", "binary-search", "hyperrectangle", "one-of-n"] {
        let bits = recovery.aggregate_for(label, Metric::Bits).map(|a| a.mean).unwrap_or(f64::NAN);
        let q = recovery.aggregate_for(label, Metric::QueriesPerLogit).map(|a| a.mean).unwrap_or(f64::NAN);
        println!("{label:<18} {bits:>6.1} bits {q:>7.3} queries/logit");
    }
    Ok(())
}
