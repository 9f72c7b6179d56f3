//! How close the argmax-only attacks get to the information-theoretic
//! minimum number of queries.

use lmextract::api::{ApiConfig, ApiMode};
use lmextract::harness::lower_bound_report;
use lmextract::victim::VictimSpec;

fn main() -> lmextract::Result<()> {
    let rows = lower_bound_report(
        &VictimSpec::new(1000, 16, 0),
        &ApiConfig::new(ApiMode::ArgmaxOnlyWithBias),
        &[6.0, 12.0, 18.0],
        &[0],
        12.0,
    )?;
    println!("bits  bound  one-of-n  binary-search  midpoint");
    for r in rows {
        let mid = r.midpoint.map_or("capped".to_string(), |m| format!("{m:.2}"));
        println!("{:>4}  {:>5.2}  {:>8.2}  {:>13.2}  {mid:>8}", r.bits, r.lower_bound, r.one_of_n, r.binary_search);
    }
    Ok(())
}
