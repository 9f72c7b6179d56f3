//! Reproducible experiments: a TOML-describable [`ExperimentConfig`], a
//! runner that repeats it over seeds on a bounded worker pool, and reports
//! with per-run rows, aggregates and a separate timing section.
//!
//! ```no_run
//! use lmextract::harness::{run_attack_suite, AttackConfig, AttackKind, ExperimentConfig};
//! use lmextract::api::{ApiConfig, ApiMode};
//! use lmextract::victim::VictimSpec;
//!
//! let config = ExperimentConfig::new(
//!     VictimSpec::new(1000, 16, 0),
//!     ApiConfig::new(ApiMode::AllLogits),
//!     AttackConfig::new(AttackKind::ExtractDim),
//! )
//! .with_seeds([0, 1, 2]);
//! let report = run_attack_suite(&config).unwrap();
//! println!("{}", report.to_csv().unwrap());
//! ```

mod config;
mod metrics;
mod report;
mod runner;
mod suites;

use sha2::{Digest, Sha256};

pub use config::{AttackConfig, AttackKind, ExperimentConfig, Metric, OutputConfig, Transport};
pub use metrics::{bits_of_precision, median, random_baseline_rms, BitsOfPrecision, Summary, MAX_BITS};
pub use report::{revision, Aggregate, Report, RunRecord, Timing};
pub use runner::{attack_prompt, execute, run_attack_suite, token_subset};
pub use suites::{
    defense_sweep, lower_bound_report, run_suite, table3_suite, table4_suite, Defense, LowerBoundRow,
};

/// SHA-256 over the concatenation of `hashes`, hex.
pub fn combine_hashes<'a>(hashes: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for s in hashes {
        h.update(s.as_bytes());
    }
    format!("{:x}", h.finalize())
}
