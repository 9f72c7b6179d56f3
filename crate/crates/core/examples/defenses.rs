//! What the hardening options do to the attacks: noise and quantization on
//! the victim, and the bias-xor-logprobs API restriction.

use lmextract::api::{ApiConfig, ApiMode};
use lmextract::harness::{defense_sweep, run_suite, AttackConfig, AttackKind, Defense, ExperimentConfig, Metric};
use lmextract::victim::VictimSpec;

fn main() -> lmextract::Result<()> {
    let mut layer = AttackConfig::new(AttackKind::ExtractLayer);
    layer.queries = Some(160);
    layer.dim = Some(32);
    let base = ExperimentConfig::new(VictimSpec::new(500, 32, 0), ApiConfig::new(ApiMode::AllLogits), layer)
        .with_seeds([0, 1]);

    let noise = Defense::Noise { sigmas: vec![0.0, 1e-4, 1e-2, 1e-1] };
    let report = run_suite("noise", &defense_sweep(&base, &noise)?)?;
    for a in report.aggregates.iter().filter(|a| a.metric == Metric::Rms.name()) {
        println!("{:<12} rms {:.2e}", a.label, a.mean);
    }

    let report = run_suite("xor", &defense_sweep(&base, &Defense::BiasXorLogprobs)?)?;
    for r in report.runs.iter().filter(|r| r.seed == 0) {
        let outcome = r.error_code.clone().unwrap_or_else(|| "ok".into());
        println!("{:<32} {outcome}", r.label);
    }
    Ok(())
}
