//! Describe an experiment in TOML, run it over several seeds and write the
//! report files.

use lmextract::harness::{run_attack_suite, ExperimentConfig};

const CONFIG: &str = r#"
name = "sm-fp16"
seeds = [0, 1, 2]
metrics = ["bits", "queries_per_logit"]

[victim]
l = 1000
h = 16
seed = 0

[api.mode]
kind = "top_k_logprobs_with_bias"
k = 5
[api.restrictions]
emission_precision = "fp16"

[attack]
kind = "k-logprob"
bias = 6.0
guard = 0.01
"#;

fn main() -> lmextract::Result<()> {
    let mut config = ExperimentConfig::from_toml_str(CONFIG)?;
    let out = std::env::temp_dir().join("lmextract-experiment");
    config.output.dir = Some(out.clone());
    let report = run_attack_suite(&config)?;
    for a in &report.aggregates {
        println!("{} {} = {:.3} ± {:.3}", a.label, a.metric, a.mean, a.std);
    }
    println!("config {} -> {}", &report.config_hash[..12], out.display());
    Ok(())
}
