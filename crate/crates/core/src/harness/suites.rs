use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, AttackKind, ExperimentConfig, Metric};
use super::report::Report;
use super::runner::{attack_prompt, run_attack_suite};
use crate::api::{ApiConfig, ApiMode, Session};
use crate::error::{Error, Result};
use crate::recover::{lower_bound_per_logit, recover_binary_search, Centering, HyperrectangleAttack};
use crate::victim::{build_victim, NormKind, Precision, SpoofConfig, VictimSpec};

/// Run each config and merge the results into one report, aggregated per
/// label over the union of the configs' metrics.
pub fn run_suite(name: &str, configs: &[ExperimentConfig]) -> Result<Report> {
    let mut report = Report::new(name, super::combine_hashes(std::iter::empty()));
    let mut metrics: Vec<Metric> = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let r = run_attack_suite(c)?;
        if i == 0 {
            report.config_hash = r.config_hash.clone();
            report.runs = r.runs;
            report.timing = r.timing;
        } else {
            report.merge(r);
        }
        for m in &c.metrics {
            if !metrics.contains(m) {
                metrics.push(*m);
            }
        }
    }
    report.aggregate(&metrics);
    Ok(report)
}

fn labeled(name: impl Into<String>, victim: VictimSpec, api: ApiConfig, attack: AttackConfig, seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig::new(victim, api, attack).named(name).with_seeds(seeds.iter().copied())
}

/// Logit-recovery comparison on one victim family: bits of precision and
/// cost for every attack, each under the API it needs.
///
/// Labels: `logprob-4`, `sherman-morrison`, `binarized`, `binary-search`,
/// `hyperrectangle`, `one-of-n`. The argmax-only rows get an equal budget
/// of 10 queries per logit.
pub fn table4_suite(vocab: usize, hidden: usize, seeds: &[u64]) -> Vec<ExperimentConfig> {
    let victim = VictimSpec::new(vocab, hidden, seeds.first().copied().unwrap_or(0));
    let topk = ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 });
    let argmax = ApiConfig::new(ApiMode::ArgmaxOnlyWithBias);
    let metrics = vec![Metric::Bits, Metric::QueriesPerLogit, Metric::TokensPerLogit];

    let reference = AttackConfig::new(AttackKind::Reference);
    let mut sm = AttackConfig::new(AttackKind::KLogprob);
    sm.bias = Some(6.0);
    sm.guard = Some(1e-2);
    let binarized = AttackConfig::new(AttackKind::Binarized);
    let mut bisect = AttackConfig::new(AttackKind::BinarySearch);
    bisect.queries_per_logit = Some(10.0);
    let mut midpoint = AttackConfig::new(AttackKind::Hyperrectangle);
    midpoint.queries_per_logit = Some(10.0);
    let mut one_of_n = AttackConfig::new(AttackKind::OneOfN);
    one_of_n.queries_per_logit = Some(10.0);

    let mut configs = vec![
        labeled("logprob-4", victim.clone(), topk.clone().with_emission(Precision::Fp32), reference, seeds),
        labeled("sherman-morrison", victim.clone(), topk.with_emission(Precision::Fp16), sm, seeds),
        labeled(
            "binarized",
            victim.clone(),
            ApiConfig::new(ApiMode::Top1BinaryBias).with_emission(Precision::Fp16),
            binarized,
            seeds,
        ),
        labeled("binary-search", victim.clone(), argmax.clone(), bisect, seeds),
        labeled("hyperrectangle", victim.clone(), argmax.clone(), midpoint, seeds),
        labeled("one-of-n", victim, argmax, one_of_n, seeds),
    ];
    for c in &mut configs {
        c.metrics = metrics.clone();
    }
    configs
}

/// Dimension and layer extraction over a spread of victim shapes.
///
/// Labels are `l{vocab}-h{hidden}` with a `-fp16`, `-layernorm` or
/// `-deficit{d}` suffix where applicable.
pub fn table3_suite(seeds: &[u64]) -> Vec<ExperimentConfig> {
    let seed = seeds.first().copied().unwrap_or(0);
    let victims = [
        ("l512-h8", VictimSpec::new(512, 8, seed)),
        ("l1024-h32", VictimSpec::new(1024, 32, seed)),
        ("l1024-h64-fp16", VictimSpec::new(1024, 64, seed).with_precision(Precision::Fp16)),
        ("l1024-h64-layernorm", VictimSpec::new(1024, 64, seed).with_norm(NormKind::LayerNorm, true)),
        ("l1024-h128-deficit5", VictimSpec::new(1024, 128, seed).with_rank_deficit(5)),
        ("l2048-h256", VictimSpec::new(2048, 256, seed)),
    ];
    victims
        .into_iter()
        .map(|(name, v)| {
            let mut attack = AttackConfig::new(AttackKind::ExtractLayer);
            attack.queries = Some(v.hidden_dim * 2 + 32);
            let mut c = labeled(name, v, ApiConfig::new(ApiMode::AllLogits), attack, seeds);
            c.metrics = vec![Metric::ExtractedDim, Metric::Rms];
            c
        })
        .collect()
}

/// Hardening measures a sweep can vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Defense {
    /// Gaussian logit noise at each standard deviation.
    Noise { sigmas: Vec<f64> },
    /// Weight quantization at each bit width.
    Quantization { bits: Vec<u8> },
    /// Spoofed hidden dimension, one entry per target.
    Spoofing { targets: Vec<usize> },
    /// Bias and logprobs cannot be combined in one request.
    BiasXorLogprobs,
    /// Only non-positive (blocking) bias values are accepted.
    BlockList,
}

impl Defense {
    pub fn name(&self) -> &'static str {
        match self {
            Defense::Noise { .. } => "noise",
            Defense::Quantization { .. } => "quantization",
            Defense::Spoofing { .. } => "spoofing",
            Defense::BiasXorLogprobs => "bias-xor-logprobs",
            Defense::BlockList => "block-list",
        }
    }

    /// Parse a CLI name with the default sweep values.
    pub fn parse(name: &str, hidden: usize) -> Result<Self> {
        Ok(match name {
            "noise" => Defense::Noise { sigmas: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1] },
            "quantization" | "quant" => Defense::Quantization { bits: vec![8, 4] },
            "spoofing" | "spoof" => Defense::Spoofing { targets: vec![hidden + hidden / 3] },
            "bias-xor-logprobs" => Defense::BiasXorLogprobs,
            "block-list" | "blocklist" => Defense::BlockList,
            other => return Err(Error::Config(format!("unknown defense `{other}`"))),
        })
    }
}

/// Configs for sweeping `defense` over `base`.
///
/// Victim-side defenses (noise, quantization, spoofing) run `base`'s attack
/// once with the defense off (label `none`) and once per setting. API-side
/// defenses run a fixed battery of attacks, each with and without the
/// restriction, labelled `{attack}` and `{attack}+{defense}`.
pub fn defense_sweep(base: &ExperimentConfig, defense: &Defense) -> Result<Vec<ExperimentConfig>> {
    let with_victim = |label: String, victim: VictimSpec| ExperimentConfig {
        name: label,
        victim,
        ..base.clone()
    };
    let mut plain = base.victim.clone();
    plain.defenses = Default::default();
    let mut configs = vec![with_victim("none".into(), plain.clone())];
    match defense {
        Defense::Noise { sigmas } => {
            for &s in sigmas.iter().filter(|&&s| s > 0.0) {
                configs.push(with_victim(format!("noise={s:e}"), plain.clone().with_noise(s)));
            }
        }
        Defense::Quantization { bits } => {
            for &b in bits {
                configs.push(with_victim(format!("quant={b}"), plain.clone().with_quantization(b)));
            }
        }
        Defense::Spoofing { targets } => {
            for &t in targets {
                configs.push(with_victim(format!("spoof={t}"), plain.clone().with_spoof(SpoofConfig::new(t))));
            }
        }
        Defense::BiasXorLogprobs | Defense::BlockList => {
            configs.clear();
            let mut hyper = AttackConfig::new(AttackKind::OneOfN);
            hyper.rounds = Some(20);
            let mut dim = AttackConfig::new(AttackKind::ExtractDim);
            dim.expected_dim = Some(plain.hidden_dim);
            let battery = [
                (AttackConfig::new(AttackKind::Reference), ApiMode::TopKLogprobsWithBias { k: 5 }),
                (AttackConfig::new(AttackKind::KLogprob), ApiMode::TopKLogprobsWithBias { k: 5 }),
                (AttackConfig::new(AttackKind::Binarized), ApiMode::Top1BinaryBias),
                (hyper, ApiMode::ArgmaxOnlyWithBias),
                (dim, ApiMode::AllLogits),
            ];
            for (attack, mode) in battery {
                for restricted in [false, true] {
                    let mut api = base.api.clone();
                    api.mode = mode;
                    if restricted {
                        match defense {
                            Defense::BiasXorLogprobs => api.restrictions.bias_xor_logprobs = true,
                            _ => api.restrictions.block_list_only = true,
                        }
                    }
                    let label = if restricted {
                        format!("{}+{}", attack.kind.name(), defense.name())
                    } else {
                        attack.kind.name().to_string()
                    };
                    configs.push(ExperimentConfig {
                        name: label,
                        victim: plain.clone(),
                        api,
                        attack: attack.clone(),
                        ..base.clone()
                    });
                }
            }
        }
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

/// Measured queries per logit against the information-theoretic minimum at
/// one precision target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub bits: f64,
    pub lower_bound: f64,
    pub one_of_n: f64,
    pub binary_search: f64,
    /// `None` when midpoint centering missed the target within its cap.
    pub midpoint: Option<f64>,
}

/// Run the argmax-only attacks to interval width `2^-bits` for each target
/// (mean over seeds) and compare with `log2(B/eps) / log2(N)`.
///
/// Midpoint centering is capped at `midpoint_cap` queries per logit. Errors
/// if any measured cost falls below the bound.
pub fn lower_bound_report(
    victim: &VictimSpec,
    api: &ApiConfig,
    bit_targets: &[f64],
    seeds: &[u64],
    midpoint_cap: f64,
) -> Result<Vec<LowerBoundRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut api = api.clone();
    api.mode = ApiMode::ArgmaxOnlyWithBias;
    let bound = api.restrictions.bias_bound;
    let n = api.restrictions.max_entries;
    let l = victim.vocab_size;
    let mut rows = Vec::new();
    for &bits in bit_targets {
        let eps = 2f64.powf(-bits);
        let (mut one, mut bisect, mut mid, mut mid_ok) = (0.0, 0.0, 0.0, true);
        for &seed in seeds {
            let v = Arc::new(build_victim(&VictimSpec { seed, ..victim.clone() })?);
            let prompt = attack_prompt(l, seed, 0);
            for (centering, total) in [(Centering::OneOfN, &mut one), (Centering::Midpoint, &mut mid)] {
                let session = Session::new(v.clone(), api.clone())?;
                let mut run = HyperrectangleAttack::new(&session, &prompt, centering, bound)?;
                let max_rounds = match centering {
                    Centering::OneOfN => usize::MAX,
                    Centering::Midpoint => (midpoint_cap * (l - 1) as f64 / run.batch_count() as f64).ceil() as usize,
                };
                run.run_until_width(eps, max_rounds)?;
                if centering == Centering::Midpoint {
                    mid_ok &= (0..run.batch_count()).all(|b| run.batch_mean_width(b) <= eps);
                }
                *total += run.bounds().queries_per_logit() / seeds.len() as f64;
            }
            let session = Session::new(v.clone(), api.clone())?;
            bisect += recover_binary_search(&session, &prompt, eps, bound)?.queries_per_logit() / seeds.len() as f64;
        }
        let row = LowerBoundRow {
            bits,
            lower_bound: lower_bound_per_logit(bound, eps, n),
            one_of_n: one,
            binary_search: bisect,
            midpoint: mid_ok.then_some(mid),
        };
        let measured = [Some(row.one_of_n), Some(row.binary_search), row.midpoint];
        if measured.iter().flatten().any(|&q| q < row.lower_bound) {
            return Err(Error::InvalidInput(format!(
                "measured cost below the lower bound at {bits} bits: {row:?}"
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table4_labels_and_modes_validate() {
        let configs = table4_suite(100, 8, &[0, 1]);
        let labels: Vec<_> = configs.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            labels,
            ["logprob-4", "sherman-morrison", "binarized", "binary-search", "hyperrectangle", "one-of-n"]
        );
        for c in &configs {
            c.validate().unwrap();
            assert_eq!(c.seeds, [0, 1]);
        }
    }

    #[test]
    fn table3_configs_validate() {
        for c in table3_suite(&[3]) {
            c.validate().unwrap();
            assert_eq!(c.victim.seed, 3);
        }
    }

    #[test]
    fn small_table4_ordering() {
        let report = run_suite("t4", &table4_suite(120, 8, &[0])).unwrap();
        let bits = |label: &str| report.aggregate_for(label, Metric::Bits).unwrap().mean;
        assert!(bits("logprob-4") > bits("sherman-morrison"));
        assert!(bits("one-of-n") > bits("hyperrectangle"));
        let q = report.aggregate_for("binarized", Metric::QueriesPerLogit).unwrap().mean;
        assert!((q - 1.0).abs() < 0.05, "{q}");
    }

    #[test]
    fn api_defense_battery() {
        let base = ExperimentConfig::new(
            VictimSpec::new(60, 8, 0),
            ApiConfig::new(ApiMode::AllLogits),
            AttackConfig::new(AttackKind::ExtractDim),
        );
        let configs = defense_sweep(&base, &Defense::BiasXorLogprobs).unwrap();
        assert_eq!(configs.len(), 10);
        let report = run_suite("xor", &configs).unwrap();
        let failed = |label: &str| report.runs_for(label).all(|r| !r.ok());
        assert!(failed("k-logprob+bias-xor-logprobs"));
        assert!(!failed("k-logprob"));
        assert!(failed("binarized+bias-xor-logprobs"));
        assert!(!failed("one-of-n+bias-xor-logprobs"));
        assert!(!failed("extract-dim+bias-xor-logprobs"));
    }

    #[test]
    fn victim_defense_labels() {
        let base = ExperimentConfig::new(
            VictimSpec::new(60, 8, 0).with_noise(0.5),
            ApiConfig::new(ApiMode::AllLogits),
            AttackConfig::new(AttackKind::ExtractDim),
        );
        let configs = defense_sweep(&base, &Defense::Noise { sigmas: vec![0.0, 1e-3] }).unwrap();
        let labels: Vec<_> = configs.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(labels, ["none", "noise=1e-3"]);
        assert_eq!(configs[0].victim.defenses.logit_noise_sigma, 0.0);
    }

    #[test]
    fn lower_bound_holds_small() {
        let rows =
            lower_bound_report(&VictimSpec::new(200, 8, 0), &ApiConfig::new(ApiMode::AllLogits), &[6.0], &[0], 4.0)
                .unwrap();
        let r = &rows[0];
        assert!(r.one_of_n >= r.lower_bound && r.binary_search >= r.one_of_n);
    }
}
