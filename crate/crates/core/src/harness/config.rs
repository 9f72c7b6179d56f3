use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::api::{ApiConfig, ApiMode};
use crate::error::{Error, RejectCode, Result};
use crate::victim::VictimSpec;

/// Every pipeline the runner knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Top-K logprobs, K − 1 biased tokens read against a known anchor.
    Reference,
    /// Top-K logprobs, K biased tokens through the rank-one closed form.
    KLogprob,
    SingleLogprob,
    Binarized,
    BinarySearch,
    /// Argmax-only, midpoint centering.
    Hyperrectangle,
    /// Argmax-only, one-of-n centering.
    OneOfN,
    MultiToken,
    ExtractDim,
    ExtractLayer,
    ExtractLayerOrthogonal,
    ExtractNorm,
}

impl AttackKind {
    pub const ALL: [AttackKind; 12] = [
        AttackKind::Reference,
        AttackKind::KLogprob,
        AttackKind::SingleLogprob,
        AttackKind::Binarized,
        AttackKind::BinarySearch,
        AttackKind::Hyperrectangle,
        AttackKind::OneOfN,
        AttackKind::MultiToken,
        AttackKind::ExtractDim,
        AttackKind::ExtractLayer,
        AttackKind::ExtractLayerOrthogonal,
        AttackKind::ExtractNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Reference => "reference",
            AttackKind::KLogprob => "k-logprob",
            AttackKind::SingleLogprob => "single-logprob",
            AttackKind::Binarized => "binarized",
            AttackKind::BinarySearch => "binary-search",
            AttackKind::Hyperrectangle => "hyperrectangle",
            AttackKind::OneOfN => "one-of-n",
            AttackKind::MultiToken => "multi-token",
            AttackKind::ExtractDim => "extract-dim",
            AttackKind::ExtractLayer => "extract-layer",
            AttackKind::ExtractLayerOrthogonal => "extract-layer-orthogonal",
            AttackKind::ExtractNorm => "extract-norm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown attack {name:?}")))
    }

    /// The cheapest API mode this attack runs against; `k` fills top-K modes.
    pub fn default_mode(self, k: usize) -> ApiMode {
        match self {
            AttackKind::Reference | AttackKind::KLogprob | AttackKind::SingleLogprob => {
                ApiMode::TopKLogprobsWithBias { k }
            }
            AttackKind::Binarized => ApiMode::Top1BinaryBias,
            AttackKind::BinarySearch | AttackKind::Hyperrectangle | AttackKind::OneOfN => ApiMode::ArgmaxOnlyWithBias,
            AttackKind::MultiToken => ApiMode::GenerationLogprobs { k },
            _ => ApiMode::AllLogits,
        }
    }

    pub fn is_extraction(self) -> bool {
        matches!(
            self,
            AttackKind::ExtractDim | AttackKind::ExtractLayer | AttackKind::ExtractLayerOrthogonal | AttackKind::ExtractNorm
        )
    }

    /// Whether `mode` offers what this attack needs.
    pub fn check_mode(self, mode: ApiMode) -> Result<()> {
        let ok = match self {
            AttackKind::Reference => matches!(mode, ApiMode::TopKLogprobsWithBias { k } if k >= 2),
            AttackKind::KLogprob | AttackKind::SingleLogprob => matches!(mode, ApiMode::TopKLogprobsWithBias { .. }),
            AttackKind::Binarized => matches!(mode, ApiMode::Top1BinaryBias | ApiMode::TopKLogprobsWithBias { .. }),
            AttackKind::BinarySearch | AttackKind::Hyperrectangle | AttackKind::OneOfN => matches!(
                mode,
                ApiMode::ArgmaxOnlyWithBias | ApiMode::TopKLogprobsWithBias { .. } | ApiMode::GenerationLogprobs { .. }
            ),
            AttackKind::MultiToken => matches!(mode, ApiMode::GenerationLogprobs { k } if k >= 2),
            AttackKind::ExtractDim
            | AttackKind::ExtractLayer
            | AttackKind::ExtractLayerOrthogonal
            | AttackKind::ExtractNorm => matches!(mode, ApiMode::AllLogits),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::rejected(
                RejectCode::Capability,
                format!("attack {} cannot run against a {} API", self.name(), mode.name()),
            ))
        }
    }
}

/// Attack parameters; unset values fall back to per-attack defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Bias magnitude `B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    /// Interval width for binary search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Tokens per logprob query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Residual guard for the rank-one closed form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    /// Rounds per batch for the hyperrectangle attacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Query budget per logit for the argmax-only attacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries_per_logit: Option<f64>,
    /// Stop argmax-only attacks once intervals are `2^-target_bits` wide.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bits: Option<f64>,
    /// Safety cap on rounds per batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<usize>,
    /// Generated positions for the multi-token attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<usize>,
    /// Logit vectors to collect for extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    /// Restrict extraction to this many randomly chosen tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    /// Rank to extract; found from the spectrum when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Starting guess for the adaptive dimension search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_dim: Option<usize>,
    /// Prompts attacked per seed (logit-recovery attacks).
    #[serde(default = "default_prompts")]
    pub prompts: usize,
}

fn default_prompts() -> usize {
    1
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        AttackConfig {
            kind,
            bias: None,
            epsilon: None,
            k: None,
            guard: None,
            rounds: None,
            queries_per_logit: None,
            target_bits: None,
            max_rounds: None,
            positions: None,
            queries: None,
            subset: None,
            dim: None,
            expected_dim: None,
            prompts: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    InProcess,
    /// Serve the victim on a loopback port and attack it over HTTP.
    Loopback,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for report.json, report.csv, spectrum.csv and
    /// transcript.jsonl; nothing is written when unset.
    pub dir: Option<PathBuf>,
    /// Record the first run's request/response transcript.
    pub transcript: bool,
}

/// Which metrics get aggregate rows in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExtractedDim,
    Rms,
    Bits,
    QueriesPerLogit,
    TokensPerLogit,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::ExtractedDim, Metric::Rms, Metric::Bits, Metric::QueriesPerLogit, Metric::TokensPerLogit];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ExtractedDim => "extracted_dim",
            Metric::Rms => "rms",
            Metric::Bits => "bits",
            Metric::QueriesPerLogit => "queries_per_logit",
            Metric::TokensPerLogit => "tokens_per_logit",
        }
    }
}

/// One experiment: a victim family, an API, an attack and the seeds to
/// repeat it over.
///
/// File format (TOML):
///
/// ```toml
/// name = "sm-fp16"
/// seeds = [0, 1, 2]
/// transport = "in_process"      # or "loopback"
/// metrics = ["bits", "queries_per_logit"]
/// workers = 4
///
/// [victim]                      # same keys as a victim spec; `seed` is
/// l = 1000                      # replaced by each entry of `seeds`
/// h = 16
/// seed = 0
///
/// [api.mode]
/// kind = "top_k_logprobs_with_bias"
/// k = 5
/// [api.restrictions]
/// emission_precision = "fp16"
///
/// [attack]
/// kind = "k-logprob"
/// bias = 6.0
/// guard = 0.01
///
/// [output]
/// dir = "out"
/// transcript = true
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub victim: VictimSpec,
    pub api: ApiConfig,
    pub attack: AttackConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Worker threads for independent runs; defaults to the CPU count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn new(victim: VictimSpec, api: ApiConfig, attack: AttackConfig) -> Self {
        ExperimentConfig {
            name: default_name(),
            seeds: vec![victim.seed],
            victim,
            api,
            attack,
            transport: Transport::InProcess,
            metrics: default_metrics(),
            workers: None,
            output: OutputConfig::default(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn with_transport(mut self, transport: Transport) -> Self {
        self.transport = transport;
        self
    }

    /// Checks everything that can be checked without querying.
    pub fn validate(&self) -> Result<()> {
        self.victim.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.attack.prompts == 0 {
            return Err(Error::Config("prompts must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.attack.kind.check_mode(self.api.mode)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}
