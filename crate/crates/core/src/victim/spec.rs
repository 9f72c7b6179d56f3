use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Precision;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    #[default]
    #[serde(alias = "rms_norm", alias = "rms")]
    RmsNorm,
    #[serde(alias = "layer_norm", alias = "layer")]
    LayerNorm,
}

/// How the normalization gain vector is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScale {
    Identity,
    #[default]
    Random,
}

/// How the logit-noise defense draws its noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Noise is a pure function of (seed, prompt): repeated queries agree.
    #[default]
    PromptKeyed,
    /// Fresh noise on every evaluation.
    PerQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofConfig {
    /// Apparent hidden dimension after spoofing; must exceed `h`.
    pub target_dim: usize,
    /// Singular value of the added columns relative to the smallest genuine
    /// singular value of `W`.
    #[serde(default = "SpoofConfig::default_singular_fraction")]
    pub singular_fraction: f64,
    /// Standard deviation of the appended noise activations, relative to the
    /// mean per-dimension standard deviation of genuine hidden states.
    #[serde(default = "SpoofConfig::default_noise_scale")]
    pub noise_scale: f64,
}

impl SpoofConfig {
    pub const DEFAULT_SINGULAR_FRACTION: f64 = 0.5;
    pub const DEFAULT_NOISE_SCALE: f64 = 0.01;

    pub fn new(target_dim: usize) -> Self {
        SpoofConfig {
            target_dim,
            singular_fraction: Self::DEFAULT_SINGULAR_FRACTION,
            noise_scale: Self::DEFAULT_NOISE_SCALE,
        }
    }

    fn default_singular_fraction() -> f64 {
        Self::DEFAULT_SINGULAR_FRACTION
    }

    fn default_noise_scale() -> f64 {
        Self::DEFAULT_NOISE_SCALE
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defenses {
    #[serde(default)]
    pub logit_noise_sigma: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    /// Symmetric per-column weight quantization (4 or 8 bits).
    #[serde(default)]
    pub weight_quantization_bits: Option<u8>,
    #[serde(default)]
    pub spoof: Option<SpoofConfig>,
}

/// Everything needed to rebuild a victim bit for bit.
///
/// Config-file keys: `l`, `h`, `seed`, `norm_kind`, `norm_bias_enabled`,
/// `norm_scale`, `precision`, `planted_rank_deficit` and a `[defenses]`
/// table (`logit_noise_sigma`, `noise_mode`, `weight_quantization_bits`,
/// `[defenses.spoof]` with `target_dim`, `singular_fraction`, `noise_scale`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimSpec {
    #[serde(rename = "l")]
    pub vocab_size: usize,
    #[serde(rename = "h")]
    pub hidden_dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub norm_kind: NormKind,
    #[serde(default)]
    pub norm_bias_enabled: bool,
    #[serde(default)]
    pub norm_scale: NormScale,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub planted_rank_deficit: usize,
    #[serde(default)]
    pub defenses: Defenses,
}

impl VictimSpec {
    pub fn new(vocab_size: usize, hidden_dim: usize, seed: u64) -> Self {
        VictimSpec {
            vocab_size,
            hidden_dim,
            seed,
            norm_kind: NormKind::default(),
            norm_bias_enabled: false,
            norm_scale: NormScale::default(),
            precision: Precision::Fp64,
            planted_rank_deficit: 0,
            defenses: Defenses::default(),
        }
    }

    pub fn with_norm(mut self, kind: NormKind, bias: bool) -> Self {
        self.norm_kind = kind;
        self.norm_bias_enabled = bias;
        self
    }

    pub fn with_norm_scale(mut self, scale: NormScale) -> Self {
        self.norm_scale = scale;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_rank_deficit(mut self, deficit: usize) -> Self {
        self.planted_rank_deficit = deficit;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.defenses.logit_noise_sigma = sigma;
        self
    }

    pub fn with_quantization(mut self, bits: u8) -> Self {
        self.defenses.weight_quantization_bits = Some(bits);
        self
    }

    pub fn with_spoof(mut self, spoof: SpoofConfig) -> Self {
        self.defenses.spoof = Some(spoof);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (l, h) = (self.vocab_size, self.hidden_dim);
        if h == 0 {
            return Err(Error::InvalidSpec("hidden dimension must be positive".into()));
        }
        if h >= l {
            return Err(Error::InvalidSpec(format!("need h < l, got h={h}, l={l}")));
        }
        if l > u32::MAX as usize {
            return Err(Error::InvalidSpec("vocabulary does not fit u32 token ids".into()));
        }
        if self.planted_rank_deficit >= h {
            return Err(Error::InvalidSpec(format!(
                "planted rank deficit {} must be below h={h}",
                self.planted_rank_deficit
            )));
        }
        let d = &self.defenses;
        if !(d.logit_noise_sigma >= 0.0 && d.logit_noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec("logit noise sigma must be finite and non-negative".into()));
        }
        if let Some(bits) = d.weight_quantization_bits {
            if bits != 4 && bits != 8 {
                return Err(Error::InvalidSpec(format!("quantization bits must be 4 or 8, got {bits}")));
            }
        }
        if let Some(spoof) = &d.spoof {
            validate_spoof(self, spoof)?;
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: VictimSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a spec from a `.toml` or `.json` file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let spec: VictimSpec = serde_json::from_str(&text)?;
            spec.validate()?;
            Ok(spec)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

pub(crate) fn validate_spoof(spec: &VictimSpec, spoof: &SpoofConfig) -> Result<()> {
    let (l, h) = (spec.vocab_size, spec.hidden_dim);
    if spoof.target_dim <= h {
        return Err(Error::InvalidSpec(format!(
            "spoof target dimension {} must exceed h={h}",
            spoof.target_dim
        )));
    }
    if spoof.target_dim - spec.planted_rank_deficit > l {
        return Err(Error::InvalidSpec(format!(
            "spoof target dimension {} does not fit a vocabulary of {l}",
            spoof.target_dim
        )));
    }
    if !(spoof.singular_fraction > 0.0 && spoof.noise_scale >= 0.0) {
        return Err(Error::InvalidSpec("spoof scales must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_with_defenses() {
        let text = r#"
            l = 100
            h = 8
            seed = 7
            norm_kind = "layernorm"
            norm_bias_enabled = true
            precision = "fp16"

            [defenses]
            logit_noise_sigma = 0.1
            weight_quantization_bits = 8
        "#;
        let spec = VictimSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.vocab_size, 100);
        assert_eq!(spec.norm_kind, NormKind::LayerNorm);
        assert_eq!(spec.precision, Precision::Fp16);
        assert_eq!(spec.defenses.weight_quantization_bits, Some(8));
        let again = VictimSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(VictimSpec::new(8, 8, 0).validate().is_err());
        assert!(VictimSpec::new(100, 8, 0).with_rank_deficit(8).validate().is_err());
        assert!(VictimSpec::new(100, 8, 0).with_spoof(SpoofConfig::new(8)).validate().is_err());
        assert!(VictimSpec::new(100, 8, 0).with_quantization(3).validate().is_err());
        assert!(VictimSpec::new(100, 8, 0).with_rank_deficit(3).validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(VictimSpec::from_toml_str("l = 10\nh = 2\nseed = 1\nwidth = 3\n").is_err());
    }
}
