//! Synthetic victim language model.
//!
//! The victim computes `logits(p) = W · g(p)` where `g` is a seeded nonlinear
//! map from a token sequence to `R^h` followed by a normalization layer, and
//! `W` is the secret `l × h` projection every attack tries to steal. Reduced
//! precision, logit noise, weight quantization and dimension spoofing are
//! layered on top of that forward pass.

mod precision;
mod spec;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use precision::Precision;
pub use spec::{Defenses, NoiseMode, NormKind, NormScale, SpoofConfig, VictimSpec};

use crate::error::{Error, Result};
use crate::linalg;
use precision::ReducedProjection;

pub type TokenId = u32;

// Independent RNG streams derived from the victim seed.
const STREAM_WEIGHTS: u64 = 1;
const STREAM_GENERATOR: u64 = 2;
const STREAM_NORM: u64 = 3;
const STREAM_SPOOF: u64 = 4;
const STREAM_PROMPT: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_SPOOF_NOISE: u64 = 7;
const STREAM_ACTIVATION_SAMPLE: u64 = 8;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable 64-bit hash of a token sequence.
pub fn hash_tokens(tokens: &[TokenId]) -> u64 {
    tokens
        .iter()
        .fold(splitmix64(tokens.len() as u64), |h, &t| splitmix64(h ^ u64::from(t)))
}

pub(crate) fn rng_for(seed: u64, stream: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ stream.rotate_left(32)) ^ key))
}

/// `rows × cols` matrix of independent `N(0, std²)` entries.
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    // Filled row by row so the draw order does not depend on storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = std * z;
        }
    }
    m
}

fn gaussian_vector(rng: &mut impl Rng, n: usize, std: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)))
}

/// Ground-truth hidden state `g(p)` (after normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenVector(pub DVector<f64>);

impl HiddenVector {
    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

#[derive(Debug, Clone)]
struct HiddenGenerator {
    first: DMatrix<f64>,
    first_bias: DVector<f64>,
    second: DMatrix<f64>,
    norm_kind: NormKind,
    norm_scale: DVector<f64>,
    norm_bias: Option<DVector<f64>>,
}

impl HiddenGenerator {
    fn build(spec: &VictimSpec) -> Self {
        let h = spec.hidden_dim;
        let mut rng = rng_for(spec.seed, STREAM_GENERATOR, 0);
        let scale = 1.0 / (h as f64).sqrt();
        let first = gaussian_matrix(&mut rng, h, h, scale);
        let first_bias = gaussian_vector(&mut rng, h, 0.5);
        let second = gaussian_matrix(&mut rng, h, h, scale);

        let mut rng = rng_for(spec.seed, STREAM_NORM, 0);
        let norm_scale = match spec.norm_scale {
            NormScale::Identity => DVector::from_element(h, 1.0),
            NormScale::Random => gaussian_vector(&mut rng, h, 0.2).map(f64::exp),
        };
        let norm_bias = spec.norm_bias_enabled.then(|| gaussian_vector(&mut rng, h, 0.5));
        HiddenGenerator { first, first_bias, second, norm_kind: spec.norm_kind, norm_scale, norm_bias }
    }

    /// Pre-normalization activation for a prompt: `e + W2 tanh(W1 e + b1)`
    /// with `e` a Gaussian keyed by the prompt hash.
    fn pre_norm(&self, seed: u64, tokens: &[TokenId]) -> DVector<f64> {
        let h = self.first.nrows();
        let mut rng = rng_for(seed, STREAM_PROMPT, hash_tokens(tokens));
        let e = gaussian_vector(&mut rng, h, 1.0);
        let inner = (&self.first * &e + &self.first_bias).map(f64::tanh);
        e + &self.second * inner
    }

    fn normalize(&self, x: DVector<f64>) -> DVector<f64> {
        let h = x.len() as f64;
        let normed = match self.norm_kind {
            NormKind::None => x,
            NormKind::RmsNorm => {
                let rms = (x.norm_squared() / h).sqrt();
                x / rms
            }
            NormKind::LayerNorm => {
                let centered = x.add_scalar(-x.mean());
                let rms = (centered.norm_squared() / h).sqrt();
                centered / rms
            }
        };
        let mut g = if self.norm_kind == NormKind::None { normed } else { normed.component_mul(&self.norm_scale) };
        if let Some(bias) = &self.norm_bias {
            g += bias;
        }
        g
    }
}

#[derive(Debug, Clone)]
struct SpoofLayer {
    config: SpoofConfig,
    /// `l × (target − h)` extra columns, already scaled.
    columns: DMatrix<f64>,
    noise_std: f64,
}

/// The secret model. Read-only after construction; safe to share between
/// threads.
#[derive(Debug)]
pub struct Victim {
    spec: VictimSpec,
    weights: DMatrix<f64>,
    effective: DMatrix<f64>,
    reduced: Option<ReducedProjection>,
    generator: HiddenGenerator,
    spoof: Option<SpoofLayer>,
    evaluations: AtomicU64,
}

impl Clone for Victim {
    fn clone(&self) -> Self {
        Victim {
            spec: self.spec.clone(),
            weights: self.weights.clone(),
            effective: self.effective.clone(),
            reduced: self.reduced.clone(),
            generator: self.generator.clone(),
            spoof: self.spoof.clone(),
            evaluations: AtomicU64::new(self.evaluations.load(Ordering::Relaxed)),
        }
    }
}

fn quantize_columns(w: &DMatrix<f64>, bits: u8) -> DMatrix<f64> {
    let levels = f64::from((1u32 << (bits - 1)) - 1);
    let mut q = w.clone();
    for mut col in q.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let step = max / levels;
        col.apply(|v| *v = (*v / step).round() * step);
    }
    q
}

/// Build the victim described by `spec`.
pub fn build_victim(spec: &VictimSpec) -> Result<Victim> {
    spec.validate()?;
    let (l, h, d) = (spec.vocab_size, spec.hidden_dim, spec.planted_rank_deficit);
    let mut rng = rng_for(spec.seed, STREAM_WEIGHTS, 0);
    let weights = if d == 0 {
        gaussian_matrix(&mut rng, l, h, 1.0 / (h as f64).sqrt())
    } else {
        // Entry variance stays 1/h: (h - d) * (1/h) * (1/(h - d)).
        let r = h - d;
        let left = gaussian_matrix(&mut rng, l, r, 1.0 / (h as f64).sqrt());
        let right = gaussian_matrix(&mut rng, r, h, 1.0 / (r as f64).sqrt());
        left * right
    };
    let effective = match spec.defenses.weight_quantization_bits {
        Some(bits) => quantize_columns(&weights, bits),
        None => weights.clone(),
    };
    let reduced = (spec.precision != Precision::Fp64).then(|| ReducedProjection::new(spec.precision, &effective));
    let mut victim = Victim {
        spec: spec.clone(),
        weights,
        effective,
        reduced,
        generator: HiddenGenerator::build(spec),
        spoof: None,
        evaluations: AtomicU64::new(0),
    };
    if let Some(spoof) = spec.defenses.spoof.clone() {
        victim = victim.install_spoof(spoof)?;
    }
    Ok(victim)
}

/// Extend the victim so that it appears to have hidden dimension
/// `target_dim`, with default spoofing scales.
pub fn apply_spoofing(victim: Victim, target_dim: usize) -> Result<Victim> {
    victim.install_spoof(SpoofConfig::new(target_dim))
}

impl Victim {
    pub fn spec(&self) -> &VictimSpec {
        &self.spec
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.spec.hidden_dim
    }

    /// The secret projection as constructed (before quantization).
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// The projection used by the forward pass (after quantization).
    pub fn effective_weights(&self) -> &DMatrix<f64> {
        &self.effective
    }

    /// Projection with the normalization gain and sphere radius folded in,
    /// so that `logits = folded · u + offset` for unit vectors `u`.
    /// Meaningful for RMSNorm and LayerNorm victims.
    pub fn folded_projection(&self) -> DMatrix<f64> {
        let g = &self.generator;
        if g.norm_kind == NormKind::None {
            return self.effective.clone();
        }
        let radius = (self.spec.hidden_dim as f64).sqrt();
        let mut folded = self.effective.clone();
        for (j, mut col) in folded.column_iter_mut().enumerate() {
            col *= g.norm_scale[j] * radius;
        }
        folded
    }

    pub fn norm_scale(&self) -> &DVector<f64> {
        &self.generator.norm_scale
    }

    pub fn norm_bias(&self) -> Option<&DVector<f64>> {
        self.generator.norm_bias.as_ref()
    }

    /// The spoofing columns appended to `W`, if spoofing is active.
    pub fn spoof_columns(&self) -> Option<&DMatrix<f64>> {
        self.spoof.as_ref().map(|s| &s.columns)
    }

    fn validate_prompt(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("prompt must not be empty".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.spec.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "token id {bad} outside vocabulary of {}",
                self.spec.vocab_size
            )));
        }
        Ok(())
    }

    /// Ground-truth hidden state. Test oracle only: never reachable through
    /// the query APIs.
    pub fn hidden(&self, tokens: &[TokenId]) -> Result<HiddenVector> {
        self.validate_prompt(tokens)?;
        Ok(HiddenVector(self.hidden_unchecked(tokens)))
    }

    fn hidden_unchecked(&self, tokens: &[TokenId]) -> DVector<f64> {
        self.generator.normalize(self.generator.pre_norm(self.spec.seed, tokens))
    }

    /// Logits for a prompt with every configured defense applied.
    pub fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        self.validate_prompt(tokens)?;
        Ok(self.forward(tokens, true))
    }

    /// Logits of a spoofed victim with the appended noise activations set to
    /// zero. Test oracle only.
    pub fn logits_spoof_silenced(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        self.validate_prompt(tokens)?;
        Ok(self.forward(tokens, false))
    }

    fn forward(&self, tokens: &[TokenId], spoof_noise: bool) -> Vec<f64> {
        let g = self.hidden_unchecked(tokens);
        let mut z: Vec<f64> = match &self.reduced {
            None => (&self.effective * &g).iter().copied().collect(),
            Some(reduced) => reduced.apply(g.as_slice()),
        };
        if let (Some(spoof), true) = (&self.spoof, spoof_noise) {
            let mut rng = rng_for(self.spec.seed, STREAM_SPOOF_NOISE, hash_tokens(tokens));
            let noise = gaussian_vector(&mut rng, spoof.columns.ncols(), spoof.noise_std);
            for (zi, extra) in z.iter_mut().zip((&spoof.columns * noise).iter()) {
                *zi += extra;
            }
        }
        if self.spec.precision != Precision::Fp64 {
            let p = self.spec.precision;
            z.iter_mut().for_each(|v| *v = p.round(*v));
        }
        let sigma = self.spec.defenses.logit_noise_sigma;
        if sigma > 0.0 {
            let key = match self.spec.defenses.noise_mode {
                NoiseMode::PromptKeyed => hash_tokens(tokens),
                NoiseMode::PerQuery => {
                    hash_tokens(tokens) ^ splitmix64(self.evaluations.fetch_add(1, Ordering::Relaxed) + 1)
                }
            };
            let mut rng = rng_for(self.spec.seed, STREAM_NOISE, key);
            z.iter_mut().for_each(|v| *v += sigma * rng.sample::<f64, _>(StandardNormal));
        }
        z
    }

    /// Mean over hidden dimensions of the per-dimension standard deviation of
    /// `g(p)` across a fixed sample of prompts.
    pub fn mean_activation_std(&self, samples: usize) -> f64 {
        let h = self.spec.hidden_dim;
        let l = self.spec.vocab_size as u32;
        let mut rng = rng_for(self.spec.seed, STREAM_ACTIVATION_SAMPLE, 0);
        let states: Vec<DVector<f64>> = (0..samples.max(2))
            .map(|_| {
                let prompt: Vec<TokenId> = (0..4).map(|_| rng.random_range(0..l)).collect();
                self.hidden_unchecked(&prompt)
            })
            .collect();
        let n = states.len() as f64;
        (0..h)
            .map(|j| {
                let mean = states.iter().map(|s| s[j]).sum::<f64>() / n;
                (states.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .sum::<f64>()
            / h as f64
    }

    fn install_spoof(mut self, config: SpoofConfig) -> Result<Self> {
        if self.spoof.is_some() {
            return Err(Error::InvalidSpec("victim is already spoofed".into()));
        }
        spec::validate_spoof(&self.spec, &config)?;
        let (l, h) = (self.spec.vocab_size, self.spec.hidden_dim);
        let genuine_rank = h - self.spec.planted_rank_deficit;
        let extra = config.target_dim - h;

        let (basis, sigma) = linalg::leading_left_singular(&self.effective, genuine_rank)?;
        let smallest = *sigma.last().expect("rank is positive");

        let mut rng = rng_for(self.spec.seed, STREAM_SPOOF, 0);
        let raw = gaussian_matrix(&mut rng, l, extra, 1.0);
        // Two projection passes keep the orthogonality at round-off level.
        let mut projected = &raw - &basis * (basis.transpose() * &raw);
        projected -= &basis * (basis.transpose() * &projected);
        let mut columns = linalg::orthonormal_columns(&projected);
        columns -= &basis * (basis.transpose() * &columns);
        columns *= config.singular_fraction * smallest;

        let noise_std = config.noise_scale * self.mean_activation_std(256);
        self.spec.defenses.spoof = Some(config.clone());
        self.spoof = Some(SpoofLayer { config, columns, noise_std });
        Ok(self)
    }

    /// Fraction of `samples` seeded prompts whose argmax token is the same
    /// with and without the spoofing noise.
    pub fn spoof_argmax_agreement(&self, samples: usize) -> Result<f64> {
        if self.spoof.is_none() {
            return Ok(1.0);
        }
        let l = self.spec.vocab_size as u32;
        let mut rng = rng_for(self.spec.seed, STREAM_ACTIVATION_SAMPLE, 1);
        let mut agree = 0usize;
        for _ in 0..samples {
            let prompt: Vec<TokenId> = (0..4).map(|_| rng.random_range(0..l)).collect();
            let spoofed = self.forward(&prompt, true);
            let clean = self.forward(&prompt, false);
            if argmax(&spoofed) == argmax(&clean) {
                agree += 1;
            }
        }
        Ok(agree as f64 / samples.max(1) as f64)
    }

    pub fn spoof_config(&self) -> Option<&SpoofConfig> {
        self.spoof.as_ref().map(|s| &s.config)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(z)` in f64.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = linalg::logsumexp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank(m: &DMatrix<f64>) -> usize {
        let sv = linalg::singular_values(m);
        sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count()
    }

    fn query_matrix(v: &Victim, n: usize) -> DMatrix<f64> {
        let l = v.vocab_size();
        let rows: Vec<Vec<f64>> = (0..n as u32).map(|i| v.logits(&[i % l as u32, i / 7, 3]).unwrap()).collect();
        DMatrix::from_fn(n, l, |i, j| rows[i][j])
    }

    #[test]
    fn full_and_deficient_rank() {
        let v = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        assert_eq!(rank(v.weights()), 8);
        let v = build_victim(&VictimSpec::new(100, 8, 1).with_rank_deficit(3)).unwrap();
        assert_eq!(rank(v.weights()), 5);
    }

    #[test]
    fn construction_is_deterministic() {
        let spec = VictimSpec::new(100, 8, 1);
        let a = build_victim(&spec).unwrap();
        let b = build_victim(&spec).unwrap();
        assert!(a.weights().iter().zip(b.weights().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.logits(&[1, 2]).unwrap(), b.logits(&[1, 2]).unwrap());
    }

    #[test]
    fn weight_scale_is_inverse_sqrt_h() {
        let v = build_victim(&VictimSpec::new(2000, 64, 4).with_rank_deficit(4)).unwrap();
        let var = v.weights().iter().map(|x| x * x).sum::<f64>() / v.weights().len() as f64;
        assert!((var * 64.0 - 1.0).abs() < 0.1, "entry variance {var}");
    }

    #[test]
    fn logits_match_projection_of_hidden() {
        for kind in [NormKind::None, NormKind::RmsNorm, NormKind::LayerNorm] {
            let v = build_victim(&VictimSpec::new(50, 6, 9).with_norm(kind, true)).unwrap();
            let p = [4, 8, 15];
            let z = v.logits(&p).unwrap();
            let g = v.hidden(&p).unwrap();
            let direct = v.weights() * g.values();
            let diff = z.iter().zip(direct.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{kind:?}: {diff}");
        }
    }

    #[test]
    fn query_matrix_rank_equals_h() {
        let v = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        assert_eq!(rank(&query_matrix(&v, 200)), 8);
    }

    #[test]
    fn rms_norm_states_lie_on_sphere() {
        let spec = VictimSpec::new(60, 10, 3).with_norm_scale(NormScale::Identity);
        let v = build_victim(&spec).unwrap();
        let norms: Vec<f64> = (0..20u32).map(|i| v.hidden(&[i, 2 * i]).unwrap().values().norm()).collect();
        assert!(norms.iter().all(|n| (n - norms[0]).abs() < 1e-9));
        assert!((norms[0] - 10f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_states_are_centered() {
        let spec = VictimSpec::new(60, 10, 3).with_norm(NormKind::LayerNorm, false);
        let v = build_victim(&spec).unwrap();
        for i in 0..10u32 {
            let g = v.hidden(&[i]).unwrap();
            let unscaled = g.values().component_div(v.norm_scale());
            assert!(unscaled.sum().abs() < 1e-9);
        }
        // ...and with the bias term removed when it is enabled.
        let v = build_victim(&spec.clone().with_norm(NormKind::LayerNorm, true)).unwrap();
        let g = v.hidden(&[5]).unwrap();
        let unscaled = (g.values() - v.norm_bias().unwrap()).component_div(v.norm_scale());
        assert!(unscaled.sum().abs() < 1e-9);
    }

    #[test]
    fn softmax_sums_to_one() {
        let v = build_victim(&VictimSpec::new(300, 8, 2)).unwrap();
        let s: f64 = softmax(&v.logits(&[1]).unwrap()).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prompt_keyed_noise_is_repeatable() {
        let v = build_victim(&VictimSpec::new(100, 8, 1).with_noise(0.1)).unwrap();
        let clean = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        let a = v.logits(&[3, 4]).unwrap();
        assert_eq!(a, v.logits(&[3, 4]).unwrap());
        assert_ne!(a, clean.logits(&[3, 4]).unwrap());
    }

    #[test]
    fn per_query_noise_changes_between_calls() {
        let mut spec = VictimSpec::new(100, 8, 1).with_noise(0.1);
        spec.defenses.noise_mode = NoiseMode::PerQuery;
        let v = build_victim(&spec).unwrap();
        assert_ne!(v.logits(&[3, 4]).unwrap(), v.logits(&[3, 4]).unwrap());
    }

    #[test]
    fn invalid_tokens_rejected() {
        let v = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        assert!(v.logits(&[100]).is_err());
        assert!(v.logits(&[]).is_err());
        assert!(v.hidden(&[]).is_err());
    }

    #[test]
    fn quantization_keeps_rank() {
        for bits in [4, 8] {
            let v = build_victim(&VictimSpec::new(100, 8, 5).with_quantization(bits)).unwrap();
            assert_eq!(rank(v.effective_weights()), 8);
            let levels: std::collections::BTreeSet<i64> = v
                .effective_weights()
                .column(0)
                .iter()
                .map(|x| (x * 1e9).round() as i64)
                .collect();
            assert!(levels.len() <= (1usize << bits) - 1);
        }
    }

    #[test]
    fn fp16_logits_are_half_representable() {
        let v = build_victim(&VictimSpec::new(100, 8, 1).with_precision(Precision::Fp16)).unwrap();
        let exact = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        let z = v.logits(&[7]).unwrap();
        let e = exact.logits(&[7]).unwrap();
        for (a, b) in z.iter().zip(&e) {
            assert_eq!(*a, Precision::Fp16.round(*a));
            assert!((a - b).abs() < 1e-2);
        }
    }

    #[test]
    fn spoof_columns_orthogonal_to_w() {
        let v = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        let v = apply_spoofing(v, 9).unwrap();
        let extra = v.spoof_columns().unwrap();
        assert_eq!(extra.ncols(), 1);
        assert!((v.weights().transpose() * extra).norm() < 1e-10);
    }

    #[test]
    fn spoof_silenced_equals_original() {
        let base = build_victim(&VictimSpec::new(120, 8, 2)).unwrap();
        let spoofed = apply_spoofing(base.clone(), 12).unwrap();
        for i in 0..5u32 {
            let p = [i, 1];
            let a = spoofed.logits_spoof_silenced(&p).unwrap();
            let b = base.logits(&p).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
            assert_ne!(spoofed.logits(&p).unwrap(), b);
        }
    }

    #[test]
    fn spoof_inflates_rank_and_preserves_argmax() {
        let base = build_victim(&VictimSpec::new(200, 8, 2)).unwrap();
        let spoofed = apply_spoofing(base, 12).unwrap();
        assert_eq!(rank(&query_matrix(&spoofed, 60)), 12);
        assert!(spoofed.spoof_argmax_agreement(1000).unwrap() >= 0.99);
    }

    #[test]
    fn spoof_rejects_small_target() {
        let v = build_victim(&VictimSpec::new(100, 8, 1)).unwrap();
        assert!(apply_spoofing(v, 8).is_err());
    }
}
