//! Constrained query surfaces over a victim, with cost metering.
//!
//! Every attack talks to a [`CompletionApi`]: an in-process [`Session`], a
//! [`crate::wire::RemoteSession`] over HTTP, or a recorded [`Replay`]. The
//! typed helpers ([`query_topk`], [`query_argmax`], ...) build the request
//! for the capability they need and unpack the response.

mod ledger;
mod session;
mod transcript;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use ledger::{CostLedger, Usage};
pub use session::{FixedLogits, LogitSource, Session};
pub(crate) use session::rejected_usage;
pub use transcript::{Recorder, Replay, TranscriptEntry};

use crate::error::{Error, Result};
use crate::victim::{Precision, TokenId};

/// The query surface offered to the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApiMode {
    /// Raw logit vectors, no bias.
    AllLogits,
    /// Top-K logprobs of the next token under a real-valued logit bias.
    TopKLogprobsWithBias { k: usize },
    /// Top-1 logprob; bias values restricted to `{-1, 0}`.
    Top1BinaryBias,
    /// Only the sampled (argmax) token under a logit bias.
    ArgmaxOnlyWithBias,
    /// Greedy generation of several tokens with top-K logprobs per position.
    GenerationLogprobs { k: usize },
}

impl ApiMode {
    /// Number of logprobs a response can carry.
    pub fn max_logprobs(self) -> usize {
        match self {
            ApiMode::AllLogits | ApiMode::ArgmaxOnlyWithBias => 0,
            ApiMode::Top1BinaryBias => 1,
            ApiMode::TopKLogprobsWithBias { k } | ApiMode::GenerationLogprobs { k } => k,
        }
    }

    pub fn accepts_bias(self) -> bool {
        !matches!(self, ApiMode::AllLogits)
    }

    pub fn name(self) -> &'static str {
        match self {
            ApiMode::AllLogits => "all-logits",
            ApiMode::TopKLogprobsWithBias { .. } => "topk",
            ApiMode::Top1BinaryBias => "top1-binary",
            ApiMode::ArgmaxOnlyWithBias => "argmax",
            ApiMode::GenerationLogprobs { .. } => "generation",
        }
    }

    /// Parse a CLI-style mode name; `k` fills the top-K modes.
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        Ok(match name {
            "all-logits" | "all_logits" => ApiMode::AllLogits,
            "topk" | "top_k" => ApiMode::TopKLogprobsWithBias { k },
            "top1-binary" | "top1_binary" => ApiMode::Top1BinaryBias,
            "argmax" => ApiMode::ArgmaxOnlyWithBias,
            "generation" => ApiMode::GenerationLogprobs { k },
            other => return Err(Error::Config(format!("unknown api mode `{other}`"))),
        })
    }
}

/// Limits and hardening toggles applied on top of the mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiRestrictions {
    /// Largest allowed `|bias|`.
    pub bias_bound: f64,
    /// Largest number of biased tokens per request.
    pub max_entries: usize,
    /// Reject requests that carry both a logit bias and a logprobs request.
    pub bias_xor_logprobs: bool,
    /// Only token prohibitions: negative biases ban a token, positive biases
    /// are rejected.
    pub block_list_only: bool,
    /// Charge a query for rejected over-limit requests.
    pub charge_rejected: bool,
    /// Extra billed tokens per query.
    pub overhead_per_query: u64,
    /// Precision of emitted logprobs and logits.
    pub emission_precision: Precision,
}

impl Default for ApiRestrictions {
    fn default() -> Self {
        ApiRestrictions {
            bias_bound: 100.0,
            max_entries: 300,
            bias_xor_logprobs: false,
            block_list_only: false,
            charge_rejected: true,
            overhead_per_query: 0,
            emission_precision: Precision::Fp64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    pub mode: ApiMode,
    #[serde(default)]
    pub restrictions: ApiRestrictions,
}

impl ApiConfig {
    pub fn new(mode: ApiMode) -> Self {
        ApiConfig { mode, restrictions: ApiRestrictions::default() }
    }

    pub fn with_restrictions(mut self, restrictions: ApiRestrictions) -> Self {
        self.restrictions = restrictions;
        self
    }

    pub fn with_emission(mut self, precision: Precision) -> Self {
        self.restrictions.emission_precision = precision;
        self
    }

    pub fn with_overhead(mut self, overhead: u64) -> Self {
        self.restrictions.overhead_per_query = overhead;
        self
    }
}

/// What a client can learn about an API without querying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiDescriptor {
    pub mode: ApiMode,
    pub vocab_size: usize,
    pub restrictions: ApiRestrictions,
}

/// Sparse token → bias map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitBias {
    pub entries: BTreeMap<TokenId, f64>,
}

impl LogitBias {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, token: TokenId, bias: f64) -> Self {
        self.entries.insert(token, bias);
        self
    }

    pub fn insert(&mut self, token: TokenId, bias: f64) {
        self.entries.insert(token, bias);
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.entries.get(&token).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same bias on every listed token.
    pub fn uniform(tokens: impl IntoIterator<Item = TokenId>, bias: f64) -> Self {
        LogitBias { entries: tokens.into_iter().map(|t| (t, bias)).collect() }
    }
}

impl FromIterator<(TokenId, f64)> for LogitBias {
    fn from_iter<I: IntoIterator<Item = (TokenId, f64)>>(iter: I) -> Self {
        LogitBias { entries: iter.into_iter().collect() }
    }
}

/// A completions-style request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "LogitBias::is_empty")]
    pub logit_bias: LogitBias,
    /// Number of top logprobs wanted per position; absent means none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<usize>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// Request the raw logit vector (all-logits APIs only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub full_logits: bool,
}

fn default_max_tokens() -> usize {
    1
}

impl CompletionRequest {
    pub fn new(prompt: &[TokenId]) -> Self {
        CompletionRequest {
            prompt: prompt.to_vec(),
            logit_bias: LogitBias::new(),
            logprobs: None,
            max_tokens: 1,
            full_logits: false,
        }
    }

    pub fn bias(mut self, bias: LogitBias) -> Self {
        self.logit_bias = bias;
        self
    }

    pub fn logprobs(mut self, k: usize) -> Self {
        self.logprobs = Some(k);
        self
    }

    pub fn max_tokens(mut self, m: usize) -> Self {
        self.max_tokens = m;
        self
    }

    pub fn full_logits(mut self) -> Self {
        self.full_logits = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Generated token ids.
    pub tokens: Vec<TokenId>,
    /// Per generated position: the top logprobs, highest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<IndexMap<TokenId, f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    pub usage: Usage,
}

/// Anything an attack can send completion requests to.
pub trait CompletionApi: Send + Sync {
    fn descriptor(&self) -> ApiDescriptor;

    /// Totals charged so far in this session.
    fn ledger(&self) -> CostLedger;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

impl<A: CompletionApi + ?Sized> CompletionApi for &A {
    fn descriptor(&self) -> ApiDescriptor {
        (**self).descriptor()
    }
    fn ledger(&self) -> CostLedger {
        (**self).ledger()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

impl<A: CompletionApi + ?Sized> CompletionApi for std::sync::Arc<A> {
    fn descriptor(&self) -> ApiDescriptor {
        (**self).descriptor()
    }
    fn ledger(&self) -> CostLedger {
        (**self).ledger()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

impl<A: CompletionApi + ?Sized> CompletionApi for Box<A> {
    fn descriptor(&self) -> ApiDescriptor {
        (**self).descriptor()
    }
    fn ledger(&self) -> CostLedger {
        (**self).ledger()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

/// Top-K `(token, logprob)` pairs, sorted by descending logprob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResponse {
    pub items: Vec<(TokenId, f64)>,
}

impl TopKResponse {
    pub fn logprob(&self, token: TokenId) -> Option<f64> {
        self.items.iter().find(|(t, _)| *t == token).map(|(_, v)| *v)
    }

    pub fn top(&self) -> Option<(TokenId, f64)> {
        self.items.first().copied()
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.items.iter().any(|(t, _)| *t == token)
    }
}

fn position(response: &CompletionResponse, i: usize) -> Result<TopKResponse> {
    let maps = response
        .top_logprobs
        .as_ref()
        .ok_or_else(|| Error::Protocol("response carries no logprobs".into()))?;
    let map = maps
        .get(i)
        .ok_or_else(|| Error::Protocol(format!("response has no logprobs for position {i}")))?;
    Ok(TopKResponse { items: map.iter().map(|(&t, &v)| (t, v)).collect() })
}

/// Full logit vector (all-logits APIs).
pub fn query_all_logits<A: CompletionApi + ?Sized>(api: &A, prompt: &[TokenId]) -> Result<Vec<f64>> {
    let response = api.complete(&CompletionRequest::new(prompt).full_logits())?;
    response.logits.ok_or_else(|| Error::Protocol("response carries no logits".into()))
}

/// Top-K logprobs of the next token under `bias`, with K the mode's maximum.
pub fn query_topk<A: CompletionApi + ?Sized>(api: &A, prompt: &[TokenId], bias: &LogitBias) -> Result<TopKResponse> {
    let k = api.descriptor().mode.max_logprobs().max(1);
    let response = api.complete(&CompletionRequest::new(prompt).bias(bias.clone()).logprobs(k))?;
    position(&response, 0)
}

/// Index of the largest biased logit.
pub fn query_argmax<A: CompletionApi + ?Sized>(api: &A, prompt: &[TokenId], bias: &LogitBias) -> Result<TokenId> {
    let response = api.complete(&CompletionRequest::new(prompt).bias(bias.clone()))?;
    response
        .tokens
        .first()
        .copied()
        .ok_or_else(|| Error::Protocol("response carries no token".into()))
}

/// Greedy generation of `m` tokens with top-K logprobs at each position.
pub fn query_generation_logprobs<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    bias: &LogitBias,
    m: usize,
) -> Result<(Vec<TokenId>, Vec<TopKResponse>)> {
    let k = api.descriptor().mode.max_logprobs().max(1);
    let response = api.complete(&CompletionRequest::new(prompt).bias(bias.clone()).logprobs(k).max_tokens(m))?;
    let positions = (0..m).map(|i| position(&response, i)).collect::<Result<Vec<_>>>()?;
    Ok((response.tokens, positions))
}
