use std::sync::{Arc, Mutex};

use indexmap::IndexMap;

use super::{ApiConfig, ApiDescriptor, ApiMode, CompletionApi, CompletionRequest, CompletionResponse, CostLedger, Usage};
use crate::error::{Error, RejectCode, Result};
use crate::linalg::logsumexp;
use crate::victim::{argmax, TokenId, Victim};

/// Anything that maps a prompt to a logit vector.
pub trait LogitSource: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn logits(&self, prompt: &[TokenId]) -> Result<Vec<f64>>;
}

impl LogitSource for Victim {
    fn vocab_size(&self) -> usize {
        Victim::vocab_size(self)
    }

    fn logits(&self, prompt: &[TokenId]) -> Result<Vec<f64>> {
        Victim::logits(self, prompt)
    }
}

/// The same logit vector for every prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLogits(pub Vec<f64>);

impl LogitSource for FixedLogits {
    fn vocab_size(&self) -> usize {
        self.0.len()
    }

    fn logits(&self, _prompt: &[TokenId]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// In-process API session over a shared logit source.
pub struct Session {
    victim: Arc<dyn LogitSource>,
    config: ApiConfig,
    ledger: Mutex<CostLedger>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("config", &self.config).field("ledger", &self.ledger).finish()
    }
}

impl Session {
    pub fn new<S: LogitSource + 'static>(victim: Arc<S>, config: ApiConfig) -> Result<Self> {
        let victim: Arc<dyn LogitSource> = victim;
        let l = victim.vocab_size();
        match config.mode {
            ApiMode::TopKLogprobsWithBias { k } | ApiMode::GenerationLogprobs { k } if k == 0 || k > l => {
                return Err(Error::Config(format!("K={k} must lie in 1..={l}")));
            }
            _ => {}
        }
        let r = &config.restrictions;
        if !(r.bias_bound > 0.0 && r.bias_bound.is_finite()) || r.max_entries == 0 {
            return Err(Error::Config("bias bound and entry cap must be positive".into()));
        }
        Ok(Session { victim, config, ledger: Mutex::new(CostLedger::default()) })
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    fn usage(&self, request: &CompletionRequest, generated: usize) -> Usage {
        Usage {
            queries: 1,
            tokens_in: request.prompt.len() as u64,
            tokens_out: generated as u64,
            overhead: self.config.restrictions.overhead_per_query,
        }
    }

    fn invalid(message: String) -> Error {
        Error::rejected(RejectCode::InvalidRequest, message)
    }

    /// Checks that do not depend on the bias values. Nothing is charged when
    /// these fail.
    fn check_shape(&self, request: &CompletionRequest) -> Result<()> {
        let l = self.victim.vocab_size();
        if request.prompt.is_empty() {
            return Err(Self::invalid("prompt must not be empty".into()));
        }
        if let Some(t) = request.prompt.iter().chain(request.logit_bias.entries.keys()).find(|&&t| t as usize >= l) {
            return Err(Self::invalid(format!("token id {t} outside vocabulary of {l}")));
        }
        if request.max_tokens == 0 {
            return Err(Self::invalid("max_tokens must be at least 1".into()));
        }
        let mode = self.config.mode;
        let capability = |msg: String| Err(Error::rejected(RejectCode::Capability, msg));
        if request.full_logits != matches!(mode, ApiMode::AllLogits) {
            return capability(if request.full_logits {
                "this API does not return full logits".into()
            } else {
                "this API only returns full logit vectors".into()
            });
        }
        if !mode.accepts_bias() && !request.logit_bias.is_empty() {
            return capability("this API does not accept a logit bias".into());
        }
        if let Some(k) = request.logprobs {
            if k > mode.max_logprobs() {
                return capability(format!("at most {} logprobs available, {k} requested", mode.max_logprobs()));
            }
        }
        if request.max_tokens > 1 && !matches!(mode, ApiMode::GenerationLogprobs { .. }) {
            return capability("multi-token generation is not offered".into());
        }
        Ok(())
    }

    /// Bias policy checks. Failures are charged when configured.
    fn check_bias(&self, request: &CompletionRequest) -> Result<()> {
        let r = &self.config.restrictions;
        let bias = &request.logit_bias;
        if r.bias_xor_logprobs && !bias.is_empty() && request.logprobs.is_some_and(|k| k > 0) {
            return Err(Error::rejected(
                RejectCode::BiasXorLogprobs,
                "logit bias and logprobs cannot be combined",
            ));
        }
        if bias.len() > r.max_entries {
            return Err(Error::rejected(
                RejectCode::BiasLimit,
                format!("{} bias entries exceed the limit of {}", bias.len(), r.max_entries),
            ));
        }
        if let Some((t, b)) = bias.entries.iter().find(|(_, b)| !(b.abs() <= r.bias_bound)) {
            return Err(Error::rejected(
                RejectCode::BiasLimit,
                format!("bias {b} on token {t} outside [-{0}, {0}]", r.bias_bound),
            ));
        }
        if r.block_list_only {
            if let Some((t, _)) = bias.entries.iter().find(|(_, &b)| b > 0.0) {
                return Err(Error::rejected(
                    RejectCode::BlocklistOnly,
                    format!("positive bias on token {t}; only prohibitions are accepted"),
                ));
            }
        }
        if self.config.mode == ApiMode::Top1BinaryBias {
            if let Some((t, b)) = bias.entries.iter().find(|(_, &b)| b != 0.0 && b != -1.0) {
                return Err(Error::rejected(RejectCode::BiasValue, format!("bias {b} on token {t} not in {{-1, 0}}")));
            }
        }
        Ok(())
    }

    fn biased_logits(&self, prompt: &[TokenId], request: &CompletionRequest) -> Result<Vec<f64>> {
        let mut z = self.victim.logits(prompt)?;
        let block = self.config.restrictions.block_list_only;
        for (&t, &b) in &request.logit_bias.entries {
            let zi = &mut z[t as usize];
            if block {
                if b < 0.0 {
                    *zi = f64::NEG_INFINITY;
                }
            } else {
                *zi += b;
            }
        }
        if z.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Self::invalid("every token is prohibited".into()));
        }
        Ok(z)
    }

    fn top_logprobs(&self, z: &[f64], k: usize) -> IndexMap<TokenId, f64> {
        let precision = self.config.restrictions.emission_precision;
        let lse = logsumexp(z);
        let mut order: Vec<usize> = (0..z.len()).collect();
        // Stable sort keeps lower indices first among equal logits.
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
        order.into_iter().take(k).map(|i| (i as TokenId, precision.round(z[i] - lse))).collect()
    }

    fn evaluate(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let m = request.max_tokens;
        let mut context = request.prompt.clone();
        let mut tokens = Vec::with_capacity(m);
        let mut positions = Vec::with_capacity(m);
        let mut logits = None;
        for _ in 0..m {
            let z = self.biased_logits(&context, request)?;
            let next = argmax(&z) as TokenId;
            if let Some(k) = request.logprobs.filter(|&k| k > 0) {
                positions.push(self.top_logprobs(&z, k));
            }
            if request.full_logits {
                let p = self.config.restrictions.emission_precision;
                logits = Some(z.iter().map(|&v| p.round(v)).collect());
            }
            tokens.push(next);
            context.push(next);
        }
        Ok(CompletionResponse {
            tokens,
            top_logprobs: request.logprobs.filter(|&k| k > 0).map(|_| positions),
            logits,
            usage: self.usage(request, m),
        })
    }
}

impl CompletionApi for Session {
    fn descriptor(&self) -> ApiDescriptor {
        ApiDescriptor {
            mode: self.config.mode,
            vocab_size: self.victim.vocab_size(),
            restrictions: self.config.restrictions.clone(),
        }
    }

    fn ledger(&self) -> CostLedger {
        *self.ledger.lock().expect("ledger lock")
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        self.check_shape(request)?;
        if let Err(e) = self.check_bias(request) {
            if self.config.restrictions.charge_rejected {
                self.ledger.lock().expect("ledger lock").charge_rejected(self.usage(request, 0));
            }
            return Err(e);
        }
        let response = self.evaluate(request)?;
        self.ledger.lock().expect("ledger lock").charge(response.usage);
        Ok(response)
    }
}

/// Usage a rejected request was charged, for transports that need to report
/// it alongside the error.
pub(crate) fn rejected_usage(session: &Session, request: &CompletionRequest, error: &Error) -> Option<Usage> {
    let charged = matches!(
        error.reject_code(),
        Some(RejectCode::BiasLimit | RejectCode::BiasValue | RejectCode::BiasXorLogprobs | RejectCode::BlocklistOnly)
    );
    (charged && session.config.restrictions.charge_rejected).then(|| session.usage(request, 0))
}
