use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Machine-readable reason an API request was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    /// The configured API mode does not offer the requested capability.
    Capability,
    /// Too many logit-bias entries, or a bias outside `[-B, B]`.
    BiasLimit,
    /// A bias value outside the set the mode allows (e.g. `{-1, 0}`).
    BiasValue,
    /// Logit bias and logprobs were requested together on a hardened API.
    BiasXorLogprobs,
    /// The API only accepts token prohibitions, not positive biases.
    BlocklistOnly,
    /// Malformed request: empty prompt, out-of-vocabulary token, bad counts.
    InvalidRequest,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::Capability => "capability",
            RejectCode::BiasLimit => "bias_limit",
            RejectCode::BiasValue => "bias_value",
            RejectCode::BiasXorLogprobs => "bias_xor_logprobs",
            RejectCode::BlocklistOnly => "blocklist_only",
            RejectCode::InvalidRequest => "invalid_request",
        }
    }
}

impl std::fmt::Display for RejectCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid victim spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("request rejected ({code}): {message}")]
    Rejected { code: RejectCode, message: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("malformed response: {0}")]
    Protocol(String),

    #[error("need more queries: {0}")]
    NeedMoreQueries(String),

    #[error("singular or ill-conditioned system (condition estimate {condition:e}): {detail}")]
    IllConditioned { condition: f64, detail: String },

    #[error("unconstrained coordinates {tokens:?}: observation set does not pin them down")]
    Underdetermined { tokens: Vec<usize> },

    #[error("constraint graph is infeasible: negative cycle through node {node}")]
    NegativeCycle { node: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn rejected(code: RejectCode, message: impl Into<String>) -> Self {
        Error::Rejected { code, message: message.into() }
    }

    /// The API rejection code, if this error is an API rejection.
    pub fn reject_code(&self) -> Option<RejectCode> {
        match self {
            Error::Rejected { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
