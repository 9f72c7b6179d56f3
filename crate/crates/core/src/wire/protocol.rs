use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::api::{CompletionResponse, Usage};
use crate::error::{Error, RejectCode};
use crate::victim::TokenId;

pub const SESSION_HEADER: &str = "x-session";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

/// Body of every `/v1/completions` reply, success or failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<IndexMap<TokenId, f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl WireResponse {
    pub fn success(r: CompletionResponse) -> Self {
        WireResponse {
            tokens: r.tokens,
            top_logprobs: r.top_logprobs,
            logits: r.logits,
            usage: Some(r.usage),
            error: None,
        }
    }

    pub fn failure(code: &str, message: String, usage: Option<Usage>) -> Self {
        WireResponse { usage, error: Some(WireError { code: code.to_owned(), message }), ..Default::default() }
    }

    /// Convert back into an API result.
    pub fn into_result(self) -> Result<CompletionResponse, Error> {
        if let Some(err) = self.error {
            let code: RejectCode = serde_json::from_value(serde_json::Value::String(err.code.clone()))
                .map_err(|_| Error::Protocol(format!("server error `{}`: {}", err.code, err.message)))?;
            return Err(Error::Rejected { code, message: err.message });
        }
        let usage = self.usage.ok_or_else(|| Error::Protocol("response lacks usage".into()))?;
        Ok(CompletionResponse { tokens: self.tokens, top_logprobs: self.top_logprobs, logits: self.logits, usage })
    }
}
