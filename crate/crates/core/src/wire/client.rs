use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use ureq::Agent;

use super::protocol::{WireResponse, SESSION_HEADER};
use crate::api::{ApiDescriptor, CompletionApi, CompletionRequest, CompletionResponse, CostLedger};
use crate::error::{Error, Result};

const DEFAULT_RETRIES: usize = 3;

fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into()
}

fn base(endpoint: &str) -> &str {
    endpoint.trim_end_matches('/')
}

fn transport(e: ureq::Error) -> Error {
    Error::Transport(e.to_string())
}

/// One POST, no retries. `Ok(None)` never happens; transport failures are
/// `Err(Transport)`.
fn post_once(agent: &Agent, endpoint: &str, session: Option<&str>, body: &str) -> Result<WireResponse> {
    let mut req = agent
        .post(format!("{}/v1/completions", base(endpoint)))
        .header("content-type", "application/json");
    if let Some(s) = session {
        req = req.header(SESSION_HEADER, s);
    }
    let mut response = req.send(body).map_err(transport)?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(transport)?;
    serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("HTTP {status}: {e}: {text}")))
}

fn post_with_retries(
    agent: &Agent,
    endpoint: &str,
    session: Option<&str>,
    request: &CompletionRequest,
    retries: usize,
) -> Result<WireResponse> {
    let body = serde_json::to_string(request)?;
    let mut attempt = 0;
    loop {
        match post_once(agent, endpoint, session, &body) {
            Err(Error::Transport(_)) if attempt < retries => {
                attempt += 1;
                std::thread::sleep(Duration::from_millis(50 << attempt));
            }
            other => return other,
        }
    }
}

/// Send one request to `endpoint` (e.g. `http://127.0.0.1:4000`).
pub fn remote_query(endpoint: &str, request: &CompletionRequest) -> Result<CompletionResponse> {
    post_with_retries(&agent(), endpoint, None, request, DEFAULT_RETRIES)?.into_result()
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(0);

/// [`CompletionApi`] over HTTP. Keeps a client-side ledger that mirrors the
/// server's from the `usage` field of every reply.
pub struct RemoteSession {
    endpoint: String,
    session: String,
    agent: Agent,
    descriptor: ApiDescriptor,
    ledger: Mutex<CostLedger>,
    retries: usize,
}

impl RemoteSession {
    /// Connect and fetch the API descriptor from `/healthz`.
    pub fn connect(endpoint: &str) -> Result<Self> {
        let agent = agent();
        let mut response = agent.get(format!("{}/healthz", base(endpoint))).call().map_err(transport)?;
        let text = response.body_mut().read_to_string().map_err(transport)?;
        let descriptor: ApiDescriptor =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad /healthz reply: {e}")))?;
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let session = format!("{}-{}-{nanos}", std::process::id(), NEXT_SESSION.fetch_add(1, Ordering::Relaxed));
        Ok(RemoteSession {
            endpoint: endpoint.to_owned(),
            session,
            agent,
            descriptor,
            ledger: Mutex::new(CostLedger::default()),
            retries: DEFAULT_RETRIES,
        })
    }

    /// Use a fixed session name instead of a generated one.
    pub fn with_session(mut self, name: impl Into<String>) -> Self {
        self.session = name.into();
        self
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn session_name(&self) -> &str {
        &self.session
    }
}

impl CompletionApi for RemoteSession {
    fn descriptor(&self) -> ApiDescriptor {
        self.descriptor.clone()
    }

    fn ledger(&self) -> CostLedger {
        *self.ledger.lock().expect("ledger lock")
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let reply = post_with_retries(&self.agent, &self.endpoint, Some(&self.session), request, self.retries)?;
        let usage = reply.usage;
        let result = reply.into_result();
        if let Some(usage) = usage {
            let mut ledger = self.ledger.lock().expect("ledger lock");
            if result.is_ok() {
                ledger.charge(usage);
            } else {
                ledger.charge_rejected(usage);
            }
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::api::{query_all_logits, query_topk, ApiConfig, ApiMode, LogitBias, Session};
    use crate::error::RejectCode;
    use crate::victim::{build_victim, VictimSpec};
    use crate::wire::serve;

    fn victim() -> Arc<crate::victim::Victim> {
        Arc::new(build_victim(&VictimSpec::new(150, 8, 4)).unwrap())
    }

    #[test]
    fn loopback_topk_matches_in_process() {
        let v = victim();
        let config = ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 });
        let server = serve(v.clone(), config.clone(), "127.0.0.1:0").unwrap();
        let remote = RemoteSession::connect(&server.url()).unwrap();
        let local = Session::new(v, config).unwrap();
        assert_eq!(remote.descriptor(), local.descriptor());
        for i in 0..5u32 {
            let bias = LogitBias::uniform([i, i + 10, i + 20, i + 30], 100.0);
            let a = query_topk(&remote, &[i, 1], &bias).unwrap();
            let b = query_topk(&local, &[i, 1], &bias).unwrap();
            assert_eq!(a, b);
        }
        let err = query_topk(&remote, &[1], &LogitBias::new().with(3, 250.0)).unwrap_err();
        assert!(err.reject_code().is_some());
        assert_eq!(remote.ledger(), server.session_ledger(remote.session_name()).unwrap());
        assert_eq!(remote.ledger().queries, 6);
        assert_eq!(remote.ledger().rejected, 1);
    }

    #[test]
    fn entry_cap_gives_bias_limit() {
        let server = serve(victim(), ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 }), "127.0.0.1:0").unwrap();
        let request = CompletionRequest::new(&[1]).bias(LogitBias::uniform(0..150, 0.5)).logprobs(5);
        let restricted = ApiConfig::new(ApiMode::ArgmaxOnlyWithBias).with_restrictions(crate::api::ApiRestrictions {
            max_entries: 10,
            ..Default::default()
        });
        let server2 = serve(victim(), restricted, "127.0.0.1:0").unwrap();
        assert!(remote_query(&server.url(), &request).is_ok());
        let err = remote_query(&server2.url(), &CompletionRequest::new(&[1]).bias(LogitBias::uniform(0..11, 0.5)))
            .unwrap_err();
        assert_eq!(err.reject_code(), Some(RejectCode::BiasLimit));
    }

    #[test]
    fn full_logits_are_bit_exact() {
        let v = victim();
        let server = serve(v.clone(), ApiConfig::new(ApiMode::AllLogits), "127.0.0.1:0").unwrap();
        let remote = RemoteSession::connect(&server.url()).unwrap();
        let z = query_all_logits(&remote, &[3, 9]).unwrap();
        let truth = v.logits(&[3, 9]).unwrap();
        assert!(z.iter().zip(&truth).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn server_down_is_transport_error_without_charge() {
        let server = serve(victim(), ApiConfig::new(ApiMode::AllLogits), "127.0.0.1:0").unwrap();
        let remote = RemoteSession::connect(&server.url()).unwrap().with_retries(1);
        server.shutdown().unwrap();
        let err = query_all_logits(&remote, &[1]).unwrap_err();
        assert!(matches!(err, Error::Transport(_)), "{err:?}");
        assert_eq!(remote.ledger(), CostLedger::default());
    }

    #[test]
    fn malformed_body_is_invalid_request() {
        let server = serve(victim(), ApiConfig::new(ApiMode::AllLogits), "127.0.0.1:0").unwrap();
        let reply = post_once(&agent(), &server.url(), None, "{\"prompt\": \"oops\"}").unwrap();
        assert_eq!(reply.error.unwrap().code, "invalid_request");
    }
}
