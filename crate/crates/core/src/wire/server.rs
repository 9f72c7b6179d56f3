use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use super::protocol::{WireResponse, SESSION_HEADER};
use crate::api::{rejected_usage, ApiConfig, CompletionApi, CompletionRequest, CostLedger, Session};
use crate::error::{Error, RejectCode, Result};
use crate::victim::Victim;

struct AppState {
    victim: Arc<Victim>,
    config: ApiConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

impl AppState {
    fn session(&self, key: String) -> Result<Arc<Session>> {
        let mut sessions = self.sessions.lock().expect("session table");
        if let Some(s) = sessions.get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(Session::new(self.victim.clone(), self.config.clone())?);
        sessions.insert(key, s.clone());
        Ok(s)
    }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/completions", post(completions))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    match state.session("__healthz".into()) {
        Ok(s) => Json(s.descriptor()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn completions(
    State(state): State<Arc<AppState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let request: CompletionRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let body = WireResponse::failure(RejectCode::InvalidRequest.as_str(), format!("malformed request: {e}"), None);
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    let key = headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(|s| format!("session:{s}"))
        .unwrap_or_else(|| format!("peer:{peer}"));
    let session = match state.session(key) {
        Ok(s) => s,
        Err(e) => return (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    };
    let outcome = tokio::task::spawn_blocking(move || {
        let result = session.complete(&request);
        match result {
            Ok(r) => (StatusCode::OK, WireResponse::success(r)),
            Err(e) => {
                let usage = rejected_usage(&session, &request, &e);
                match e {
                    Error::Rejected { code, message } => {
                        (StatusCode::BAD_REQUEST, WireResponse::failure(code.as_str(), message, usage))
                    }
                    other => (StatusCode::INTERNAL_SERVER_ERROR, WireResponse::failure("internal", other.to_string(), None)),
                }
            }
        }
    })
    .await;
    match outcome {
        Ok((status, body)) => (status, Json(body)).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// A server running on a background thread. Dropping the handle shuts it
/// down.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL, e.g. `http://127.0.0.1:4000`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Server-side ledger of the session named by an `x-session` value.
    pub fn session_ledger(&self, session: &str) -> Option<CostLedger> {
        let sessions = self.state.sessions.lock().expect("session table");
        sessions.get(&format!("session:{session}")).map(|s| s.ledger())
    }

    /// Stop accepting connections, finish in-flight requests and join.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            thread.join().map_err(|_| Error::Transport("server thread panicked".into()))??;
        }
        Ok(())
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn bind(bind_address: &str) -> Result<std::net::TcpListener> {
    let listener = std::net::TcpListener::bind(bind_address)
        .map_err(|e| Error::Transport(format!("cannot bind {bind_address}: {e}")))?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Start serving `victim` behind `config` on `bind_address` (port 0 picks a
/// free port).
pub fn serve(victim: Arc<Victim>, config: ApiConfig, bind_address: &str) -> Result<ServerHandle> {
    Session::new(victim.clone(), config.clone())?;
    let listener = bind(bind_address)?;
    let addr = listener.local_addr()?;
    let state = Arc::new(AppState { victim, config, sessions: Mutex::new(HashMap::new()) });
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("lmextract-server".into()).spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServerHandle { addr, state, shutdown: Some(tx), thread: Some(thread) })
}

/// Serve in the foreground until Ctrl-C.
pub fn run_until_signal(victim: Arc<Victim>, config: ApiConfig, bind_address: &str) -> Result<()> {
    Session::new(victim.clone(), config.clone())?;
    let listener = bind(bind_address)?;
    let state = Arc::new(AppState { victim, config, sessions: Mutex::new(HashMap::new()) });
    let app = router(state);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
