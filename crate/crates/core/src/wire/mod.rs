//! Completions-style JSON protocol over HTTP/1.1.
//!
//! ```text
//! POST /v1/completions
//!   {"prompt": [17, 4], "logit_bias": {"12": 100.0}, "logprobs": 5, "max_tokens": 1}
//! 200 {"tokens": [12], "top_logprobs": [{"12": -0.01, ...}], "usage": {...}}
//! 400 {"error": {"code": "bias_limit", "message": "..."}, "usage": {...}}
//!
//! GET /healthz
//! 200 {"mode": {...}, "vocab_size": 1000, "restrictions": {...}}
//! ```
//!
//! Prompts are token ids, not text. `full_logits: true` asks an all-logits
//! server for the raw logit vector, returned as `logits`. Floats use
//! shortest round-trip formatting, so values survive the transport
//! bit for bit. Each request is billed to the session named by the
//! `x-session` header, or to the TCP connection when the header is absent.

mod client;
mod protocol;
mod server;

pub use client::{remote_query, RemoteSession};
pub use protocol::{WireError, WireResponse, SESSION_HEADER};
pub use server::{run_until_signal, serve, ServerHandle};
