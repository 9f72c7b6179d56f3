//! Model-stealing toolkit for production-style language model APIs.
//!
//! Build a seeded [`victim::Victim`], expose it through a restricted
//! [`api::CompletionApi`] (in process or over HTTP via [`wire`]), recover full
//! logit vectors with the attacks in [`recover`], and extract the hidden
//! dimension, the final projection and the normalization type with
//! [`extract`]. [`harness`] ties these together into reproducible
//! experiments.

pub mod api;
pub mod error;
pub mod extract;
pub mod harness;
pub mod linalg;
pub mod matfile;
pub mod recover;
pub mod victim;
pub mod wire;

pub use error::{Error, RejectCode, Result};
