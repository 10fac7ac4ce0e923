//! Clients for the translator, scorer and generator services, plus an
//! in-process reference server and a protocol conformance kit.
//!
//! All three services take a JSON POST and answer 200 with a JSON body.
//! A 4xx reply is a protocol error and is not retried; 5xx replies,
//! timeouts and transport failures are retried with exponential backoff.

mod client;
pub mod conformance;
pub mod mock;
pub mod protocol;

pub use client::{Backoff, BackendClient, BackendConfig, CallStats, Role, WireError, WireErrorKind};
pub use protocol::{WireCandidate, NO_CONTEXT_ANSWER};
