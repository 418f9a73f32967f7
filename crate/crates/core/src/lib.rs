//! Correlation-network synchronization analysis of stock price panels.
//!
//! The pipeline turns a price panel into log-returns, slides a window over
//! them to build complete correlation-distance networks, measures each
//! network's strength entropy, weighted clustering and average shortest path,
//! simulates distance-coupled Kuramoto oscillators on it, and regresses the
//! resulting synchronization level on the topology.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod corrnet;
pub mod error;
pub mod ingest;
pub mod kuramoto;
pub mod metrics;
pub mod pipeline;
pub mod regress;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
