//! Event-driven simulator and orchestration policies for energy-aware mobile
//! edge computing with multi-state EC sleep and service lifecycles.

// `!(x > 0.0)` checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod engine;
pub mod events;
pub mod forecast;
pub mod latency;
pub mod lifecycle;
pub mod mobility;
pub mod orchestrator;
pub mod power;
pub mod queueing;
pub mod scenario;
