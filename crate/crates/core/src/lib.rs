//! Discrete-event simulation of TSN egress ports that combine time-aware
//! gating, credit-based shaping and frame preemption.

pub mod cbs;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fp;
pub mod gcl;
pub mod metrics;
pub mod model;
pub mod network;
pub mod port;
pub mod scenario;
