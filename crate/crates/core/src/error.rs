use thiserror::Error;

use crate::model::TimeNs;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("payload of {0} bytes is outside [64, 1500]")]
    PayloadOutOfRange(u64),
    #[error("unsupported link rate {0} bit/s (expected 100 Mbit/s or 1 Gbit/s)")]
    UnsupportedRate(u64),
    #[error("idleSlope {idle_slope} bit/s must lie strictly between 0 and the port rate {port_rate} bit/s")]
    IdleSlopeOutOfRange { idle_slope: f64, port_rate: u64 },
    #[error("class is starved: gate-closed {closed} plus guardband {guardband} leave no time in a {cycle} cycle")]
    ClassStarved {
        cycle: TimeNs,
        closed: TimeNs,
        guardband: TimeNs,
    },
    #[error("unknown traffic class {0}")]
    UnknownClass(u8),
    #[error("invalid gate schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    SchedulingInPast { at: TimeNs, now: TimeNs },
    #[error("credit update for time {at} precedes last update {last}")]
    TimeRegression { at: TimeNs, last: TimeNs },
    #[error("negative delay for flow {flow}: sent {sent}, received {received}")]
    NegativeDelay {
        flow: usize,
        sent: TimeNs,
        received: TimeNs,
    },
    #[error("reassembly failed: {0}")]
    Reassembly(String),
    #[error("no pending fragment to resume")]
    NothingToResume,
    #[error("routing failure: {0}")]
    Routing(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Scenario loading failure with a location hint.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

impl ScenarioError {
    pub fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }
}
