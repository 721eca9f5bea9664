//! Credit-based shaper state for one AVB class on one port.
//!
//! Credit is kept in nanobits (bit x 1e-9) so that `slope [bit/s] x dt [ns]`
//! is an exact integer product for any integer slope.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::model::TimeNs;

pub const NANOBITS_PER_BIT: i128 = 1_000_000_000;
pub const NANOBITS_PER_MILLIBIT: i128 = 1_000_000;

/// Credit behavior while a guardband (or hold) is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CreditMode {
    #[serde(rename = "nonfrozen")]
    Nonfrozen,
    #[serde(rename = "frozen")]
    Frozen,
    #[serde(rename = "return-to-zero")]
    ReturnToZero,
}

impl CreditMode {
    pub const ALL: [CreditMode; 3] = [
        CreditMode::Nonfrozen,
        CreditMode::Frozen,
        CreditMode::ReturnToZero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CreditMode::Nonfrozen => "nonfrozen",
            CreditMode::Frozen => "frozen",
            CreditMode::ReturnToZero => "return-to-zero",
        }
    }
}

impl fmt::Display for CreditMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CreditMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nonfrozen" => Ok(CreditMode::Nonfrozen),
            "frozen" => Ok(CreditMode::Frozen),
            "return-to-zero" => Ok(CreditMode::ReturnToZero),
            other => Err(format!(
                "unknown credit mode '{other}' (nonfrozen|frozen|return-to-zero)"
            )),
        }
    }
}

/// How the reserved bandwidth is scaled to the time the gate is usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SlopeScaling {
    /// Cycle / (cycle - closed - guardband).
    #[default]
    #[serde(rename = "gate-and-guardband")]
    GateAndGuardband,
    /// Cycle / (cycle - closed).
    #[serde(rename = "gate-only")]
    GateOnly,
    #[serde(rename = "none")]
    None,
}

/// Which guardband length enters the scaled idle slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SlopeGuardband {
    /// The full-frame guardband used without preemption, so the configured
    /// slope does not change when preemption is switched on.
    #[default]
    #[serde(rename = "standard")]
    Standard,
    /// The guardband of the active preemption mode.
    #[serde(rename = "active")]
    Active,
}

/// Reserved bandwidth scaled up to the fraction of the cycle in which the
/// class can actually transmit.
pub fn scaled_idle_slope(
    oper_idle_slope: f64,
    hyperperiod: TimeNs,
    t_gate_closed: TimeNs,
    t_gb: TimeNs,
) -> Result<f64, ConfigError> {
    let usable = hyperperiod.0 as i128 - t_gate_closed.0 as i128 - t_gb.0 as i128;
    if usable <= 0 {
        return Err(ConfigError::ClassStarved {
            cycle: hyperperiod,
            closed: t_gate_closed,
            guardband: t_gb,
        });
    }
    Ok(oper_idle_slope * hyperperiod.0 as f64 / usable as f64)
}

/// Integer variant used by the simulator, rounded half-up to whole bit/s.
pub fn scaled_idle_slope_bps(
    oper_idle_slope: u64,
    hyperperiod: TimeNs,
    t_gate_closed: TimeNs,
    t_gb: TimeNs,
) -> Result<u64, ConfigError> {
    scaled_idle_slope(oper_idle_slope as f64, hyperperiod, t_gate_closed, t_gb)?;
    let usable = (hyperperiod.0 - t_gate_closed.0 - t_gb.0) as u128;
    let num = oper_idle_slope as u128 * hyperperiod.0 as u128;
    Ok(((2 * num + usable) / (2 * usable)) as u64)
}

pub fn send_slope(idle_slope: f64, port_rate: u64) -> Result<f64, ConfigError> {
    if !(idle_slope > 0.0 && idle_slope < port_rate as f64) {
        return Err(ConfigError::IdleSlopeOutOfRange {
            idle_slope,
            port_rate,
        });
    }
    Ok(idle_slope - port_rate as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbsClassConfig {
    pub class: u8,
    pub oper_idle_slope: u64,
    pub idle_slope: u64,
    pub send_slope: i64,
    pub port_rate: u64,
    pub mode: CreditMode,
}

impl CbsClassConfig {
    pub fn new(
        class: u8,
        oper_idle_slope: u64,
        idle_slope: u64,
        port_rate: u64,
        mode: CreditMode,
    ) -> Result<Self, ConfigError> {
        let send = send_slope(idle_slope as f64, port_rate)?;
        Ok(CbsClassConfig {
            class,
            oper_idle_slope,
            idle_slope,
            send_slope: send as i64,
            port_rate,
            mode,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Transmitting,
    Accumulating,
    PausedGateClosed,
    /// Zero slope inside a guardband (frozen and return-to-zero).
    Guardband,
    IdleZero,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Transmitting => "transmitting",
            Regime::Accumulating => "accumulating",
            Regime::PausedGateClosed => "paused",
            Regime::Guardband => "guardband",
            Regime::IdleZero => "idle",
        }
    }
}

/// Port-side conditions the credit reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CreditInputs {
    pub transmitting: bool,
    pub gate_open: bool,
    /// Guardband or hold window active.
    pub guardband: bool,
    /// Frames (or a pending continuation) queued.
    pub backlog: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CreditEvent {
    TxStart,
    TxEnd,
    GateOpen,
    GateClose,
    GbStart,
    GbEnd,
    QueueEmpty,
    QueueNonEmpty,
}

#[derive(Debug, Clone)]
pub struct CreditState {
    cfg: CbsClassConfig,
    credit: i128,
    last_update: TimeNs,
    regime: Regime,
    inputs: CreditInputs,
}

impl CreditState {
    pub fn new(cfg: CbsClassConfig) -> Self {
        CreditState {
            cfg,
            credit: 0,
            last_update: TimeNs::ZERO,
            regime: Regime::IdleZero,
            inputs: CreditInputs {
                gate_open: true,
                ..CreditInputs::default()
            },
        }
    }

    /// Starts from an explicit credit value (bits) and conditions.
    pub fn with_credit(cfg: CbsClassConfig, bits: i64, t: TimeNs, inputs: CreditInputs) -> Self {
        let mut s = CreditState {
            cfg,
            credit: bits as i128 * NANOBITS_PER_BIT,
            last_update: t,
            regime: Regime::IdleZero,
            inputs,
        };
        s.apply(inputs);
        s
    }

    pub fn config(&self) -> &CbsClassConfig {
        &self.cfg
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn inputs(&self) -> CreditInputs {
        self.inputs
    }

    pub fn last_update(&self) -> TimeNs {
        self.last_update
    }

    pub fn nanobits(&self) -> i128 {
        self.credit
    }

    pub fn bits(&self) -> f64 {
        self.credit as f64 / NANOBITS_PER_BIT as f64
    }

    pub fn millibits(&self) -> i128 {
        self.credit.div_euclid(NANOBITS_PER_MILLIBIT)
    }

    /// Current slope in bit/s.
    pub fn slope(&self) -> i64 {
        match self.regime {
            Regime::Transmitting => self.cfg.send_slope,
            Regime::Accumulating => self.cfg.idle_slope as i64,
            _ => 0,
        }
    }

    /// Credit at `t >= last_update` under the current regime, without
    /// changing state.
    pub fn project(&self, t: TimeNs) -> i128 {
        self.credit + self.slope() as i128 * (t.0 as i128 - self.last_update.0 as i128)
    }

    pub fn advance(&mut self, t: TimeNs) -> Result<(), SimError> {
        if t < self.last_update {
            return Err(SimError::TimeRegression {
                at: t,
                last: self.last_update,
            });
        }
        self.credit = self.project(t);
        self.last_update = t;
        Ok(())
    }

    /// Advances to `t`, then applies the instantaneous rules for the new
    /// conditions and picks the regime that holds from `t` on.
    pub fn settle(&mut self, t: TimeNs, inputs: CreditInputs) -> Result<(), SimError> {
        self.advance(t)?;
        self.apply(inputs);
        Ok(())
    }

    fn apply(&mut self, inputs: CreditInputs) {
        self.inputs = inputs;
        if inputs.transmitting {
            self.regime = Regime::Transmitting;
            return;
        }
        if !inputs.backlog && self.credit > 0 {
            self.credit = 0;
        }
        self.regime = if !inputs.gate_open {
            Regime::PausedGateClosed
        } else if inputs.guardband && self.cfg.mode != CreditMode::Nonfrozen {
            if self.cfg.mode == CreditMode::ReturnToZero {
                self.credit = 0;
            }
            Regime::Guardband
        } else if inputs.backlog || self.credit < 0 {
            Regime::Accumulating
        } else {
            Regime::IdleZero
        };
    }

    pub fn on_state_change(&mut self, event: CreditEvent, t: TimeNs) -> Result<(), SimError> {
        let mut i = self.inputs;
        match event {
            CreditEvent::TxStart => i.transmitting = true,
            CreditEvent::TxEnd => i.transmitting = false,
            CreditEvent::GateOpen => i.gate_open = true,
            CreditEvent::GateClose => i.gate_open = false,
            CreditEvent::GbStart => i.guardband = true,
            CreditEvent::GbEnd => i.guardband = false,
            CreditEvent::QueueEmpty => i.backlog = false,
            CreditEvent::QueueNonEmpty => i.backlog = true,
        }
        self.settle(t, i)
    }

    /// Instant at which a negative, rising credit reaches zero.
    pub fn zero_crossing(&self) -> Option<TimeNs> {
        let slope = self.slope() as i128;
        if self.credit < 0 && slope > 0 {
            let dt = (-self.credit + slope - 1) / slope;
            Some(self.last_update + TimeNs(dt as u64))
        } else {
            None
        }
    }

    /// Transmission rule at the last settled instant.
    pub fn eligible(&self, gate_open: bool, in_guardband: bool, held: bool) -> bool {
        self.credit >= 0 && gate_open && !in_guardband && !held
    }
}
