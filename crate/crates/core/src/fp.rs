//! Express/preemptable merge sublayer: preemptability rules, fragment
//! bookkeeping, the per-preemption overhead and receiver-side reassembly.
//!
//! Byte accounting: a frame of `F` MAC bytes (FCS included) carries
//! `F - 4` data bytes. Fragmentation splits the data stream; every fragment
//! is closed by four check bytes (mCRC for non-final fragments, the frame
//! FCS for the final one). On the line each fragment is preceded by an
//! 8-byte preamble/SFD and followed by a 12-byte IFG.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::{
    tx_duration, Fragment, Frame, TimeNs, FCS_BYTES, IFG_BYTES, LINE_OVERHEAD_BYTES, PREAMBLE_BYTES,
};

/// mCRC (4) plus IFG (12) appended when a fragment is cut.
pub const PREEMPTION_OVERHEAD_BYTES: u64 = FCS_BYTES + IFG_BYTES;
pub const MIN_FRAGMENT_WIRE_BYTES: u64 = 64;
/// Data bytes that every fragment must carry (64 wire bytes minus check bytes).
pub const MIN_FRAGMENT_DATA_BYTES: u64 = MIN_FRAGMENT_WIRE_BYTES - FCS_BYTES;
pub const MIN_PREEMPTABLE_FRAME_BYTES: u64 = 124;
pub const LARGEST_NON_PREEMPTABLE_MAC_BYTES: u64 = MIN_PREEMPTABLE_FRAME_BYTES - 1;
/// Line occupancy of the largest frame that can never be preempted.
pub const NON_PREEMPTABLE_LINE_BYTES: u64 = LARGEST_NON_PREEMPTABLE_MAC_BYTES + LINE_OVERHEAD_BYTES;
pub const DEFAULT_HOLD_ADVANCE_BYTES: u64 = NON_PREEMPTABLE_LINE_BYTES + PREEMPTION_OVERHEAD_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FpMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "without-hr")]
    WithoutHoldRelease,
    #[serde(rename = "with-hr")]
    WithHoldRelease,
}

impl FpMode {
    pub const ALL: [FpMode; 3] = [
        FpMode::None,
        FpMode::WithHoldRelease,
        FpMode::WithoutHoldRelease,
    ];

    pub fn enabled(self) -> bool {
        self != FpMode::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FpMode::None => "none",
            FpMode::WithoutHoldRelease => "without-hr",
            FpMode::WithHoldRelease => "with-hr",
        }
    }
}

impl fmt::Display for FpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FpMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FpMode::None),
            "without-hr" => Ok(FpMode::WithoutHoldRelease),
            "with-hr" => Ok(FpMode::WithHoldRelease),
            other => Err(format!(
                "unknown fp mode '{other}' (none|with-hr|without-hr)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreemptionConfig {
    pub mode: FpMode,
    /// Guardband ahead of preemptable gate closes in without-HR mode.
    pub guardband: bool,
    pub hold_advance_bytes: u64,
}

impl PreemptionConfig {
    pub fn new(mode: FpMode) -> Self {
        PreemptionConfig {
            mode,
            guardband: true,
            hold_advance_bytes: DEFAULT_HOLD_ADVANCE_BYTES,
        }
    }

    pub fn enabled(&self) -> bool {
        self.mode.enabled()
    }
}

/// Whether a unit of `frame_mac_bytes` with `bytes_already_sent` data bytes
/// on the wire can be split right now.
pub fn can_preempt(frame_mac_bytes: u64, bytes_already_sent: u64) -> bool {
    frame_mac_bytes >= MIN_PREEMPTABLE_FRAME_BYTES
        && bytes_already_sent >= MIN_FRAGMENT_DATA_BYTES
        && frame_mac_bytes.saturating_sub(FCS_BYTES + bytes_already_sent) >= MIN_FRAGMENT_DATA_BYTES
}

/// First data offset at or after `sent` where a unit of `unit_data` data
/// bytes may be cut, if any.
pub fn earliest_cut(unit_data: u64, sent: u64) -> Option<u64> {
    let k = sent.max(MIN_FRAGMENT_DATA_BYTES);
    can_preempt(unit_data + FCS_BYTES, k).then_some(k)
}

/// Line bytes of a fragment carrying `data` bytes.
pub fn fragment_line_bytes(data: u64) -> u64 {
    PREAMBLE_BYTES + data + FCS_BYTES + IFG_BYTES
}

/// Transmission currently on the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlight {
    /// The unit as started: all remaining data of the frame.
    pub unit: Fragment,
    pub start: TimeNs,
    pub line_end: TimeNs,
    pub preemptable: bool,
    /// Data bytes sent before the cut, once a preemption has been decided.
    pub cut: Option<u64>,
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreemptOutcome {
    /// Nothing (or nothing preemptable) on the line.
    Idle,
    /// The fragment is closed at `at`; the line is free at `line_end`.
    Cut { at: TimeNs, line_end: TimeNs },
    /// The unit cannot be split; it occupies the line until `line_end`.
    Completes { line_end: TimeNs },
}

/// Per-port merge state.
#[derive(Debug, Default, Clone)]
pub struct MergeState {
    pub in_flight: Option<InFlight>,
    pub pending_resume: Option<Fragment>,
    next_generation: u64,
}

impl MergeState {
    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    /// Puts `unit` on the line at `t`.
    pub fn start(
        &mut self,
        unit: Fragment,
        t: TimeNs,
        rate_bps: u64,
        preemptable: bool,
    ) -> InFlight {
        debug_assert!(self.in_flight.is_none(), "one transmission per port");
        let line_end = t + tx_duration(fragment_line_bytes(unit.data_bytes), rate_bps)
            .expect("rate validated at load");
        self.next_generation += 1;
        let f = InFlight {
            unit,
            start: t,
            line_end,
            preemptable,
            cut: None,
            generation: self.next_generation,
        };
        self.in_flight = Some(f);
        f
    }

    /// Requests preemption of the in-flight unit at `t`. Takes effect at the
    /// next byte boundary where both resulting fragments are legal.
    pub fn preempt(&mut self, t: TimeNs, rate_bps: u64) -> PreemptOutcome {
        let Some(f) = self.in_flight.as_mut() else {
            return PreemptOutcome::Idle;
        };
        if !f.preemptable {
            return PreemptOutcome::Idle;
        }
        if f.cut.is_some() {
            return PreemptOutcome::Cut {
                at: f.line_end - tx_duration(PREEMPTION_OVERHEAD_BYTES, rate_bps).unwrap(),
                line_end: f.line_end,
            };
        }
        let tau = tx_duration(1, rate_bps).expect("rate validated at load").0;
        let boundary = (t - f.start).0.div_ceil(tau);
        let sent = boundary.saturating_sub(PREAMBLE_BYTES);
        if sent > f.unit.data_bytes {
            return PreemptOutcome::Completes {
                line_end: f.line_end,
            };
        }
        match earliest_cut(f.unit.data_bytes, sent) {
            Some(k) => {
                let at = f.start + TimeNs((PREAMBLE_BYTES + k) * tau);
                f.cut = Some(k);
                f.line_end = at + TimeNs(PREEMPTION_OVERHEAD_BYTES * tau);
                self.next_generation += 1;
                f.generation = self.next_generation;
                PreemptOutcome::Cut {
                    at,
                    line_end: f.line_end,
                }
            }
            None => PreemptOutcome::Completes {
                line_end: f.line_end,
            },
        }
    }

    /// Ends the current transmission, returning the fragment that went out.
    /// A cut leaves the remainder in `pending_resume`.
    pub fn finish(&mut self) -> Option<Fragment> {
        let f = self.in_flight.take()?;
        match f.cut {
            None => Some(f.unit),
            Some(k) => {
                let sent = Fragment {
                    data_bytes: k,
                    is_final: false,
                    ..f.unit
                };
                self.pending_resume = Some(Fragment {
                    index: f.unit.index + 1,
                    data_offset: f.unit.data_offset + k,
                    data_bytes: f.unit.data_bytes - k,
                    ..f.unit
                });
                Some(sent)
            }
        }
    }

    /// Takes the continuation of the preempted frame for transmission.
    pub fn resume(&mut self) -> Result<Fragment, SimError> {
        self.pending_resume.take().ok_or(SimError::NothingToResume)
    }
}

/// Whole-frame unit for a frame that has not been fragmented yet.
pub fn whole_unit(frame: Frame) -> Fragment {
    Fragment {
        frame,
        index: 0,
        data_offset: 0,
        data_bytes: frame.data_bytes(),
        is_final: true,
    }
}

/// Rebuilds the parent frame from its fragments in index order.
pub fn reassemble(fragments: &[Fragment]) -> Result<Frame, SimError> {
    let first = fragments
        .first()
        .ok_or_else(|| SimError::Reassembly("no fragments".into()))?;
    let parent = first.frame;
    let mut offset = 0;
    for (i, f) in fragments.iter().enumerate() {
        if f.frame.flow != parent.flow || f.frame.seq != parent.seq {
            return Err(SimError::Reassembly(format!(
                "fragment {i} belongs to a different frame"
            )));
        }
        if f.index as usize != i || f.data_offset != offset {
            return Err(SimError::Reassembly(format!(
                "fragment {} out of order (expected index {i} at offset {offset})",
                f.index
            )));
        }
        let last = i + 1 == fragments.len();
        if f.is_final != last {
            return Err(SimError::Reassembly(if last {
                "final fragment missing".into()
            } else {
                format!("fragment {i} marked final before the end")
            }));
        }
        offset += f.data_bytes;
    }
    if offset != parent.data_bytes() {
        return Err(SimError::Reassembly(format!(
            "fragments carry {offset} data bytes, frame has {}",
            parent.data_bytes()
        )));
    }
    Ok(parent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowId, RATE_100M};
    use proptest::prelude::*;

    fn frame_with_mac(mac: u64) -> Frame {
        Frame {
            flow: FlowId(0),
            seq: 3,
            class: 6,
            payload_bytes: mac - 22,
            creation_time: TimeNs::ZERO,
            hop: 0,
        }
    }

    #[test]
    fn constants() {
        assert_eq!(
            tx_duration(PREEMPTION_OVERHEAD_BYTES, RATE_100M).unwrap(),
            TimeNs(1280)
        );
        assert_eq!(NON_PREEMPTABLE_LINE_BYTES, 143);
        assert_eq!(DEFAULT_HOLD_ADVANCE_BYTES, 159);
    }

    #[test]
    fn preemptability() {
        assert!(!can_preempt(123, 60));
        assert!(can_preempt(1000, 500));
        assert!(!can_preempt(124, 10));
        let first_ok = (0..124).find(|&s| can_preempt(124, s));
        assert_eq!(first_ok, Some(60));
        assert!(!can_preempt(124, 61));
    }

    #[test]
    fn preempt_mid_frame_costs_overhead() {
        let mut m = MergeState::default();
        let f = frame_with_mac(1004);
        m.start(whole_unit(f), TimeNs::ZERO, RATE_100M, true);
        // 8 preamble + 400 data bytes out at 408 byte times.
        let t = TimeNs(408 * 80);
        match m.preempt(t, RATE_100M) {
            PreemptOutcome::Cut { at, line_end } => {
                assert_eq!(at, t);
                assert_eq!(line_end, t + TimeNs(1280));
            }
            other => panic!("unexpected {other:?}"),
        }
        let sent = m.finish().unwrap();
        assert_eq!(sent.data_bytes, 400);
        assert_eq!(sent.on_wire_bytes(), 404);
        let rest = m.resume().unwrap();
        assert_eq!(rest.data_bytes, 600);
        assert_eq!(rest.on_wire_bytes(), 604);
        assert!(rest.is_final);
        assert!(matches!(m.resume(), Err(SimError::NothingToResume)));
    }

    #[test]
    fn short_frame_completes() {
        let mut m = MergeState::default();
        let f = frame_with_mac(100);
        let started = m.start(whole_unit(f), TimeNs::ZERO, RATE_100M, true);
        assert_eq!(
            m.preempt(TimeNs(80 * 20), RATE_100M),
            PreemptOutcome::Completes {
                line_end: started.line_end
            }
        );
        assert_eq!(m.finish().unwrap().data_bytes, f.data_bytes());
        assert!(m.pending_resume.is_none());
    }

    #[test]
    fn preempt_idle_line() {
        let mut m = MergeState::default();
        assert_eq!(m.preempt(TimeNs(5), RATE_100M), PreemptOutcome::Idle);
    }

    #[test]
    fn early_request_waits_for_minimum_fragment() {
        let mut m = MergeState::default();
        m.start(
            whole_unit(frame_with_mac(1000)),
            TimeNs::ZERO,
            RATE_100M,
            true,
        );
        match m.preempt(TimeNs(80 * 3), RATE_100M) {
            PreemptOutcome::Cut { at, .. } => assert_eq!(at, TimeNs(80 * 68)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reassembly() {
        let f = frame_with_mac(1000);
        let a = Fragment {
            frame: f,
            index: 0,
            data_offset: 0,
            data_bytes: 396,
            is_final: false,
        };
        let b = Fragment {
            frame: f,
            index: 1,
            data_offset: 396,
            data_bytes: 600,
            is_final: true,
        };
        assert_eq!(a.on_wire_bytes() + b.on_wire_bytes(), 1004);
        assert_eq!(reassemble(&[a, b]).unwrap(), f);
        assert_eq!(reassemble(&[whole_unit(f)]).unwrap(), f);
        assert!(reassemble(&[b, a]).is_err());
        assert!(reassemble(&[a]).is_err());
        assert!(reassemble(&[]).is_err());
    }

    proptest! {
        #[test]
        fn random_preemption_conserves_bytes(
            payload in 64u64..=1500,
            requests in proptest::collection::vec(0u64..2000, 0..6),
        ) {
            let f = Frame { payload_bytes: payload, ..frame_with_mac(100) };
            let mut m = MergeState::default();
            let mut sent = Vec::new();
            let mut t = TimeNs::ZERO;
            let mut unit = whole_unit(f);
            let mut reqs = requests.into_iter();
            loop {
                let inflight = m.start(unit, t, RATE_100M, true);
                if let Some(r) = reqs.next() {
                    let at = inflight.start + TimeNs(r * 80);
                    if at < inflight.line_end {
                        m.preempt(at, RATE_100M);
                    }
                }
                t = m.in_flight.unwrap().line_end;
                sent.push(m.finish().unwrap());
                match m.resume() {
                    Ok(next) => unit = next,
                    Err(_) => break,
                }
            }
            let total: u64 = sent.iter().map(|s| s.data_bytes).sum();
            prop_assert_eq!(total, f.data_bytes());
            if f.mac_bytes() < MIN_PREEMPTABLE_FRAME_BYTES {
                prop_assert_eq!(sent.len(), 1);
            }
            for s in &sent {
                prop_assert!(s.on_wire_bytes() >= MIN_FRAGMENT_WIRE_BYTES);
            }
            prop_assert_eq!(reassemble(&sent).unwrap(), f);
        }
    }
}
