//! Cyclic gate control lists and the windows derived from them: guardbands
//! ahead of gate closes and hold/release windows around express windows.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fp::{FpMode, NON_PREEMPTABLE_LINE_BYTES};
use crate::model::{tx_duration, ClassId, TimeNs, MAX_LINE_BYTES};

/// Bit `c` set means the gate of class `c` is open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateMask(pub u8);

impl GateMask {
    pub const ALL: GateMask = GateMask(0xff);

    pub fn from_classes(classes: &[ClassId]) -> Self {
        GateMask(classes.iter().fold(0u8, |m, c| m | (1 << c)))
    }

    pub fn is_open(self, class: ClassId) -> bool {
        self.0 & (1 << class) != 0
    }

    pub fn intersects(self, other: GateMask) -> bool {
        self.0 & other.0 != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GclEntry {
    pub offset: TimeNs,
    pub duration: TimeNs,
    pub open: GateMask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GclSchedule {
    cycle: TimeNs,
    entries: Vec<GclEntry>,
}

/// Interval `[start, end)` in cycle coordinates. `start < cycle`; `end` may
/// exceed the cycle for windows that wrap around the cycle boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: TimeNs,
    pub end: TimeNs,
}

impl Window {
    pub fn len(&self) -> TimeNs {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn contains_cyclic(&self, x: u64, cycle: u64) -> bool {
        let (s, e) = (self.start.0, self.end.0);
        (s <= x && x < e) || (s <= x + cycle && x + cycle < e)
    }
}

impl GclSchedule {
    /// Builds a schedule from consecutive `(duration, open gates)` entries.
    pub fn from_durations(entries: &[(TimeNs, GateMask)]) -> Result<Self, ConfigError> {
        let mut offset = TimeNs::ZERO;
        let mut out = Vec::with_capacity(entries.len());
        for &(duration, open) in entries {
            if duration == TimeNs::ZERO {
                return Err(ConfigError::InvalidSchedule("zero-length entry".into()));
            }
            out.push(GclEntry {
                offset,
                duration,
                open,
            });
            offset += duration;
        }
        Self::new(offset, out)
    }

    /// Entries must tile `[0, cycle)` exactly.
    pub fn new(cycle: TimeNs, entries: Vec<GclEntry>) -> Result<Self, ConfigError> {
        if cycle == TimeNs::ZERO || entries.is_empty() {
            return Err(ConfigError::InvalidSchedule("empty schedule".into()));
        }
        let mut expected = TimeNs::ZERO;
        for e in &entries {
            if e.offset != expected {
                return Err(ConfigError::InvalidSchedule(format!(
                    "entry at {} leaves a gap or overlap (expected offset {})",
                    e.offset, expected
                )));
            }
            if e.duration == TimeNs::ZERO {
                return Err(ConfigError::InvalidSchedule("zero-length entry".into()));
            }
            expected += e.duration;
        }
        if expected != cycle {
            return Err(ConfigError::InvalidSchedule(format!(
                "entries cover {} but the cycle is {}",
                expected, cycle
            )));
        }
        Ok(GclSchedule { cycle, entries })
    }

    pub fn always_open(cycle: TimeNs) -> Self {
        GclSchedule {
            cycle,
            entries: vec![GclEntry {
                offset: TimeNs::ZERO,
                duration: cycle,
                open: GateMask::ALL,
            }],
        }
    }

    pub fn cycle(&self) -> TimeNs {
        self.cycle
    }

    pub fn entries(&self) -> &[GclEntry] {
        &self.entries
    }

    /// The same program started `shift` later: state(t) = original(t - shift).
    pub fn shifted(&self, shift: TimeNs) -> GclSchedule {
        let s = shift.0 % self.cycle.0;
        if s == 0 {
            return self.clone();
        }
        // Split at original offset (cycle - s), which becomes the new zero.
        let cut = self.cycle.0 - s;
        let mut pieces = Vec::new();
        for e in &self.entries {
            let (a, b) = (e.offset.0, e.offset.0 + e.duration.0);
            if a < cut && cut < b {
                pieces.push((a, cut, e.open));
                pieces.push((cut, b, e.open));
            } else {
                pieces.push((a, b, e.open));
            }
        }
        let mut rotated: Vec<(u64, u64, GateMask)> = pieces
            .into_iter()
            .map(|(a, b, m)| ((a + s) % self.cycle.0, b - a, m))
            .collect();
        rotated.sort_by_key(|p| p.0);
        let entries = rotated
            .into_iter()
            .map(|(o, d, m)| GclEntry {
                offset: TimeNs(o),
                duration: TimeNs(d),
                open: m,
            })
            .collect();
        GclSchedule {
            cycle: self.cycle,
            entries,
        }
    }

    fn entry_at(&self, t: TimeNs) -> &GclEntry {
        let x = TimeNs(t.0 % self.cycle.0);
        let idx = self.entries.partition_point(|e| e.offset <= x) - 1;
        &self.entries[idx]
    }

    pub fn mask_at(&self, t: TimeNs) -> GateMask {
        self.entry_at(t).open
    }

    pub fn is_open(&self, class: ClassId, t: TimeNs) -> bool {
        self.mask_at(t).is_open(class)
    }

    /// Fails if any entry opens a gate from `a` and from `b` at once.
    pub fn check_exclusive(&self, a: GateMask, b: GateMask) -> Result<(), ConfigError> {
        for e in &self.entries {
            if e.open.intersects(a) && e.open.intersects(b) {
                return Err(ConfigError::InvalidSchedule(format!(
                    "entry at {} opens time-triggered and shaped gates together",
                    e.offset
                )));
            }
        }
        Ok(())
    }

    /// Offsets within the cycle where the gate mask changes.
    pub fn change_offsets(&self) -> Vec<TimeNs> {
        let n = self.entries.len();
        if n == 1 {
            return Vec::new();
        }
        (0..n)
            .filter(|&i| self.entries[i].open != self.entries[(i + n - 1) % n].open)
            .map(|i| self.entries[i].offset)
            .collect()
    }

    /// Maximal intervals during which any gate in `mask` is open, merged
    /// across the cycle boundary. `None` means the gates never close.
    pub fn open_intervals(&self, mask: GateMask) -> Option<Vec<Window>> {
        let mut out: Vec<Window> = Vec::new();
        for e in &self.entries {
            if !e.open.intersects(mask) {
                continue;
            }
            let w = Window {
                start: e.offset,
                end: e.offset + e.duration,
            };
            match out.last_mut() {
                Some(last) if last.end == w.start => last.end = w.end,
                _ => out.push(w),
            }
        }
        let total: u64 = out.iter().map(|w| w.len().0).sum();
        if total == self.cycle.0 {
            return None;
        }
        if out.len() > 1 && out[0].start == TimeNs::ZERO && out.last().unwrap().end == self.cycle {
            let first = out.remove(0);
            let last = out.last_mut().unwrap();
            last.end = self.cycle + first.end;
        }
        Some(out)
    }

    pub fn gate_state_at(&self, class: ClassId, t: TimeNs) -> Result<GateState, ConfigError> {
        if class > 7 {
            return Err(ConfigError::UnknownClass(class));
        }
        Ok(if self.is_open(class, t) {
            GateState::Open
        } else {
            GateState::Closed
        })
    }
}

/// Guardband length selection for one FP integration mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardbandPolicy {
    pub mode: FpMode,
    pub gb_line_bytes: u64,
}

impl GuardbandPolicy {
    pub fn for_mode(mode: FpMode) -> Self {
        let gb_line_bytes = match mode {
            FpMode::None => MAX_LINE_BYTES,
            FpMode::WithoutHoldRelease | FpMode::WithHoldRelease => NON_PREEMPTABLE_LINE_BYTES,
        };
        GuardbandPolicy {
            mode,
            gb_line_bytes,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub warnings: Vec<String>,
}

impl WindowSet {
    pub fn contains(&self, cycle: TimeNs, t: TimeNs) -> bool {
        let x = t.0 % cycle.0;
        self.windows.iter().any(|w| w.contains_cyclic(x, cycle.0))
    }

    pub fn total(&self) -> TimeNs {
        TimeNs(self.windows.iter().map(|w| w.len().0).sum())
    }
}

/// One window of `gb_line_bytes` line time ending at every close of the
/// class gate, clipped to the open interval it belongs to.
pub fn guardband_windows(
    schedule: &GclSchedule,
    class: ClassId,
    gb_line_bytes: u64,
    rate_bps: u64,
) -> Result<WindowSet, ConfigError> {
    if class > 7 {
        return Err(ConfigError::UnknownClass(class));
    }
    let gb = tx_duration(gb_line_bytes, rate_bps)?;
    let mut set = WindowSet::default();
    if gb == TimeNs::ZERO {
        return Ok(set);
    }
    let Some(open) = schedule.open_intervals(GateMask::from_classes(&[class])) else {
        return Ok(set);
    };
    for w in open {
        if w.len() < gb {
            set.warnings.push(format!(
                "class {class}: open interval [{}, {}) is shorter than the {} guardband",
                w.start, w.end, gb
            ));
            set.windows.push(w);
        } else {
            set.windows.push(Window {
                start: w.end - gb,
                end: w.end,
            });
        }
    }
    set.windows
        .iter_mut()
        .for_each(|w| normalize(w, schedule.cycle()));
    Ok(set)
}

fn normalize(w: &mut Window, cycle: TimeNs) {
    if w.start >= cycle {
        w.start = w.start - cycle;
        w.end = w.end - cycle;
    }
}

/// Hold windows `[express start - advance, express end)`, merged when they
/// overlap.
pub fn hold_windows(schedule: &GclSchedule, express: GateMask, hold_advance: TimeNs) -> WindowSet {
    let cycle = schedule.cycle();
    let mut set = WindowSet::default();
    let Some(open) = schedule.open_intervals(express) else {
        set.windows.push(Window {
            start: TimeNs::ZERO,
            end: cycle,
        });
        return set;
    };
    let mut raw: Vec<Window> = open
        .into_iter()
        .map(|w| {
            // Shift by one cycle so the subtraction cannot underflow.
            let mut h = Window {
                start: w.start + cycle - hold_advance.min(cycle),
                end: w.end + cycle,
            };
            normalize(&mut h, cycle);
            h
        })
        .collect();
    raw.sort_by_key(|w| w.start);

    let mut merged: Vec<Window> = Vec::new();
    for w in raw {
        match merged.last_mut() {
            Some(last) if w.start <= last.end => {
                set.warnings.push(format!(
                    "hold advance {} bridges the gap before the express window ending at {}",
                    hold_advance, w.end
                ));
                last.end = last.end.max(w.end);
            }
            _ => merged.push(w),
        }
    }
    if merged.len() > 1 {
        let first = merged[0];
        let last = merged.last_mut().unwrap();
        if last.end >= first.start + cycle {
            set.warnings.push(format!(
                "hold advance {} bridges the gap across the cycle boundary",
                hold_advance
            ));
            last.end = last.end.max(first.end + cycle);
            merged.remove(0);
        }
    }
    for w in &mut merged {
        if w.len() >= cycle {
            *w = Window {
                start: TimeNs::ZERO,
                end: cycle,
            };
        }
    }
    merged.dedup();
    set.windows = merged;
    set
}

/// Per-cycle gate-closed time of `class` and total guardband time.
pub fn closed_time_and_gb(
    schedule: &GclSchedule,
    class: ClassId,
    guardbands: &WindowSet,
) -> (TimeNs, TimeNs) {
    let open: u64 = schedule
        .entries()
        .iter()
        .filter(|e| e.open.is_open(class))
        .map(|e| e.duration.0)
        .sum();
    (schedule.cycle() - TimeNs(open), guardbands.total())
}
