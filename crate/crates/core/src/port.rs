//! Egress-port arbiter: per-class queues gated by the GCL, shaped by CBS,
//! blocked by guardbands and hold windows, and multiplexed through the
//! preemption merge layer.
//!
//! The port is driven by `settle(t)`, which the network calls once every
//! other state change at `t` has been applied. All credit updates,
//! preemption requests and transmission selections happen there.

use std::collections::VecDeque;

use crate::cbs::{CbsClassConfig, CreditInputs, CreditState, Regime};
use crate::error::SimError;
use crate::fp::{whole_unit, FpMode, InFlight, MergeState, PreemptOutcome, PreemptionConfig};
use crate::gcl::{GateMask, GclSchedule, WindowSet};
use crate::model::{ClassId, Fragment, Frame, NodeId, TimeNs, TrafficKind};

#[derive(Debug, Clone)]
pub struct PortClass {
    pub id: ClassId,
    pub kind: TrafficKind,
    /// Preemptable on this port (FP enabled and class configured preemptable).
    pub preemptable: bool,
    pub guardband: WindowSet,
    pub cbs: Option<CbsClassConfig>,
}

#[derive(Debug, Clone)]
pub struct PortConfig {
    pub name: String,
    pub node: NodeId,
    pub peer: NodeId,
    pub rate_bps: u64,
    pub propagation: TimeNs,
    pub schedule: GclSchedule,
    /// Sorted by priority, highest first.
    pub classes: Vec<PortClass>,
    pub fp: PreemptionConfig,
    pub holds: WindowSet,
    pub tt_mask: GateMask,
}

/// Snapshot of the conditions one class sees at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassView {
    pub gate_open: bool,
    pub guardband: bool,
    pub held: bool,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PortStats {
    pub transmissions: u64,
    pub preemptions: u64,
    /// Express frames that found a preemptable transmission on the line.
    pub express_blocked: u64,
    /// Time-triggered gate closes with frames still queued.
    pub tt_window_misses: u64,
    pub max_backlog_frames: usize,
}

/// What the network must schedule after a settle.
#[derive(Debug, Default, Clone)]
pub struct SettleOutcome {
    pub started: Option<InFlight>,
    /// Existing transmission whose end moved because of a cut.
    pub cut: Option<InFlight>,
    pub crossings: Vec<TimeNs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub class: ClassId,
    pub flow: usize,
    pub seq: u64,
    pub fragment: u32,
    pub data_bytes: u64,
    pub is_final: bool,
    pub start: TimeNs,
    pub end: TimeNs,
}

#[derive(Debug, Clone)]
pub struct EgressPort {
    cfg: PortConfig,
    queues: Vec<VecDeque<Frame>>,
    credits: Vec<Option<CreditState>>,
    crossing: Vec<Option<TimeNs>>,
    prev_gate: Vec<bool>,
    merge: MergeState,
    stats: PortStats,
    tx_log: Option<Vec<TxRecord>>,
}

impl EgressPort {
    pub fn new(cfg: PortConfig) -> Self {
        let n = cfg.classes.len();
        let credits = cfg
            .classes
            .iter()
            .map(|c| c.cbs.map(CreditState::new))
            .collect();
        EgressPort {
            queues: vec![VecDeque::new(); n],
            credits,
            crossing: vec![None; n],
            prev_gate: vec![false; n],
            merge: MergeState::default(),
            stats: PortStats::default(),
            tx_log: None,
            cfg,
        }
    }

    pub fn enable_tx_log(&mut self) {
        self.tx_log = Some(Vec::new());
    }

    pub fn tx_log(&self) -> &[TxRecord] {
        self.tx_log.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &PortConfig {
        &self.cfg
    }

    pub fn stats(&self) -> PortStats {
        self.stats
    }

    pub fn credit(&self, class: ClassId) -> Option<&CreditState> {
        let i = self.class_index(class)?;
        self.credits[i].as_ref()
    }

    pub fn class_index(&self, class: ClassId) -> Option<usize> {
        self.cfg.classes.iter().position(|c| c.id == class)
    }

    pub fn in_flight(&self) -> Option<&InFlight> {
        self.merge.in_flight.as_ref()
    }

    pub fn backlog(&self, idx: usize) -> (usize, u64) {
        let q = &self.queues[idx];
        let mut frames = q.len();
        let mut bytes: u64 = q.iter().map(|f| f.mac_bytes()).sum();
        if let Some(p) = self.pending_for(idx) {
            frames += 1;
            bytes += p.on_wire_bytes();
        }
        (frames, bytes)
    }

    fn pending_for(&self, idx: usize) -> Option<&Fragment> {
        self.merge
            .pending_resume
            .as_ref()
            .filter(|p| p.frame.class == self.cfg.classes[idx].id)
    }

    fn has_backlog(&self, idx: usize) -> bool {
        !self.queues[idx].is_empty() || self.pending_for(idx).is_some()
    }

    pub fn is_tt_open(&self, t: TimeNs) -> bool {
        self.cfg.schedule.mask_at(t).intersects(self.cfg.tt_mask)
    }

    pub fn held(&self, t: TimeNs) -> bool {
        self.cfg.fp.mode == FpMode::WithHoldRelease
            && self.cfg.holds.contains(self.cfg.schedule.cycle(), t)
    }

    pub fn view(&self, idx: usize, t: TimeNs) -> ClassView {
        let c = &self.cfg.classes[idx];
        let cycle = self.cfg.schedule.cycle();
        ClassView {
            gate_open: self.cfg.schedule.is_open(c.id, t),
            guardband: c.guardband.contains(cycle, t),
            held: c.preemptable && self.held(t),
        }
    }

    pub fn enqueue(&mut self, frame: Frame) -> Result<(), SimError> {
        let idx = self
            .class_index(frame.class)
            .ok_or(crate::error::ConfigError::UnknownClass(frame.class))?;
        self.queues[idx].push_back(frame);
        let total: usize = self.queues.iter().map(|q| q.len()).sum();
        self.stats.max_backlog_frames = self.stats.max_backlog_frames.max(total);
        Ok(())
    }

    /// Whether class `idx` may start a transmission at `t` (ignoring the line).
    fn eligible(&self, idx: usize, view: ClassView) -> bool {
        if !self.has_backlog(idx) {
            return false;
        }
        let c = &self.cfg.classes[idx];
        if c.preemptable
            && self
                .merge
                .pending_resume
                .as_ref()
                .is_some_and(|p| p.frame.class != c.id)
        {
            // One preemptable frame in progress at a time.
            return false;
        }
        if !view.gate_open || view.held {
            return false;
        }
        if c.kind != TrafficKind::Tt && view.guardband {
            return false;
        }
        match &self.credits[idx] {
            Some(cs) => cs.nanobits() >= 0,
            None => true,
        }
    }

    fn in_flight_class(&self) -> Option<usize> {
        let f = self.merge.in_flight.as_ref()?;
        self.class_index(f.unit.frame.class)
    }

    /// Applies every rule for instant `t`. Must be called after all other
    /// state changes at `t`.
    #[allow(clippy::needless_range_loop)]
    pub fn settle(&mut self, t: TimeNs) -> Result<SettleOutcome, SimError> {
        let mut out = SettleOutcome::default();
        let n = self.cfg.classes.len();
        let views: Vec<ClassView> = (0..n).map(|i| self.view(i, t)).collect();

        for cs in self.credits.iter_mut().flatten() {
            cs.advance(t)?;
        }

        for i in 0..n {
            let c = &self.cfg.classes[i];
            if c.kind == TrafficKind::Tt
                && self.prev_gate[i]
                && !views[i].gate_open
                && !self.queues[i].is_empty()
            {
                self.stats.tt_window_misses += 1;
            }
            self.prev_gate[i] = views[i].gate_open;
        }

        if self.cfg.fp.enabled() {
            self.maybe_preempt(t, &views, &mut out);
        }

        if !self.merge.is_busy() {
            if let Some(idx) = (0..n).find(|&i| self.eligible(i, views[i])) {
                let unit = match self.pending_for(idx) {
                    Some(_) => self.merge.resume()?,
                    None => whole_unit(self.queues[idx].pop_front().expect("backlog checked")),
                };
                let preemptable = self.cfg.classes[idx].preemptable;
                let f = self.merge.start(unit, t, self.cfg.rate_bps, preemptable);
                self.stats.transmissions += 1;
                out.started = Some(f);
            }
        }

        let tx_class = self.in_flight_class();
        for i in 0..n {
            let backlog = self.has_backlog(i);
            let Some(cs) = self.credits[i].as_mut() else {
                continue;
            };
            let inputs = CreditInputs {
                transmitting: tx_class == Some(i),
                gate_open: views[i].gate_open,
                guardband: views[i].guardband || views[i].held,
                backlog,
            };
            cs.settle(t, inputs)?;
            let z = cs.zero_crossing();
            if let Some(at) = z.filter(|_| z != self.crossing[i]) {
                out.crossings.push(at);
            }
            self.crossing[i] = z;
        }
        Ok(out)
    }

    fn maybe_preempt(&mut self, t: TimeNs, views: &[ClassView], out: &mut SettleOutcome) {
        let Some(f) = self.merge.in_flight else {
            return;
        };
        if !f.preemptable || f.cut.is_some() {
            return;
        }
        let express_waiting = self
            .cfg
            .classes
            .iter()
            .enumerate()
            .any(|(i, c)| !c.preemptable && self.eligible(i, views[i]));
        let own = self
            .in_flight_class()
            .expect("in-flight class is configured");
        let trigger = express_waiting
            || match self.cfg.fp.mode {
                FpMode::WithoutHoldRelease => !views[own].gate_open,
                FpMode::WithHoldRelease => views[own].held,
                FpMode::None => false,
            };
        if !trigger {
            return;
        }
        if express_waiting {
            self.stats.express_blocked += 1;
        }
        if let PreemptOutcome::Cut { .. } = self.merge.preempt(t, self.cfg.rate_bps) {
            self.stats.preemptions += 1;
            out.cut = self.merge.in_flight;
        }
    }

    /// Ends the transmission identified by `generation`. Returns `None` for
    /// stale events superseded by a cut.
    pub fn tx_end(&mut self, generation: u64) -> Option<Fragment> {
        let f = self.merge.in_flight?;
        if f.generation != generation {
            return None;
        }
        let frag = self.merge.finish()?;
        if let Some(log) = self.tx_log.as_mut() {
            log.push(TxRecord {
                class: frag.frame.class,
                flow: frag.frame.flow.0,
                seq: frag.frame.seq,
                fragment: frag.index,
                data_bytes: frag.data_bytes,
                is_final: frag.is_final,
                start: f.start,
                end: f.line_end,
            });
        }
        Some(frag)
    }

    pub fn class_regime(&self, idx: usize) -> Option<Regime> {
        self.credits[idx].as_ref().map(|c| c.regime())
    }
}
