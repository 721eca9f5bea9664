//! Network-level simulation: traffic generation, egress ports, links,
//! store-and-forward switching and delivery accounting.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::cbs::{scaled_idle_slope_bps, CbsClassConfig, CreditMode, SlopeGuardband, SlopeScaling};
use crate::engine::{EventKind, Scheduler, SimRng};
use crate::error::{ConfigError, SimError};
use crate::fp::{reassemble, FpMode, InFlight, PreemptionConfig};
use crate::gcl::{
    closed_time_and_gb, guardband_windows, hold_windows, GateMask, GclSchedule, WindowSet,
};
use crate::metrics::{FlowKpi, FlowStats, TraceRecord, Tracer};
use crate::model::{
    propagation_delay, tx_duration, ClassId, Flow, Fragment, Frame, NodeId, TimeNs, Topology,
    TrafficClass, TrafficKind, MAX_LINE_BYTES,
};
use crate::port::{EgressPort, PortClass, PortConfig, PortStats, TxRecord};

/// Everything one run needs. Built by the scenario loader or by hand.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    /// Priority order is by descending id.
    pub classes: Vec<TrafficClass>,
    pub flows: Vec<Flow>,
    pub default_schedule: GclSchedule,
    /// Per egress port `(node, peer)`.
    pub port_schedules: HashMap<(NodeId, NodeId), GclSchedule>,
    pub credit_mode: CreditMode,
    pub preemption: PreemptionConfig,
    pub slope_scaling: SlopeScaling,
    pub slope_guardband: SlopeGuardband,
    pub duration: TimeNs,
    pub seed: u64,
    pub trace: Option<TraceOptions>,
    pub event_log: bool,
    pub tx_log: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Periodic samples in addition to state changes.
    pub interval: Option<TimeNs>,
    /// Restrict to these port names; all ports when `None`.
    pub ports: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Gen { flow: usize, seq: u64 },
    Timer { port: usize, idx: usize, cycle: u64 },
    Settle { port: usize },
    TxEnd { port: usize, generation: u64 },
    Rx { port: usize, frame: Frame },
    Forward { frame: Frame },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Boundary {
    offset: TimeNs,
    kind: EventKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortSummary {
    pub name: String,
    pub transmissions: u64,
    pub preemptions: u64,
    pub express_blocked: u64,
    pub tt_window_misses: u64,
    pub max_backlog_frames: usize,
}

impl PortSummary {
    fn new(name: &str, s: PortStats) -> Self {
        PortSummary {
            name: name.to_string(),
            transmissions: s.transmissions,
            preemptions: s.preemptions,
            express_blocked: s.express_blocked,
            tt_window_misses: s.tt_window_misses,
            max_backlog_frames: s.max_backlog_frames,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub kpis: Vec<FlowKpi>,
    pub flow_stats: Vec<FlowStats>,
    pub ports: Vec<PortSummary>,
    pub trace: Vec<TraceRecord>,
    pub tx_logs: Vec<(String, Vec<TxRecord>)>,
    pub event_log: Vec<String>,
    pub warnings: Vec<String>,
    pub events: u64,
    /// Offsets actually used, including the random ones.
    pub offsets: Vec<TimeNs>,
}

pub struct Simulation {
    cfg: SimConfig,
    sched: Scheduler<Payload>,
    ports: Vec<EgressPort>,
    port_names: Vec<String>,
    boundaries: Vec<Vec<Boundary>>,
    flow_ports: Vec<Vec<usize>>,
    offsets: Vec<TimeNs>,
    stats: Vec<FlowStats>,
    reasm: Vec<Vec<Fragment>>,
    settle_at: Vec<BTreeSet<TimeNs>>,
    traced: Vec<bool>,
    tracer: Option<Tracer>,
    event_log: Option<Vec<String>>,
    warnings: Vec<String>,
}

fn log(sink: &mut Option<Vec<String>>, t: TimeNs, kind: EventKind, what: impl FnOnce() -> String) {
    if let Some(lines) = sink.as_mut() {
        lines.push(format!("{} {} {}", t.0, kind.name(), what()));
    }
}

fn port_name(topo: &Topology, a: NodeId, b: NodeId) -> String {
    format!("{}->{}", topo.name(a), topo.name(b))
}

/// Bytes of the guardband that protects the window after each close of a
/// class gate on a port, or 0 when the class needs none.
pub fn guardband_bytes(class: &TrafficClass, preemptable: bool, fp: &PreemptionConfig) -> u64 {
    if class.kind == TrafficKind::Tt {
        return 0;
    }
    match (fp.mode, preemptable) {
        (FpMode::None, _) | (_, false) => MAX_LINE_BYTES,
        (FpMode::WithoutHoldRelease, true) => {
            if fp.guardband {
                crate::fp::NON_PREEMPTABLE_LINE_BYTES
            } else {
                0
            }
        }
        (FpMode::WithHoldRelease, true) => fp.hold_advance_bytes,
    }
}

/// Builds the egress-port configuration of the directed link `a -> b`.
pub fn build_port(
    cfg: &SimConfig,
    a: NodeId,
    b: NodeId,
) -> Result<(PortConfig, Vec<String>), ConfigError> {
    let link = cfg.topology.link_between(a, b).ok_or_else(|| {
        ConfigError::InvalidSchedule(format!("no link {}", port_name(&cfg.topology, a, b)))
    })?;
    let rate = link.rate_bps;
    let schedule = cfg
        .port_schedules
        .get(&(a, b))
        .unwrap_or(&cfg.default_schedule)
        .clone();
    let name = port_name(&cfg.topology, a, b);
    let mut warnings = Vec::new();

    let tt_ids: Vec<ClassId> = cfg
        .classes
        .iter()
        .filter(|c| c.kind == TrafficKind::Tt)
        .map(|c| c.id)
        .collect();
    let tt_mask = GateMask::from_classes(&tt_ids);

    let mut sorted: Vec<&TrafficClass> = cfg.classes.iter().collect();
    sorted.sort_by_key(|c| std::cmp::Reverse(c.id));
    let mut classes = Vec::new();
    for c in sorted {
        let preemptable = cfg.preemption.enabled() && !c.is_express();
        let gb_bytes = guardband_bytes(c, preemptable, &cfg.preemption);
        let gb = guardband_windows(&schedule, c.id, gb_bytes, rate)?;
        warnings.extend(gb.warnings.iter().map(|w| format!("{name}: {w}")));
        let cbs = if c.cbs_enabled() {
            let oper = (c.reserved_fraction * rate as f64).round() as u64;
            let (closed, mut gb_total) = closed_time_and_gb(&schedule, c.id, &gb);
            if cfg.slope_guardband == SlopeGuardband::Standard && cfg.preemption.enabled() {
                gb_total = guardband_windows(&schedule, c.id, MAX_LINE_BYTES, rate)?.total();
            }
            let cycle = schedule.cycle();
            let idle = match cfg.slope_scaling {
                SlopeScaling::GateAndGuardband => {
                    scaled_idle_slope_bps(oper, cycle, closed, gb_total)?
                }
                SlopeScaling::GateOnly => scaled_idle_slope_bps(oper, cycle, closed, TimeNs::ZERO)?,
                SlopeScaling::None => oper,
            };
            Some(CbsClassConfig::new(
                c.id,
                oper,
                idle,
                rate,
                cfg.credit_mode,
            )?)
        } else {
            None
        };
        classes.push(PortClass {
            id: c.id,
            kind: c.kind,
            preemptable,
            guardband: gb,
            cbs,
        });
    }

    let holds = if cfg.preemption.mode == FpMode::WithHoldRelease {
        let adv = tx_duration(cfg.preemption.hold_advance_bytes, rate)?;
        let h = hold_windows(&schedule, tt_mask, adv);
        warnings.extend(h.warnings.iter().map(|w| format!("{name}: {w}")));
        h
    } else {
        WindowSet::default()
    };

    Ok((
        PortConfig {
            name,
            node: a,
            peer: b,
            rate_bps: rate,
            propagation: propagation_delay(link.length_m),
            schedule,
            classes,
            fp: cfg.preemption,
            holds,
            tt_mask,
        },
        warnings,
    ))
}

fn boundaries_of(p: &PortConfig) -> Vec<Boundary> {
    let mut out: Vec<Boundary> = p
        .schedule
        .change_offsets()
        .into_iter()
        .map(|offset| Boundary {
            offset,
            kind: EventKind::GateChange,
        })
        .collect();
    let cycle = p.schedule.cycle();
    let mut add = |set: &WindowSet, start: EventKind, end: EventKind| {
        for w in &set.windows {
            if w.len() >= cycle {
                continue;
            }
            out.push(Boundary {
                offset: w.start,
                kind: start,
            });
            out.push(Boundary {
                offset: TimeNs(w.end.0 % cycle.0),
                kind: end,
            });
        }
    };
    for c in &p.classes {
        add(
            &c.guardband,
            EventKind::GuardbandStart,
            EventKind::GuardbandEnd,
        );
    }
    add(&p.holds, EventKind::HoldStart, EventKind::Release);
    out.sort_by_key(|b| (b.offset, b.kind.name()));
    out.dedup_by_key(|b| b.offset);
    out
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let topo = &cfg.topology;
        let mut ports = Vec::new();
        let mut port_names = Vec::new();
        let mut index = HashMap::new();
        let mut warnings = Vec::new();
        for link in &topo.links {
            for (a, b) in [(link.a, link.b), (link.b, link.a)] {
                let (pc, w) = build_port(&cfg, a, b)?;
                warnings.extend(w);
                index.insert((a, b), ports.len());
                port_names.push(pc.name.clone());
                let mut port = EgressPort::new(pc);
                if cfg.tx_log {
                    port.enable_tx_log();
                }
                ports.push(port);
            }
        }
        let mut flow_ports = Vec::new();
        for f in &cfg.flows {
            topo.validate_route(&f.route).map_err(SimError::Routing)?;
            let hops = f.route.windows(2).map(|w| index[&(w[0], w[1])]).collect();
            flow_ports.push(hops);
        }
        let mut rng = SimRng::new(cfg.seed);
        let offsets = cfg
            .flows
            .iter()
            .map(|f| {
                if f.random_offset {
                    TimeNs(rng.below(f.period.0.max(1)))
                } else {
                    f.start_offset
                }
            })
            .collect();
        let traced = port_names
            .iter()
            .map(|n| match cfg.trace.as_ref() {
                None => false,
                Some(TraceOptions { ports: None, .. }) => true,
                Some(TraceOptions {
                    ports: Some(list), ..
                }) => list.contains(n),
            })
            .collect();
        let n_ports = ports.len();
        Ok(Simulation {
            boundaries: ports.iter().map(|p| boundaries_of(p.config())).collect(),
            tracer: cfg.trace.as_ref().map(|t| Tracer::new(t.interval)),
            event_log: cfg.event_log.then(Vec::new),
            stats: vec![FlowStats::new(); cfg.flows.len()],
            reasm: vec![Vec::new(); n_ports],
            settle_at: vec![BTreeSet::new(); n_ports],
            sched: Scheduler::new(),
            ports,
            port_names,
            flow_ports,
            offsets,
            traced,
            warnings,
            cfg,
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn port(&self, name: &str) -> Option<&EgressPort> {
        let i = self.port_names.iter().position(|n| n == name)?;
        Some(&self.ports[i])
    }

    fn request_settle(&mut self, port: usize, t: TimeNs) -> Result<(), SimError> {
        if t > self.cfg.duration || !self.settle_at[port].insert(t) {
            return Ok(());
        }
        self.sched
            .schedule(t, EventKind::TxStart, Payload::Settle { port })
    }

    fn schedule_timer(&mut self, port: usize, idx: usize, cycle: u64) -> Result<(), SimError> {
        let b = &self.boundaries[port];
        if b.is_empty() {
            return Ok(());
        }
        let (idx, cycle) = if idx >= b.len() {
            (0, cycle + 1)
        } else {
            (idx, cycle)
        };
        let len = self.ports[port].config().schedule.cycle().0;
        let t = TimeNs(cycle * len + b[idx].offset.0);
        if t > self.cfg.duration {
            return Ok(());
        }
        self.sched
            .schedule(t, b[idx].kind, Payload::Timer { port, idx, cycle })
    }

    fn schedule_gen(&mut self, flow: usize, seq: u64) -> Result<(), SimError> {
        let f = &self.cfg.flows[flow];
        if f.max_frames.is_some_and(|m| seq >= m) {
            return Ok(());
        }
        let t = TimeNs(self.offsets[flow].0 + seq * f.period.0);
        if t > self.cfg.duration {
            return Ok(());
        }
        self.sched
            .schedule(t, EventKind::FrameGeneration, Payload::Gen { flow, seq })
    }

    fn schedule_tx_end(&mut self, port: usize, f: InFlight) -> Result<(), SimError> {
        self.sched.schedule(
            f.line_end,
            EventKind::TxEnd,
            Payload::TxEnd {
                port,
                generation: f.generation,
            },
        )
    }

    fn trace_port(&mut self, port: usize, t: TimeNs) {
        if !self.traced[port] {
            return;
        }
        let Some(tracer) = self.tracer.as_mut() else {
            return;
        };
        let p = &self.ports[port];
        let tt_gate = p.is_tt_open(t);
        let hold = p.held(t);
        let tx_class = p.in_flight().map(|f| f.unit.frame.class);
        for (i, c) in p.config().classes.iter().enumerate() {
            let Some(cs) = p.credit(c.id) else { continue };
            let v = p.view(i, t);
            let (frames, bytes) = p.backlog(i);
            tracer.push(TraceRecord {
                time: t,
                port: p.config().name.clone(),
                class: c.id,
                credit_nanobits: cs.nanobits(),
                slope_bps: cs.slope(),
                regime: cs.regime(),
                tt_gate,
                class_gate: v.gate_open,
                gb_active: v.guardband,
                hold_active: hold && c.preemptable,
                transmitting: tx_class == Some(c.id),
                backlog_frames: frames,
                backlog_bytes: bytes,
            });
        }
    }

    fn handle(&mut self, t: TimeNs, kind: EventKind, payload: Payload) -> Result<(), SimError> {
        match payload {
            Payload::Gen { flow, seq } => {
                let f = &self.cfg.flows[flow];
                let frame = Frame {
                    flow: f.id,
                    seq,
                    class: f.class,
                    payload_bytes: f.payload_bytes,
                    creation_time: t,
                    hop: 0,
                };
                let port = self.flow_ports[flow][0];
                log(&mut self.event_log, t, kind, || {
                    format!("flow={flow} seq={seq}")
                });
                self.ports[port].enqueue(frame)?;
                self.request_settle(port, t)?;
                self.schedule_gen(flow, seq + 1)?;
            }
            Payload::Timer { port, idx, cycle } => {
                log(&mut self.event_log, t, kind, || {
                    self.port_names[port].clone()
                });
                self.request_settle(port, t)?;
                self.schedule_timer(port, idx + 1, cycle)?;
            }
            Payload::Settle { port } => {
                self.settle_at[port].remove(&t);
                let out = self.ports[port].settle(t)?;
                if let Some(f) = out.cut {
                    log(&mut self.event_log, t, EventKind::HoldStart, || {
                        format!(
                            "{} preempt flow={} seq={}",
                            self.port_names[port], f.unit.frame.flow.0, f.unit.frame.seq
                        )
                    });
                    self.schedule_tx_end(port, f)?;
                }
                if let Some(f) = out.started {
                    log(&mut self.event_log, t, kind, || {
                        format!(
                            "{} flow={} seq={} frag={}",
                            self.port_names[port],
                            f.unit.frame.flow.0,
                            f.unit.frame.seq,
                            f.unit.index
                        )
                    });
                    self.schedule_tx_end(port, f)?;
                }
                for z in out.crossings {
                    self.request_settle(port, z)?;
                }
                self.trace_port(port, t);
            }
            Payload::TxEnd { port, generation } => {
                let Some(frag) = self.ports[port].tx_end(generation) else {
                    return Ok(());
                };
                log(&mut self.event_log, t, kind, || {
                    format!(
                        "{} flow={} seq={} frag={}",
                        self.port_names[port], frag.frame.flow.0, frag.frame.seq, frag.index
                    )
                });
                self.request_settle(port, t)?;
                let final_frag = frag.is_final;
                self.reasm[port].push(frag);
                if final_frag {
                    let key = (frag.frame.flow, frag.frame.seq);
                    let (mine, rest): (Vec<Fragment>, Vec<Fragment>) = self.reasm[port]
                        .drain(..)
                        .partition(|f| (f.frame.flow, f.frame.seq) == key);
                    self.reasm[port] = rest;
                    let frame = reassemble(&mine)?;
                    let at = t + self.ports[port].config().propagation;
                    self.sched
                        .schedule(at, EventKind::RxComplete, Payload::Rx { port, frame })?;
                }
            }
            Payload::Rx { port, frame } => {
                let flow = frame.flow.0;
                let f = &self.cfg.flows[flow];
                let node = self.ports[port].config().peer;
                log(&mut self.event_log, t, kind, || {
                    format!(
                        "{} flow={flow} seq={}",
                        self.cfg.topology.name(node),
                        frame.seq
                    )
                });
                if node == f.destination() {
                    self.stats[flow].record_delivery(
                        frame.flow,
                        frame.seq,
                        frame.creation_time,
                        t,
                    )?;
                } else {
                    let next = Frame {
                        hop: frame.hop + 1,
                        ..frame
                    };
                    let at = t + self.cfg.topology.switch_delay;
                    self.sched.schedule(
                        at,
                        EventKind::ForwardReady,
                        Payload::Forward { frame: next },
                    )?;
                }
            }
            Payload::Forward { frame } => {
                let port = self.flow_ports[frame.flow.0][frame.hop];
                log(&mut self.event_log, t, kind, || {
                    format!(
                        "{} flow={} seq={}",
                        self.port_names[port], frame.flow.0, frame.seq
                    )
                });
                self.ports[port].enqueue(frame)?;
                self.request_settle(port, t)?;
            }
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SimResult, SimError> {
        for p in 0..self.ports.len() {
            self.request_settle(p, TimeNs::ZERO)?;
            self.schedule_timer(p, 0, 0)?;
        }
        for f in 0..self.cfg.flows.len() {
            self.schedule_gen(f, 0)?;
        }
        let until = self.cfg.duration;
        while let Some(ev) = self.sched.pop_until(until) {
            self.handle(ev.time, ev.kind, ev.payload)?;
        }
        Ok(self.finish())
    }

    fn finish(self) -> SimResult {
        let kpis = self
            .cfg
            .flows
            .iter()
            .zip(&self.stats)
            .map(|(f, s)| FlowKpi {
                flow: f.name.clone(),
                class: f.class,
                kind: self
                    .cfg
                    .classes
                    .iter()
                    .find(|c| c.id == f.class)
                    .map_or(TrafficKind::Be, |c| c.kind),
                smd_ns: s.smd().map(|d| d.0),
                smj_ns: s.smj().map(|d| d.0),
                samples: s.count(),
            })
            .collect();
        SimResult {
            kpis,
            ports: self
                .ports
                .iter()
                .map(|p| PortSummary::new(&p.config().name, p.stats()))
                .collect(),
            tx_logs: if self.cfg.tx_log {
                self.ports
                    .iter()
                    .map(|p| (p.config().name.clone(), p.tx_log().to_vec()))
                    .collect()
            } else {
                Vec::new()
            },
            trace: self.tracer.map(Tracer::into_records).unwrap_or_default(),
            event_log: self.event_log.unwrap_or_default(),
            warnings: self.warnings,
            events: self.sched.dispatched(),
            flow_stats: self.stats,
            offsets: self.offsets,
        }
    }
}

/// Convenience wrapper: build and run.
pub fn simulate(cfg: SimConfig) -> Result<SimResult, SimError> {
    Simulation::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Link, Node, NodeKind, PreemptionClass, RATE_100M};

    fn class(
        id: ClassId,
        kind: TrafficKind,
        preemption: PreemptionClass,
        frac: f64,
    ) -> TrafficClass {
        TrafficClass {
            id,
            name: format!("c{id}"),
            kind,
            preemption,
            reserved_fraction: frac,
        }
    }

    fn line_config(length_m: f64) -> SimConfig {
        let node = |n: &str, kind| Node {
            name: n.into(),
            kind,
        };
        let topology = Topology {
            nodes: vec![
                node("a", NodeKind::EndStation),
                node("s", NodeKind::Switch),
                node("b", NodeKind::EndStation),
            ],
            links: vec![
                Link {
                    a: NodeId(0),
                    b: NodeId(1),
                    rate_bps: RATE_100M,
                    length_m,
                },
                Link {
                    a: NodeId(1),
                    b: NodeId(2),
                    rate_bps: RATE_100M,
                    length_m,
                },
            ],
            switch_delay: TimeNs::from_us(4),
        };
        SimConfig {
            topology,
            classes: vec![
                class(7, TrafficKind::Tt, PreemptionClass::Express, 0.0),
                class(6, TrafficKind::Avb, PreemptionClass::Preemptable, 0.5),
                class(0, TrafficKind::Be, PreemptionClass::Preemptable, 0.0),
            ],
            flows: Vec::new(),
            default_schedule: GclSchedule::always_open(TimeNs::from_ms(1)),
            port_schedules: HashMap::new(),
            credit_mode: CreditMode::Nonfrozen,
            preemption: PreemptionConfig::new(FpMode::None),
            slope_scaling: SlopeScaling::None,
            slope_guardband: SlopeGuardband::Standard,
            duration: TimeNs::from_ms(5),
            seed: 1,
            trace: None,
            event_log: false,
            tx_log: true,
        }
    }

    fn flow(id: usize, class: ClassId, payload: u64, offset: TimeNs) -> Flow {
        Flow {
            id: crate::model::FlowId(id),
            name: format!("f{id}"),
            route: vec![NodeId(0), NodeId(1), NodeId(2)],
            class,
            payload_bytes: payload,
            period: TimeNs::from_ms(10),
            start_offset: offset,
            random_offset: false,
            max_frames: Some(1),
            deadline: None,
        }
    }

    #[test]
    fn store_and_forward_latency() {
        let mut cfg = line_config(20.0);
        cfg.flows.push(flow(0, 0, 1500, TimeNs::ZERO));
        let r = simulate(cfg).unwrap();
        // 1542 line bytes at 80 ns, 100 ns of cable per hop, 4 us switch.
        let hop = 123_360 + 100;
        assert_eq!(r.kpis[0].smd_ns, Some(2 * hop + 4_000));
        assert_eq!(r.kpis[0].samples, 1);
    }

    #[test]
    fn forwarding_waits_for_switch_delay() {
        let mut cfg = line_config(0.0);
        cfg.event_log = true;
        // 1208 payload bytes occupy 1250 line bytes: 100 us at 100 Mbps.
        cfg.flows.push(flow(0, 0, 1208, TimeNs::ZERO));
        let r = simulate(cfg).unwrap();
        let rx = r
            .event_log
            .iter()
            .find(|l| l.contains("RxComplete"))
            .unwrap();
        assert!(rx.starts_with("100000 "), "{rx}");
        let fwd = r
            .event_log
            .iter()
            .find(|l| l.contains("ForwardReady"))
            .unwrap();
        assert!(fwd.starts_with("104000 "), "{fwd}");
    }

    #[test]
    fn strict_priority_on_simultaneous_arrival() {
        let mut cfg = line_config(0.0);
        cfg.flows.push(flow(0, 0, 100, TimeNs::from_us(200)));
        cfg.flows.push(flow(1, 7, 100, TimeNs::from_us(200)));
        cfg.flows.push(flow(2, 6, 100, TimeNs::from_us(200)));
        let r = simulate(cfg).unwrap();
        let (_, log) = &r.tx_logs[0];
        let order: Vec<u8> = log.iter().map(|t| t.class).collect();
        assert_eq!(order, vec![7, 6, 0]);
    }

    #[test]
    fn random_offsets_depend_on_seed_only() {
        let mut cfg = line_config(0.0);
        let mut f = flow(0, 6, 200, TimeNs::ZERO);
        f.random_offset = true;
        f.max_frames = None;
        cfg.flows.push(f);
        let a = simulate(cfg.clone()).unwrap();
        let b = simulate(cfg.clone()).unwrap();
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.kpis, b.kpis);
        cfg.seed = 2;
        let c = simulate(cfg).unwrap();
        assert_ne!(a.offsets, c.offsets);
        assert!(a.offsets[0] < TimeNs::from_ms(10));
    }

    #[test]
    fn express_frame_preempts_under_fp() {
        let mut cfg = line_config(0.0);
        cfg.preemption = PreemptionConfig::new(FpMode::WithoutHoldRelease);
        cfg.flows.push(flow(0, 0, 1500, TimeNs::ZERO));
        cfg.flows.push(flow(1, 7, 100, TimeNs::from_us(20)));
        let r = simulate(cfg).unwrap();
        let (_, log) = &r.tx_logs[0];
        let shape: Vec<(u8, u32)> = log.iter().map(|t| (t.class, t.fragment)).collect();
        assert_eq!(shape, vec![(0, 0), (7, 0), (0, 1)]);
        // Cut at byte 250 (20 us / 80 ns), then 4 bytes mCRC + 12 IFG.
        assert_eq!(log[0].end, TimeNs::from_us(20) + TimeNs(16 * 80));
        assert_eq!(r.ports[0].preemptions, 1);
        assert!(r.kpis.iter().all(|k| k.samples == 1));
    }
}
