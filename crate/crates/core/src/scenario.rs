//! Scenario files: a versioned TOML document describing topology, classes,
//! gate schedules, flows and run defaults.
//!
//! ```toml
//! format = "tsnsim/1"
//! name = "example"
//! seed = 1
//! duration = "500ms"
//! credit_mode = "nonfrozen"
//!
//! [preemption]
//! mode = "with-hr"
//!
//! [[class]]
//! id = 7
//! name = "tt"
//! kind = "tt"
//! preemption = "express"
//!
//! [[class]]
//! id = 6
//! name = "avb-a"
//! kind = "avb"
//! preemption = "preemptable"
//! idle_slope_fraction = 0.3
//!
//! [[node]]
//! name = "es1"
//! kind = "end_station"
//!
//! [[link]]
//! a = "es1"
//! b = "sw1"
//! rate_bps = 100000000
//!
//! [[schedule]]
//! name = "main"
//! entries = [
//!   { duration_ns = 100000, open = [7] },
//!   { duration_ns = 900000, open = [6, 0] },
//! ]
//!
//! [[flow]]
//! name = "tt1"
//! src = "es1"
//! dst = "es2"
//! class = 7
//! payload = 100
//! period_ns = 1000000
//! offset_ns = 0          # omitted: drawn from the seed
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cbs::{CreditMode, SlopeGuardband, SlopeScaling};
use crate::error::ScenarioError;
use crate::fp::{FpMode, PreemptionConfig, DEFAULT_HOLD_ADVANCE_BYTES};
use crate::gcl::{GateMask, GclSchedule};
use crate::model::{
    tx_duration, wire_size, ClassId, Flow, FlowId, Link, Node, NodeId, NodeKind, PreemptionClass,
    TimeNs, Topology, TrafficClass, TrafficKind, RATE_100M, RATE_1G,
};
use crate::network::{build_port, SimConfig};

pub const FORMAT: &str = "tsnsim/1";
/// Upper bound on the summed AVB reservation of a port.
pub const MAX_AVB_RESERVATION: f64 = 0.85;
pub const DEFAULT_DURATION: Duration = Duration::from_secs(30);
pub const DEFAULT_SWITCH_DELAY_NS: u64 = 4_000;
pub const DEFAULT_LINK_LENGTH_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_delay_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credit_mode: Option<CreditMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_scaling: Option<SlopeScaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_guardband: Option<SlopeGuardband>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_schedule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preemption: Option<PreemptionSection>,
    #[serde(default, rename = "class")]
    pub classes: Vec<ClassEntry>,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeEntry>,
    #[serde(default, rename = "link")]
    pub links: Vec<LinkEntry>,
    #[serde(default, rename = "schedule")]
    pub schedules: Vec<ScheduleEntry>,
    #[serde(default, rename = "port_schedule")]
    pub port_schedules: Vec<PortScheduleEntry>,
    #[serde(default, rename = "flow")]
    pub flows: Vec<FlowEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreemptionSection {
    pub mode: FpMode,
    #[serde(default = "yes")]
    pub guardband: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_advance_bytes: Option<u64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    pub kind: TrafficKind,
    pub preemption: PreemptionClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_slope_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: String,
    pub b: String,
    pub rate_bps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub name: String,
    pub entries: Vec<GateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateEntry {
    pub duration_ns: u64,
    pub open: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortScheduleEntry {
    pub from: String,
    pub to: String,
    pub schedule: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shift_ns: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub class: ClassId,
    pub payload: u64,
    pub period_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kpi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// A validated scenario together with its resolved simulator configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub origin: String,
    pub config: SimConfig,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: origin.clone(),
            source,
        })?;
        Self::parse(&text, &origin)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Syntax {
            path: match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("{origin}:{line}:{col}")
                }
                None => origin.to_string(),
            },
            message: e.message().to_string(),
        })?;
        Self::from_file(file, origin)
    }

    pub fn from_file(file: ScenarioFile, origin: &str) -> Result<Self, ScenarioError> {
        let (config, warnings) = resolve(&file, origin)?;
        Ok(Scenario {
            file,
            origin: origin.to_string(),
            config,
            warnings,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario files always serialize")
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

pub fn parse_duration(text: &str) -> Result<TimeNs, String> {
    let d = humantime::parse_duration(text).map_err(|e| format!("bad duration '{text}': {e}"))?;
    u64::try_from(d.as_nanos())
        .map(TimeNs)
        .map_err(|_| format!("duration '{text}' is too long"))
}

fn resolve(file: &ScenarioFile, origin: &str) -> Result<(SimConfig, Vec<String>), ScenarioError> {
    let at = |item: String| format!("{origin}: {item}");
    let mut warnings = Vec::new();

    if file.format != FORMAT {
        return Err(ScenarioError::invalid(
            at("format".into()),
            format!("unsupported format '{}', expected '{FORMAT}'", file.format),
        ));
    }

    // Classes.
    let mut classes = Vec::new();
    let mut avb_total = 0.0;
    for (i, c) in file.classes.iter().enumerate() {
        let loc = || at(format!("class[{i}] '{}'", c.name));
        if c.id > 7 {
            return Err(ScenarioError::invalid(
                loc(),
                format!("class id {} is not in 0..=7", c.id),
            ));
        }
        if classes.iter().any(|x: &TrafficClass| x.id == c.id) {
            return Err(ScenarioError::invalid(
                loc(),
                format!("duplicate class id {}", c.id),
            ));
        }
        let fraction = match (c.kind, c.idle_slope_fraction) {
            (TrafficKind::Avb, Some(f)) if f > 0.0 && f < 1.0 => f,
            (TrafficKind::Avb, _) => {
                return Err(ScenarioError::invalid(
                    loc(),
                    "AVB classes need idle_slope_fraction in (0, 1)",
                ))
            }
            (_, Some(_)) => {
                return Err(ScenarioError::invalid(
                    loc(),
                    "only AVB classes reserve bandwidth",
                ));
            }
            (_, None) => 0.0,
        };
        avb_total += fraction;
        classes.push(TrafficClass {
            id: c.id,
            name: c.name.clone(),
            kind: c.kind,
            preemption: c.preemption,
            reserved_fraction: fraction,
        });
    }
    if avb_total > MAX_AVB_RESERVATION + 1e-12 {
        return Err(ScenarioError::invalid(
            at("class".into()),
            format!(
                "AVB reservation {:.1}% of the port rate exceeds the {:.0}% cap",
                avb_total * 100.0,
                MAX_AVB_RESERVATION * 100.0
            ),
        ));
    }
    let class_ids: HashSet<ClassId> = classes.iter().map(|c| c.id).collect();
    let kind_mask = |kind: TrafficKind| {
        GateMask::from_classes(
            &classes
                .iter()
                .filter(|c| c.kind == kind)
                .map(|c| c.id)
                .collect::<Vec<_>>(),
        )
    };

    // Nodes and links.
    let mut nodes = Vec::new();
    let mut by_name: HashMap<&str, NodeId> = HashMap::new();
    for (i, n) in file.nodes.iter().enumerate() {
        if by_name.insert(n.name.as_str(), NodeId(i)).is_some() {
            return Err(ScenarioError::invalid(
                at(format!("node[{i}]")),
                format!("duplicate node '{}'", n.name),
            ));
        }
        nodes.push(Node {
            name: n.name.clone(),
            kind: n.kind,
        });
    }
    let node = |name: &str, loc: &dyn Fn() -> String| {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| ScenarioError::invalid(loc(), format!("unknown node '{name}'")))
    };
    let mut links: Vec<Link> = Vec::new();
    for (i, l) in file.links.iter().enumerate() {
        let loc = || at(format!("link[{i}] {}-{}", l.a, l.b));
        let (a, b) = (node(&l.a, &loc)?, node(&l.b, &loc)?);
        if a == b {
            return Err(ScenarioError::invalid(
                loc(),
                "link connects a node to itself",
            ));
        }
        if l.rate_bps != RATE_100M && l.rate_bps != RATE_1G {
            return Err(ScenarioError::invalid(
                loc(),
                format!(
                    "unsupported rate {} bit/s (use 100000000 or 1000000000)",
                    l.rate_bps
                ),
            ));
        }
        if links.iter().any(|x| x.connects(a, b)) {
            return Err(ScenarioError::invalid(loc(), "duplicate link"));
        }
        let length_m = l.length_m.unwrap_or(DEFAULT_LINK_LENGTH_M);
        if !(length_m >= 0.0 && length_m.is_finite()) {
            return Err(ScenarioError::invalid(
                loc(),
                "link length must be non-negative",
            ));
        }
        links.push(Link {
            a,
            b,
            rate_bps: l.rate_bps,
            length_m,
        });
    }
    let topology = Topology {
        nodes,
        links,
        switch_delay: TimeNs(file.switch_delay_ns.unwrap_or(DEFAULT_SWITCH_DELAY_NS)),
    };

    // Schedules.
    let tt_mask = kind_mask(TrafficKind::Tt);
    let avb_mask = kind_mask(TrafficKind::Avb);
    let mut schedules: HashMap<&str, GclSchedule> = HashMap::new();
    for (i, s) in file.schedules.iter().enumerate() {
        let loc = || at(format!("schedule[{i}] '{}'", s.name));
        let mut entries = Vec::new();
        for e in &s.entries {
            if let Some(c) = e.open.iter().find(|c| !class_ids.contains(c)) {
                return Err(ScenarioError::invalid(loc(), format!("unknown class {c}")));
            }
            entries.push((TimeNs(e.duration_ns), GateMask::from_classes(&e.open)));
        }
        let gcl = GclSchedule::from_durations(&entries)
            .map_err(|e| ScenarioError::invalid(loc(), e.to_string()))?;
        gcl.check_exclusive(tt_mask, avb_mask)
            .map_err(|e| ScenarioError::invalid(loc(), e.to_string()))?;
        if schedules.insert(s.name.as_str(), gcl).is_some() {
            return Err(ScenarioError::invalid(loc(), "duplicate schedule name"));
        }
    }
    let lookup = |name: &str, loc: &dyn Fn() -> String| {
        schedules
            .get(name)
            .cloned()
            .ok_or_else(|| ScenarioError::invalid(loc(), format!("unknown schedule '{name}'")))
    };
    let default_schedule = match &file.default_schedule {
        Some(name) => lookup(name, &|| at("default_schedule".into()))?,
        None => GclSchedule::always_open(TimeNs::from_ms(1)),
    };
    let mut port_schedules = HashMap::new();
    for (i, p) in file.port_schedules.iter().enumerate() {
        let loc = || at(format!("port_schedule[{i}] {}->{}", p.from, p.to));
        let (a, b) = (node(&p.from, &loc)?, node(&p.to, &loc)?);
        if topology.link_between(a, b).is_none() {
            return Err(ScenarioError::invalid(loc(), "no such link"));
        }
        let s = lookup(&p.schedule, &loc)?;
        if port_schedules
            .insert((a, b), s.shifted(TimeNs(p.shift_ns)))
            .is_some()
        {
            return Err(ScenarioError::invalid(loc(), "port already has a schedule"));
        }
    }

    // Flows.
    let mut flows = Vec::new();
    let mut flow_names = HashSet::new();
    for (i, f) in file.flows.iter().enumerate() {
        let loc = || at(format!("flow[{i}] '{}'", f.name));
        if !flow_names.insert(f.name.as_str()) {
            return Err(ScenarioError::invalid(loc(), "duplicate flow name"));
        }
        let (src, dst) = (node(&f.src, &loc)?, node(&f.dst, &loc)?);
        for n in [src, dst] {
            if topology.nodes[n.0].kind != NodeKind::EndStation {
                return Err(ScenarioError::invalid(
                    loc(),
                    format!("'{}' is not an end station", topology.name(n)),
                ));
            }
        }
        if !class_ids.contains(&f.class) {
            return Err(ScenarioError::invalid(
                loc(),
                format!("unknown class {}", f.class),
            ));
        }
        wire_size(f.payload).map_err(|e| ScenarioError::invalid(loc(), e.to_string()))?;
        if f.period_ns == 0 {
            return Err(ScenarioError::invalid(loc(), "period must be positive"));
        }
        let route = match &f.route {
            Some(names) => {
                let r = names
                    .iter()
                    .map(|n| node(n, &loc))
                    .collect::<Result<Vec<_>, _>>()?;
                if r.first() != Some(&src) || r.last() != Some(&dst) {
                    return Err(ScenarioError::invalid(
                        loc(),
                        "route must start at src and end at dst",
                    ));
                }
                r
            }
            None => topology
                .shortest_path(src, dst)
                .ok_or_else(|| ScenarioError::invalid(loc(), "destination unreachable"))?,
        };
        topology
            .validate_route(&route)
            .map_err(|e| ScenarioError::invalid(loc(), e))?;
        flows.push(Flow {
            id: FlowId(i),
            name: f.name.clone(),
            route,
            class: f.class,
            payload_bytes: f.payload,
            period: TimeNs(f.period_ns),
            start_offset: TimeNs(f.offset_ns.unwrap_or(0)),
            random_offset: f.offset_ns.is_none(),
            max_frames: f.count,
            deadline: f.deadline_ns.map(TimeNs),
        });
    }

    let mut preemption = PreemptionConfig::new(FpMode::None);
    if let Some(p) = &file.preemption {
        preemption = PreemptionConfig::new(p.mode);
        preemption.guardband = p.guardband;
        preemption.hold_advance_bytes = p.hold_advance_bytes.unwrap_or(DEFAULT_HOLD_ADVANCE_BYTES);
    }
    let duration = match &file.duration {
        Some(d) => {
            parse_duration(d).map_err(|e| ScenarioError::invalid(at("duration".into()), e))?
        }
        None => TimeNs(DEFAULT_DURATION.as_nanos() as u64),
    };

    let config = SimConfig {
        topology,
        classes,
        flows,
        default_schedule,
        port_schedules,
        credit_mode: file.credit_mode.unwrap_or(CreditMode::Nonfrozen),
        preemption,
        slope_scaling: file.slope_scaling.unwrap_or_default(),
        slope_guardband: file.slope_guardband.unwrap_or_default(),
        duration,
        seed: file.seed,
        trace: None,
        event_log: false,
        tx_log: false,
    };
    warnings.extend(check_ports(&config, origin)?);
    warnings.extend(tt_load_warnings(&config));
    Ok((config, warnings))
}

/// Builds every port once to surface slope and guardband problems early.
pub fn check_ports(cfg: &SimConfig, origin: &str) -> Result<Vec<String>, ScenarioError> {
    let mut warnings = Vec::new();
    for l in &cfg.topology.links {
        for (a, b) in [(l.a, l.b), (l.b, l.a)] {
            let (_, w) = build_port(cfg, a, b).map_err(|e| {
                ScenarioError::invalid(
                    format!(
                        "{origin}: port {}->{}",
                        cfg.topology.name(a),
                        cfg.topology.name(b)
                    ),
                    e.to_string(),
                )
            })?;
            warnings.extend(w);
        }
    }
    Ok(warnings)
}

/// Warns when the time-triggered bytes of one cycle cannot fit the open
/// time-triggered window of a port.
fn tt_load_warnings(cfg: &SimConfig) -> Vec<String> {
    let tt: HashSet<ClassId> = cfg
        .classes
        .iter()
        .filter(|c| c.kind == TrafficKind::Tt)
        .map(|c| c.id)
        .collect();
    let mut load: HashMap<(NodeId, NodeId), u64> = HashMap::new();
    for f in cfg.flows.iter().filter(|f| tt.contains(&f.class)) {
        for w in f.route.windows(2) {
            let sched = cfg
                .port_schedules
                .get(&(w[0], w[1]))
                .unwrap_or(&cfg.default_schedule);
            let per_cycle = sched.cycle().0.div_ceil(f.period.0);
            let line = wire_size(f.payload_bytes).unwrap_or(0) + crate::model::LINE_OVERHEAD_BYTES;
            *load.entry((w[0], w[1])).or_default() += per_cycle * line;
        }
    }
    let mut out = Vec::new();
    let mut keys: Vec<_> = load.keys().copied().collect();
    keys.sort();
    for (a, b) in keys {
        let sched = cfg
            .port_schedules
            .get(&(a, b))
            .unwrap_or(&cfg.default_schedule);
        let rate = cfg
            .topology
            .link_between(a, b)
            .map_or(RATE_100M, |l| l.rate_bps);
        let open: u64 = sched
            .entries()
            .iter()
            .filter(|e| tt.iter().any(|c| e.open.is_open(*c)))
            .map(|e| e.duration.0)
            .sum();
        let need = tx_duration(load[&(a, b)], rate).unwrap_or(TimeNs::MAX);
        if need.0 > open {
            out.push(format!(
                "{}->{}: time-triggered traffic needs {} per cycle but its gate is open {}",
                cfg.topology.name(a),
                cfg.topology.name(b),
                need,
                TimeNs(open)
            ));
        }
    }
    out
}
