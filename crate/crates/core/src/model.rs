//! Shared domain types: time, traffic classes, flows, frames, fragments and
//! the network graph, plus the framing-size arithmetic everything else uses.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// MAC header (14) + VLAN tag (4) + FCS (4).
pub const MAC_OVERHEAD_BYTES: u64 = 22;
/// Preamble (7) + SFD (1).
pub const PREAMBLE_BYTES: u64 = 8;
/// Inter-frame gap.
pub const IFG_BYTES: u64 = 12;
/// Bytes on the line that are not part of the MAC frame.
pub const LINE_OVERHEAD_BYTES: u64 = PREAMBLE_BYTES + IFG_BYTES;
pub const FCS_BYTES: u64 = 4;

pub const MIN_PAYLOAD: u64 = 64;
pub const MAX_PAYLOAD: u64 = 1500;

/// Line occupancy of the largest legal frame (1500-byte payload).
pub const MAX_LINE_BYTES: u64 = MAX_PAYLOAD + MAC_OVERHEAD_BYTES + LINE_OVERHEAD_BYTES;

pub const RATE_100M: u64 = 100_000_000;
pub const RATE_1G: u64 = 1_000_000_000;

/// Cable propagation delay per meter.
pub const PROPAGATION_NS_PER_M: f64 = 5.0;

/// Simulation time in integer nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeNs(pub u64);

impl TimeNs {
    pub const ZERO: TimeNs = TimeNs(0);
    pub const MAX: TimeNs = TimeNs(u64::MAX);

    pub const fn from_us(us: u64) -> Self {
        TimeNs(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        TimeNs(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: TimeNs) -> Option<TimeNs> {
        self.0.checked_sub(rhs.0).map(TimeNs)
    }
}

impl Add for TimeNs {
    type Output = TimeNs;
    fn add(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 + rhs.0)
    }
}

impl AddAssign for TimeNs {
    fn add_assign(&mut self, rhs: TimeNs) {
        self.0 += rhs.0;
    }
}

impl Sub for TimeNs {
    type Output = TimeNs;
    fn sub(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 - rhs.0)
    }
}

impl fmt::Display for TimeNs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    Tt,
    Avb,
    Be,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreemptionClass {
    Express,
    Preemptable,
}

/// Priority (0..=7, higher is more urgent).
pub type ClassId = u8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficClass {
    pub id: ClassId,
    pub name: String,
    pub kind: TrafficKind,
    pub preemption: PreemptionClass,
    /// Reserved bandwidth as a fraction of the port rate (AVB only).
    pub reserved_fraction: f64,
}

impl TrafficClass {
    pub fn cbs_enabled(&self) -> bool {
        self.kind == TrafficKind::Avb
    }

    pub fn is_express(&self) -> bool {
        self.preemption == PreemptionClass::Express
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    EndStation,
    Switch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub rate_bps: u64,
    pub length_m: f64,
}

impl Link {
    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// Undirected graph of end stations and switches joined by full-duplex links.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub switch_delay: TimeNs,
}

impl Topology {
    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn link_between(&self, x: NodeId, y: NodeId) -> Option<&Link> {
        self.links.iter().find(|l| l.connects(x, y))
    }

    /// Neighbors in ascending node order.
    pub fn neighbors(&self, n: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .links
            .iter()
            .filter_map(|l| {
                if l.a == n {
                    Some(l.b)
                } else if l.b == n {
                    Some(l.a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Breadth-first shortest path; ties go to the lower node index.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        let mut prev = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        seen[src.0] = true;
        queue.push_back(src);
        while let Some(n) = queue.pop_front() {
            if n == dst {
                break;
            }
            for m in self.neighbors(n) {
                // Frames are only relayed by switches.
                if m != dst && self.nodes[m.0].kind == NodeKind::EndStation {
                    continue;
                }
                if !seen[m.0] {
                    seen[m.0] = true;
                    prev[m.0] = Some(n);
                    queue.push_back(m);
                }
            }
        }
        if !seen[dst.0] {
            return None;
        }
        let mut path = vec![dst];
        let mut cur = dst;
        while let Some(p) = prev[cur.0] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    /// Checks that `route` is a simple path along existing edges.
    pub fn validate_route(&self, route: &[NodeId]) -> Result<(), String> {
        if route.len() < 2 {
            return Err("route needs at least two nodes".into());
        }
        for (i, n) in route.iter().enumerate() {
            if route[..i].contains(n) {
                return Err(format!("node '{}' visited twice", self.name(*n)));
            }
        }
        for w in route.windows(2) {
            if self.link_between(w[0], w[1]).is_none() {
                return Err(format!(
                    "no link between '{}' and '{}'",
                    self.name(w[0]),
                    self.name(w[1])
                ));
            }
        }
        for n in &route[1..route.len() - 1] {
            if self.nodes[n.0].kind != NodeKind::Switch {
                return Err(format!(
                    "intermediate node '{}' is not a switch",
                    self.name(*n)
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub name: String,
    pub route: Vec<NodeId>,
    pub class: ClassId,
    pub payload_bytes: u64,
    pub period: TimeNs,
    pub start_offset: TimeNs,
    /// Draw the offset from the run seed instead of using `start_offset`.
    pub random_offset: bool,
    /// Stop after this many frames.
    pub max_frames: Option<u64>,
    pub deadline: Option<TimeNs>,
}

impl Flow {
    pub fn source(&self) -> NodeId {
        self.route[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.route.last().expect("validated route")
    }

    pub fn creation_time(&self, seq: u64) -> TimeNs {
        TimeNs(self.start_offset.0 + seq * self.period.0)
    }
}

/// One frame instance of a flow travelling through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub flow: FlowId,
    pub seq: u64,
    pub class: ClassId,
    pub payload_bytes: u64,
    pub creation_time: TimeNs,
    /// Index into the flow route of the node currently holding the frame.
    pub hop: usize,
}

impl Frame {
    /// MAC frame bytes including FCS.
    pub fn mac_bytes(&self) -> u64 {
        self.payload_bytes + MAC_OVERHEAD_BYTES
    }

    /// MAC bytes excluding the FCS; this is the stream fragmentation splits.
    pub fn data_bytes(&self) -> u64 {
        self.mac_bytes() - FCS_BYTES
    }
}

/// A piece of a frame as it appears on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fragment {
    pub frame: Frame,
    pub index: u32,
    /// Offset of this fragment's data within the parent's data stream.
    pub data_offset: u64,
    pub data_bytes: u64,
    pub is_final: bool,
}

impl Fragment {
    /// Data plus the trailing mCRC (non-final) or FCS (final).
    pub fn on_wire_bytes(&self) -> u64 {
        self.data_bytes + FCS_BYTES
    }
}

fn check_rate(rate_bps: u64) -> Result<(), ConfigError> {
    if rate_bps == RATE_100M || rate_bps == RATE_1G {
        Ok(())
    } else {
        Err(ConfigError::UnsupportedRate(rate_bps))
    }
}

/// MAC frame size for a payload.
pub fn wire_size(payload_bytes: u64) -> Result<u64, ConfigError> {
    if !(MIN_PAYLOAD..=MAX_PAYLOAD).contains(&payload_bytes) {
        return Err(ConfigError::PayloadOutOfRange(payload_bytes));
    }
    Ok(payload_bytes + MAC_OVERHEAD_BYTES)
}

/// Line occupancy for a payload: MAC frame plus preamble, SFD and IFG.
pub fn line_size(payload_bytes: u64) -> Result<u64, ConfigError> {
    Ok(wire_size(payload_bytes)? + LINE_OVERHEAD_BYTES)
}

/// Nanoseconds per byte at a supported rate.
pub fn byte_time(rate_bps: u64) -> Result<TimeNs, ConfigError> {
    check_rate(rate_bps)?;
    Ok(TimeNs(8_000_000_000 / rate_bps))
}

pub fn tx_duration(line_bytes: u64, rate_bps: u64) -> Result<TimeNs, ConfigError> {
    Ok(TimeNs(line_bytes * byte_time(rate_bps)?.0))
}

pub fn propagation_delay(length_m: f64) -> TimeNs {
    TimeNs((length_m.max(0.0) * PROPAGATION_NS_PER_M).round() as u64)
}
