//! Per-flow delay/jitter accumulation and credit/gate time-series traces.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::cbs::{Regime, NANOBITS_PER_BIT, NANOBITS_PER_MILLIBIT};
use crate::error::SimError;
use crate::model::{ClassId, FlowId, TimeNs, TrafficKind};

/// End-to-end delay samples of one flow, keyed by sequence number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    samples: BTreeMap<u64, TimeNs>,
}

impl FlowStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_delivery(
        &mut self,
        flow: FlowId,
        seq: u64,
        send_t: TimeNs,
        recv_t: TimeNs,
    ) -> Result<(), SimError> {
        let delay = recv_t.checked_sub(send_t).ok_or(SimError::NegativeDelay {
            flow: flow.0,
            sent: send_t,
            received: recv_t,
        })?;
        self.samples.insert(seq, delay);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    /// Delays in sequence order.
    pub fn samples(&self) -> impl Iterator<Item = TimeNs> + '_ {
        self.samples.values().copied()
    }

    /// Maximum delay.
    pub fn smd(&self) -> Option<TimeNs> {
        self.samples.values().copied().max()
    }

    /// Maximum absolute difference of consecutive (by sequence) delays.
    pub fn smj(&self) -> Option<TimeNs> {
        smj_of(self.samples.values().copied())
    }
}

/// Jitter of an ordered delay series; `None` with fewer than two samples.
pub fn smj_of(samples: impl IntoIterator<Item = TimeNs>) -> Option<TimeNs> {
    let mut it = samples.into_iter();
    let mut prev = it.next()?;
    let mut best: Option<TimeNs> = None;
    for d in it {
        let diff = TimeNs(d.0.abs_diff(prev.0));
        best = Some(best.map_or(diff, |b| b.max(diff)));
        prev = d;
    }
    best
}

/// One row of the per-flow KPI table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowKpi {
    pub flow: String,
    pub class: ClassId,
    pub kind: TrafficKind,
    pub smd_ns: Option<u64>,
    pub smj_ns: Option<u64>,
    pub samples: usize,
}

pub fn write_kpi_csv<W: Write>(out: W, rows: &[FlowKpi]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flow", "class", "kind", "smd_ns", "smj_ns", "samples"])?;
    for r in rows {
        w.write_record([
            r.flow.clone(),
            r.class.to_string(),
            kind_str(r.kind).to_string(),
            opt(r.smd_ns),
            opt(r.smj_ns),
            r.samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn kind_str(k: TrafficKind) -> &'static str {
    match k {
        TrafficKind::Tt => "tt",
        TrafficKind::Avb => "avb",
        TrafficKind::Be => "be",
    }
}

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Largest SMD and SMJ among flows of one traffic kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KindMaxima {
    pub flows: usize,
    pub max_smd_ns: Option<u64>,
    pub max_smj_ns: Option<u64>,
}

pub fn maxima(rows: &[FlowKpi], kind: TrafficKind) -> KindMaxima {
    rows.iter()
        .filter(|r| r.kind == kind)
        .fold(KindMaxima::default(), |acc, r| KindMaxima {
            flows: acc.flows + 1,
            max_smd_ns: acc.max_smd_ns.max(r.smd_ns),
            max_smj_ns: acc.max_smj_ns.max(r.smj_ns),
        })
}

/// Credit and gate state of one (port, class) from `time` until the next
/// record of the same pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: TimeNs,
    pub port: String,
    pub class: ClassId,
    /// Exact credit in nanobits.
    pub credit_nanobits: i128,
    pub slope_bps: i64,
    pub regime: Regime,
    pub tt_gate: bool,
    pub class_gate: bool,
    pub gb_active: bool,
    pub hold_active: bool,
    pub transmitting: bool,
    pub backlog_frames: usize,
    pub backlog_bytes: u64,
}

impl TraceRecord {
    pub fn credit_bits(&self) -> f64 {
        self.credit_nanobits as f64 / NANOBITS_PER_BIT as f64
    }

    pub fn credit_millibits(&self) -> i128 {
        self.credit_nanobits.div_euclid(NANOBITS_PER_MILLIBIT)
    }

    /// Piecewise-linear credit at `t >= self.time`.
    pub fn credit_at(&self, t: TimeNs) -> i128 {
        self.credit_nanobits + self.slope_bps as i128 * (t.0 as i128 - self.time.0 as i128)
    }

    fn same_state(&self, other: &TraceRecord) -> bool {
        self.slope_bps == other.slope_bps
            && self.regime == other.regime
            && self.tt_gate == other.tt_gate
            && self.class_gate == other.class_gate
            && self.gb_active == other.gb_active
            && self.hold_active == other.hold_active
            && self.transmitting == other.transmitting
            && self.backlog_frames == other.backlog_frames
            && other.credit_nanobits == self.credit_at(other.time)
    }
}

impl serde::Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Collects trace records at every state change, plus optional periodic
/// samples interpolated from the piecewise-linear credit.
#[derive(Debug, Clone, Default)]
pub struct Tracer {
    interval: Option<TimeNs>,
    records: Vec<TraceRecord>,
    last: BTreeMap<(String, ClassId), usize>,
}

impl Tracer {
    pub fn new(interval: Option<TimeNs>) -> Self {
        Tracer {
            interval: interval.filter(|i| i.0 > 0),
            ..Default::default()
        }
    }

    pub fn push(&mut self, rec: TraceRecord) {
        let key = (rec.port.clone(), rec.class);
        if let Some(&i) = self.last.get(&key) {
            let prev = self.records[i].clone();
            if prev.time == rec.time {
                // Same instant: keep the settled value only.
                if prev == rec {
                    return;
                }
                self.records[i] = rec;
                return;
            }
            if let Some(step) = self.interval {
                let mut t = TimeNs((prev.time.0 / step.0 + 1) * step.0);
                while t < rec.time {
                    self.records.push(TraceRecord {
                        time: t,
                        credit_nanobits: prev.credit_at(t),
                        ..prev.clone()
                    });
                    t += step;
                }
            } else if prev.same_state(&rec) {
                return;
            }
        }
        self.last.insert(key, self.records.len());
        self.records.push(rec);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time_ns",
        "port",
        "class",
        "credit_bits",
        "credit_millibits",
        "slope_bps",
        "regime",
        "tt_gate",
        "class_gate",
        "gb_active",
        "hold_active",
        "transmitting",
        "backlog_frames",
        "backlog_bytes",
    ])?;
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    for r in records {
        w.write_record([
            r.time.0.to_string(),
            r.port.clone(),
            r.class.to_string(),
            format!("{:.3}", r.credit_bits()),
            r.credit_millibits().to_string(),
            r.slope_bps.to_string(),
            r.regime.as_str().to_string(),
            b(r.tt_gate),
            b(r.class_gate),
            b(r.gb_active),
            b(r.hold_active),
            b(r.transmitting),
            r.backlog_frames.to_string(),
            r.backlog_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(v: u64) -> TimeNs {
        TimeNs::from_us(v)
    }

    fn stats(delays: &[u64]) -> FlowStats {
        let mut s = FlowStats::new();
        for (i, d) in delays.iter().enumerate() {
            s.record_delivery(FlowId(0), i as u64, us(0), us(*d))
                .unwrap();
        }
        s
    }

    #[test]
    fn smd_and_smj() {
        let s = stats(&[100, 110, 105]);
        assert_eq!(s.smd(), Some(us(110)));
        assert_eq!(s.smj(), Some(us(10)));
        let flat = stats(&[80, 80, 80]);
        assert_eq!(flat.smj(), Some(TimeNs::ZERO));
        let one = stats(&[42]);
        assert_eq!(one.smd(), Some(us(42)));
        assert_eq!(one.smj(), None);
        assert_eq!(FlowStats::new().smd(), None);
    }

    #[test]
    fn delivery_order_uses_sequence() {
        let mut s = FlowStats::new();
        s.record_delivery(FlowId(1), 2, us(0), us(105)).unwrap();
        s.record_delivery(FlowId(1), 0, us(0), us(100)).unwrap();
        s.record_delivery(FlowId(1), 1, us(0), us(110)).unwrap();
        assert_eq!(
            s.samples().collect::<Vec<_>>(),
            vec![us(100), us(110), us(105)]
        );
        assert_eq!(s.smj(), Some(us(10)));
    }

    #[test]
    fn negative_delay_rejected() {
        let mut s = FlowStats::new();
        assert!(matches!(
            s.record_delivery(FlowId(3), 0, us(10), us(5)),
            Err(SimError::NegativeDelay { flow: 3, .. })
        ));
        s.record_delivery(FlowId(0), 0, us(0), us(150)).unwrap();
        assert_eq!(s.smd(), Some(us(150)));
    }

    #[test]
    fn reordering_changes_smj_not_smd() {
        let a = [100u64, 300, 100, 300];
        let b = [100u64, 100, 300, 300];
        let (sa, sb) = (stats(&a), stats(&b));
        assert_eq!(sa.smd(), sb.smd());
        assert_eq!(sa.smj(), Some(us(200)));
        assert_eq!(sb.smj(), Some(us(200)));
        let c = [100u64, 150, 200, 250];
        let d = [100u64, 250, 150, 200];
        assert_eq!(stats(&c).smd(), stats(&d).smd());
        assert_ne!(stats(&c).smj(), stats(&d).smj());
    }

    fn rec(t: u64, credit: i128, slope: i64) -> TraceRecord {
        TraceRecord {
            time: TimeNs(t),
            port: "p".into(),
            class: 6,
            credit_nanobits: credit,
            slope_bps: slope,
            regime: Regime::Accumulating,
            tt_gate: false,
            class_gate: true,
            gb_active: false,
            hold_active: false,
            transmitting: false,
            backlog_frames: 1,
            backlog_bytes: 100,
        }
    }

    #[test]
    fn tracer_interpolates_samples() {
        let mut tr = Tracer::new(Some(TimeNs(10)));
        tr.push(rec(0, -1000, 1));
        tr.push(rec(35, -965, 0));
        let times: Vec<u64> = tr.records().iter().map(|r| r.time.0).collect();
        assert_eq!(times, vec![0, 10, 20, 30, 35]);
        assert_eq!(tr.records()[2].credit_nanobits, -980);
    }

    #[test]
    fn tracer_drops_redundant_records() {
        let mut tr = Tracer::new(None);
        tr.push(rec(0, -1000, 1));
        tr.push(rec(500, -500, 1));
        tr.push(rec(600, -400, 0));
        assert_eq!(tr.records().len(), 2);
    }

    #[test]
    fn kpi_csv_layout() {
        let rows = vec![FlowKpi {
            flow: "tt1".into(),
            class: 7,
            kind: TrafficKind::Tt,
            smd_ns: Some(1000),
            smj_ns: None,
            samples: 1,
        }];
        let mut buf = Vec::new();
        write_kpi_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "flow,class,kind,smd_ns,smj_ns,samples\ntt1,7,tt,1000,,1\n"
        );
        let m = maxima(&rows, TrafficKind::Tt);
        assert_eq!(m.max_smd_ns, Some(1000));
    }
}
