//! Reference model of a single 1 Gbit/s egress port. It shares no code with
//! the simulator: time advances one nanosecond per step, every rule is
//! re-evaluated at every step, and preemption walks the line byte by byte
//! until the first legal cut.

use std::collections::VecDeque;

use rand::Rng;

const RATE: u64 = 1_000_000_000;
const NS_PER_BYTE: u64 = 8;
const PREAMBLE: u64 = 8;
const FCS: u64 = 4;
const IFG: u64 = 12;
const MIN_FRAG_DATA: u64 = 60;
const MIN_PREEMPTABLE_MAC: u64 = 124;
const MAX_FRAME_LINE: u64 = 1542;
const SMALL_FRAME_LINE: u64 = 143;
const HOLD_ADVANCE: u64 = 159;
/// Class ids in priority order; indices below refer to this table.
const CLASSES: [u8; 3] = [7, 6, 0];
const TT: usize = 0;
const AVB: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nonfrozen,
    Frozen,
    ReturnToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fp {
    None,
    WithHr,
    WithoutHr,
}

#[derive(Debug, Clone)]
pub struct Micro {
    pub mode: Mode,
    pub fp: Fp,
    pub guardband: bool,
    pub avb_express: bool,
    pub avb_percent: u64,
    /// (length, is TT window), alternating, so no two neighbours share a mask.
    pub entries: Vec<(u64, bool)>,
    /// (class id, payload, arrival); one single-frame flow each.
    pub frames: Vec<(u8, u64, u64)>,
    pub duration: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tx {
    pub class: u8,
    pub flow: usize,
    pub fragment: u32,
    pub data: u64,
    pub last: bool,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    flow: usize,
    class: usize,
    index: u32,
    data: u64,
}

#[derive(Debug, Clone, Copy)]
struct Flight {
    unit: Unit,
    start: u64,
    end: u64,
    preemptable: bool,
    cut: Option<u64>,
}

impl Micro {
    pub fn random(rng: &mut impl Rng) -> Micro {
        let mode = [Mode::Nonfrozen, Mode::Frozen, Mode::ReturnToZero][rng.gen_range(0..3)];
        let fp = [Fp::None, Fp::WithHr, Fp::WithoutHr][rng.gen_range(0..3)];
        let tt_first = rng.gen_bool(0.5);
        let mut entries = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            let tt = (rng.gen_range(4_000..20_000), true);
            let other = (rng.gen_range(14_000..60_000), false);
            if tt_first {
                entries.extend([tt, other]);
            } else {
                entries.extend([other, tt]);
            }
        }
        let cycle: u64 = entries.iter().map(|e| e.0).sum();
        let frames = (0..rng.gen_range(1..=6))
            .map(|_| {
                let class = [7, 6, 6, 0][rng.gen_range(0..4)];
                let payload = if class == 7 || rng.gen_bool(0.3) {
                    rng.gen_range(64..=160)
                } else {
                    rng.gen_range(64..=1500)
                };
                (class, payload, rng.gen_range(0..2 * cycle))
            })
            .collect();
        Micro {
            mode,
            fp,
            guardband: rng.gen_bool(0.7),
            avb_express: rng.gen_bool(0.25),
            avb_percent: rng.gen_range(10..=60),
            entries,
            frames,
            duration: 5_000_000,
        }
    }

    pub fn cycle(&self) -> u64 {
        self.entries.iter().map(|e| e.0).sum()
    }

    pub fn toml(&self) -> String {
        let mode = match self.mode {
            Mode::Nonfrozen => "nonfrozen",
            Mode::Frozen => "frozen",
            Mode::ReturnToZero => "return-to-zero",
        };
        let fp = match self.fp {
            Fp::None => "none",
            Fp::WithHr => "with-hr",
            Fp::WithoutHr => "without-hr",
        };
        let mut s = format!(
            "format = \"tsnsim/1\"\nname = \"micro\"\nseed = 1\nduration = \"{}ns\"\n\
             credit_mode = \"{mode}\"\nslope_scaling = \"none\"\ndefault_schedule = \"s\"\n\n\
             [preemption]\nmode = \"{fp}\"\nguardband = {}\n\n\
             [[class]]\nid = 7\nname = \"tt\"\nkind = \"tt\"\npreemption = \"express\"\n\n\
             [[class]]\nid = 6\nname = \"avb\"\nkind = \"avb\"\npreemption = \"{}\"\nidle_slope_fraction = {}\n\n\
             [[class]]\nid = 0\nname = \"be\"\nkind = \"be\"\npreemption = \"preemptable\"\n\n\
             [[node]]\nname = \"a\"\nkind = \"end_station\"\n\n\
             [[node]]\nname = \"b\"\nkind = \"end_station\"\n\n\
             [[link]]\na = \"a\"\nb = \"b\"\nrate_bps = {RATE}\n\n\
             [[schedule]]\nname = \"s\"\nentries = [\n",
            self.duration,
            self.guardband,
            if self.avb_express { "express" } else { "preemptable" },
            self.avb_percent as f64 / 100.0,
        );
        for &(len, tt) in &self.entries {
            let open = if tt { "[7]" } else { "[6, 0]" };
            s += &format!("  {{ duration_ns = {len}, open = {open} }},\n");
        }
        s += "]\n";
        for (i, &(class, payload, at)) in self.frames.iter().enumerate() {
            s += &format!(
                "\n[[flow]]\nname = \"f{i}\"\nsrc = \"a\"\ndst = \"b\"\nclass = {class}\npayload = {payload}\n\
                 period_ns = 10000000\noffset_ns = {at}\ncount = 1\n"
            );
        }
        s
    }

    fn preemptable(&self, c: usize) -> bool {
        self.fp != Fp::None && (c == 2 || (c == AVB && !self.avb_express))
    }

    fn guardband_ns(&self, c: usize) -> u64 {
        let bytes = if c == TT {
            0
        } else if !self.preemptable(c) {
            MAX_FRAME_LINE
        } else {
            match self.fp {
                Fp::WithoutHr if self.guardband => SMALL_FRAME_LINE,
                Fp::WithoutHr => 0,
                _ => HOLD_ADVANCE,
            }
        };
        bytes * NS_PER_BYTE
    }

    /// Transmission timeline of the port, in completion order.
    pub fn run(&self) -> Vec<Tx> {
        let cycle = self.cycle();
        let mut spans = Vec::new();
        let mut at = 0;
        for &(len, tt) in &self.entries {
            spans.push((at, at + len, tt));
            at += len;
        }
        let gb_ns: Vec<u64> = (0..3).map(|c| self.guardband_ns(c)).collect();
        let open = |c: usize, pos: u64| {
            spans
                .iter()
                .any(|&(s, e, tt)| pos >= s && pos < e && tt == (c == TT))
        };
        let in_gb = |c: usize, pos: u64| {
            gb_ns[c] > 0
                && spans
                    .iter()
                    .any(|&(s, e, tt)| tt == (c == TT) && pos < e && pos >= e - gb_ns[c].min(e - s))
        };
        let adv = HOLD_ADVANCE * NS_PER_BYTE;
        let held = |pos: u64| {
            self.fp == Fp::WithHr
                && spans
                    .iter()
                    .any(|&(s, e, tt)| tt && (pos + cycle + adv - s) % cycle < e - s + adv)
        };

        let idle = self.avb_percent as i64 * 10_000_000;
        let send = idle - RATE as i64;
        let mut credit: i64 = 0;
        let mut slope: i64 = 0;

        let mut arrivals: Vec<(u64, usize)> = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (f.2, i))
            .collect();
        arrivals.sort();
        let mut next = 0;
        let mut queues: [VecDeque<Unit>; 3] = Default::default();
        let mut pending: Option<Unit> = None;
        let mut flight: Option<Flight> = None;
        let mut out = Vec::new();

        for t in 0..=self.duration {
            credit += slope;

            if let Some(f) = flight.filter(|f| f.end == t) {
                flight = None;
                let class = CLASSES[f.unit.class];
                match f.cut {
                    None => out.push(Tx {
                        class,
                        flow: f.unit.flow,
                        fragment: f.unit.index,
                        data: f.unit.data,
                        last: true,
                        start: f.start,
                        end: t,
                    }),
                    Some(k) => {
                        out.push(Tx {
                            class,
                            flow: f.unit.flow,
                            fragment: f.unit.index,
                            data: k,
                            last: false,
                            start: f.start,
                            end: t,
                        });
                        pending = Some(Unit {
                            index: f.unit.index + 1,
                            data: f.unit.data - k,
                            ..f.unit
                        });
                    }
                }
            }

            while next < arrivals.len() && arrivals[next].0 == t {
                let flow = arrivals[next].1;
                let (class_id, payload, _) = self.frames[flow];
                let class = CLASSES
                    .iter()
                    .position(|&c| c == class_id)
                    .expect("known class");
                queues[class].push_back(Unit {
                    flow,
                    class,
                    index: 0,
                    data: payload + 22 - FCS,
                });
                next += 1;
            }

            if next == arrivals.len()
                && flight.is_none()
                && pending.is_none()
                && queues.iter().all(|q| q.is_empty())
            {
                return out;
            }

            let pos = t % cycle;
            let gate: Vec<bool> = (0..3).map(|c| open(c, pos)).collect();
            let gb: Vec<bool> = (0..3).map(|c| in_gb(c, pos)).collect();
            let hold: Vec<bool> = (0..3).map(|c| self.preemptable(c) && held(pos)).collect();
            let backlog = |c: usize, queues: &[VecDeque<Unit>; 3], pending: &Option<Unit>| {
                !queues[c].is_empty() || pending.is_some_and(|p| p.class == c)
            };
            let eligible =
                |c: usize, queues: &[VecDeque<Unit>; 3], pending: &Option<Unit>, credit: i64| {
                    backlog(c, queues, pending)
                        && !(self.preemptable(c) && pending.is_some_and(|p| p.class != c))
                        && gate[c]
                        && !hold[c]
                        && !(c != TT && gb[c])
                        && (c != AVB || credit >= 0)
                };

            if let Some(f) = flight.as_mut() {
                if f.preemptable && f.cut.is_none() {
                    let express = (0..3)
                        .any(|c| !self.preemptable(c) && eligible(c, &queues, &pending, credit));
                    let own = f.unit.class;
                    let trigger = express
                        || match self.fp {
                            Fp::WithoutHr => !gate[own],
                            Fp::WithHr => hold[own],
                            Fp::None => false,
                        };
                    if trigger && f.unit.data + FCS >= MIN_PREEMPTABLE_MAC {
                        let mut byte = (t - f.start).div_ceil(NS_PER_BYTE);
                        loop {
                            let sent = byte.saturating_sub(PREAMBLE);
                            if f.unit.data < sent + MIN_FRAG_DATA {
                                break;
                            }
                            if sent >= MIN_FRAG_DATA {
                                f.cut = Some(sent);
                                f.end = f.start + (byte + FCS + IFG) * NS_PER_BYTE;
                                break;
                            }
                            byte += 1;
                        }
                    }
                }
            }

            if flight.is_none() {
                if let Some(c) = (0..3).find(|&c| eligible(c, &queues, &pending, credit)) {
                    let unit = if pending.is_some_and(|p| p.class == c) {
                        pending.take().expect("checked")
                    } else {
                        queues[c].pop_front().expect("backlog checked")
                    };
                    flight = Some(Flight {
                        unit,
                        start: t,
                        end: t + (PREAMBLE + unit.data + FCS + IFG) * NS_PER_BYTE,
                        preemptable: self.preemptable(c),
                        cut: None,
                    });
                }
            }

            let transmitting = flight.is_some_and(|f| f.unit.class == AVB);
            let queued = backlog(AVB, &queues, &pending);
            slope = if transmitting {
                send
            } else {
                if !queued && credit > 0 {
                    credit = 0;
                }
                if !gate[AVB] {
                    0
                } else if (gb[AVB] || hold[AVB]) && self.mode != Mode::Nonfrozen {
                    if self.mode == Mode::ReturnToZero {
                        credit = 0;
                    }
                    0
                } else if queued || credit < 0 {
                    idle
                } else {
                    0
                }
            };
        }
        panic!(
            "micro-scenario did not drain within {} ns: {self:?}",
            self.duration
        );
    }
}
