//! Deterministic discrete-event kernel.
//!
//! Events are totally ordered by `(time, kind rank, insertion sequence)`.
//! State changes of gates, guardbands and hold windows rank before frame
//! arrivals, which rank before transmission decisions, so a decision taken
//! at instant `t` always sees every other change that happens at `t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::model::TimeNs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    FrameGeneration,
    Enqueue,
    GateChange,
    GuardbandStart,
    GuardbandEnd,
    HoldStart,
    Release,
    TxStart,
    TxEnd,
    RxComplete,
    ForwardReady,
}

impl EventKind {
    pub fn rank(self) -> u8 {
        match self {
            EventKind::GateChange
            | EventKind::GuardbandStart
            | EventKind::GuardbandEnd
            | EventKind::HoldStart
            | EventKind::Release => 0,
            EventKind::TxEnd => 1,
            EventKind::FrameGeneration
            | EventKind::Enqueue
            | EventKind::RxComplete
            | EventKind::ForwardReady => 2,
            EventKind::TxStart => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::FrameGeneration => "FrameGeneration",
            EventKind::Enqueue => "Enqueue",
            EventKind::GateChange => "GateChange",
            EventKind::GuardbandStart => "GuardbandStart",
            EventKind::GuardbandEnd => "GuardbandEnd",
            EventKind::HoldStart => "HoldStart",
            EventKind::Release => "Release",
            EventKind::TxStart => "TxStart",
            EventKind::TxEnd => "TxEnd",
            EventKind::RxComplete => "RxComplete",
            EventKind::ForwardReady => "ForwardReady",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: TimeNs,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

impl<P> Event<P> {
    fn key(&self) -> (TimeNs, u8, u64) {
        (self.time, self.kind.rank(), self.seq)
    }
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

pub struct Scheduler<P> {
    now: TimeNs,
    next_seq: u64,
    heap: BinaryHeap<Event<P>>,
    dispatched: u64,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: TimeNs::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> TimeNs {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, time: TimeNs, kind: EventKind, payload: P) -> Result<(), SimError> {
        if time < self.now {
            return Err(SimError::SchedulingInPast {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            time,
            seq,
            kind,
            payload,
        });
        Ok(())
    }

    /// Pops the next event if its time is within `until` (inclusive).
    pub fn pop_until(&mut self, until: TimeNs) -> Option<Event<P>> {
        if self.heap.peek()?.time > until {
            return None;
        }
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.dispatched += 1;
        Some(ev)
    }

    /// Dispatches every event with time `<= until` through `handler`.
    pub fn run<F>(&mut self, until: TimeNs, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Scheduler<P>, Event<P>) -> Result<(), SimError>,
    {
        while let Some(ev) = self.pop_until(until) {
            handler(self, ev)?;
        }
        Ok(())
    }
}

/// Seeded generator used for all scenario randomness (ChaCha8 stream cipher,
/// seeded from a 64-bit value via `SeedableRng::seed_from_u64`).
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform integer in `[0, bound)`; returns 0 for an empty range.
    pub fn below(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            0
        } else {
            self.0.gen_range(0..bound)
        }
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_breaks_ties() {
        let mut s = Scheduler::new();
        s.schedule(TimeNs(1000), EventKind::TxStart, "tx").unwrap();
        s.schedule(TimeNs(1000), EventKind::GateChange, "gate")
            .unwrap();
        let first = s.pop_until(TimeNs::MAX).unwrap();
        assert_eq!(first.payload, "gate");
        assert_eq!(s.pop_until(TimeNs::MAX).unwrap().payload, "tx");
    }

    #[test]
    fn time_order() {
        let mut s = Scheduler::new();
        s.schedule(TimeNs(5), EventKind::Enqueue, 5).unwrap();
        s.schedule(TimeNs(3), EventKind::Enqueue, 3).unwrap();
        let mut seen = vec![];
        s.run(TimeNs::MAX, |_, ev| {
            seen.push(ev.payload);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![3, 5]);
    }

    #[test]
    fn equal_rank_keeps_insertion_order() {
        let mut s = Scheduler::new();
        for i in 0..5 {
            s.schedule(TimeNs(7), EventKind::RxComplete, i).unwrap();
        }
        let mut seen = vec![];
        s.run(TimeNs::MAX, |_, ev| {
            seen.push(ev.payload);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn past_scheduling_rejected() {
        let mut s = Scheduler::new();
        s.schedule(TimeNs(10), EventKind::Enqueue, ()).unwrap();
        s.pop_until(TimeNs::MAX).unwrap();
        assert!(matches!(
            s.schedule(TimeNs(9), EventKind::Enqueue, ()),
            Err(SimError::SchedulingInPast { .. })
        ));
    }

    #[test]
    fn empty_queue_terminates_early() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run(TimeNs::from_ms(30_000), |_, _| Ok(())).unwrap();
        assert_eq!(s.now(), TimeNs::ZERO);
        assert_eq!(s.dispatched(), 0);
    }

    #[test]
    fn periodic_generation_inclusive_bound() {
        let period = TimeNs::from_ms(1);
        let mut s = Scheduler::new();
        s.schedule(TimeNs::ZERO, EventKind::FrameGeneration, ())
            .unwrap();
        let mut count = 0;
        let until = TimeNs::from_ms(10);
        s.run(until, |s, ev| {
            count += 1;
            let next = ev.time + period;
            if next <= until {
                s.schedule(next, EventKind::FrameGeneration, ())?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 11);
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = SimRng::new(42);
        let mut b = SimRng::new(42);
        let xs: Vec<u64> = (0..16).map(|_| a.below(1_000_000)).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.below(1_000_000)).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.below(0), 0);
    }
}
