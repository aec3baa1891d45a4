//! Deterministic discrete-event core.
//!
//! Virtual time is an integer count of microseconds. Events are ordered by
//! `(at, seq)` where `seq` is a per-queue insertion counter, so two events
//! scheduled for the same instant run in the order they were scheduled.
//!
//! Randomness comes from [`RngStream`], a ChaCha8 generator seeded from a
//! `u64`. Independent streams for different consumers are derived with
//! [`RngStream::fork`], which selects a ChaCha stream number rather than
//! drawing from the parent, so adding a consumer never perturbs the others.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NodeId;

pub const TICKS_PER_SECOND: u64 = 1_000_000;

// ============================================================================
// Time
// ============================================================================

/// A point (or span) of virtual time in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks)
    }

    pub const fn from_secs(secs: u64) -> Self {
        SimTime(secs * TICKS_PER_SECOND)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Converts seconds to ticks, rounding to the nearest microsecond.
    /// Negative and NaN inputs map to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !(secs > 0.0) {
            return SimTime::ZERO;
        }
        let ticks = (secs * TICKS_PER_SECOND as f64).round();
        if ticks >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ticks as u64)
        }
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime subtraction underflow"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:06}s",
            self.0 / TICKS_PER_SECOND,
            self.0 % TICKS_PER_SECOND
        )
    }
}

// ============================================================================
// Event queue
// ============================================================================

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule at {at} which is before the current clock {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Handle returned by [`EventQueue::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// An event popped from the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled<K> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: K,
}

#[derive(Debug)]
struct Entry<K>(Scheduled<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.at == other.0.at && self.0.seq == other.0.seq
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Entry<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse so the earliest (at, seq) is on top.
        (other.0.at, other.0.seq).cmp(&(self.0.at, self.0.seq))
    }
}

/// Pending events ordered by `(at, seq)`, plus the virtual clock.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Entry<K>>,
    live: BTreeSet<u64>,
    now: SimTime,
    next_seq: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            live: BTreeSet::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, kind: K) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.heap.push(Entry(Scheduled { at, seq, kind }));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, kind)
            .expect("a non-negative delay is never in the past")
    }

    /// Returns `true` if the event was pending and is now cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.0)
    }

    fn discard_cancelled_head(&mut self) {
        while let Some(top) = self.heap.peek() {
            if self.live.contains(&top.0.seq) {
                break;
            }
            self.heap.pop();
        }
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.discard_cancelled_head();
        self.heap.peek().map(|e| e.0.at)
    }

    /// Pops the earliest live event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Scheduled<K>> {
        self.discard_cancelled_head();
        let Entry(ev) = self.heap.pop()?;
        self.live.remove(&ev.seq);
        debug_assert!(ev.at >= self.now);
        self.now = ev.at;
        Some(ev)
    }

    /// Pops the earliest live event if it is due at or before `t_end`.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Scheduled<K>> {
        match self.peek_time() {
            Some(at) if at <= t_end => self.pop(),
            _ => None,
        }
    }

    /// Moves the clock forward without processing anything. Going backwards is ignored.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// Something that consumes events popped from an [`EventQueue`].
pub trait EventHandler<K> {
    fn handle(&mut self, event: Scheduled<K>, queue: &mut EventQueue<K>);
}

/// Processes every event due at or before `t_end`, then sets the clock to
/// `t_end`. Returns the number of events processed.
pub fn drive_until<K, H: EventHandler<K>>(queue: &mut EventQueue<K>, handler: &mut H, t_end: SimTime) -> u64 {
    let mut processed = 0;
    while let Some(ev) = queue.pop_until(t_end) {
        handler.handle(ev, queue);
        processed += 1;
    }
    queue.advance_to(t_end);
    processed
}

// ============================================================================
// Randomness
// ============================================================================

/// Seeded ChaCha8 stream with a standard-normal transform (ziggurat, via
/// `rand_distr::StandardNormal`). Identical seeds give identical sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent stream derived from the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `mean + sigma * N(0, 1)`. A zero sigma returns `mean` without drawing.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        if sigma == 0.0 {
            mean
        } else {
            mean + sigma * self.standard_normal()
        }
    }
}

// ============================================================================
// Trace
// ============================================================================

/// One processed event, rendered as `ticks\tseq\tkind\tnode\tdetail`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub ticks: u64,
    pub seq: u64,
    pub kind: &'static str,
    pub node: Option<NodeId>,
    pub detail: String,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.ticks, self.seq, self.kind)?;
        match self.node {
            Some(n) => write!(f, "{}", n)?,
            None => write!(f, "-")?,
        }
        write!(f, "\t{}", self.detail)
    }
}

pub const TRACE_HEADER: &str = "ticks\tseq\tkind\tnode\tdetail";
