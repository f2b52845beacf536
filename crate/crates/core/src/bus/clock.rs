//! Virtual simulation clock and the deterministic timer queue.
//!
//! Time is a plain `f64` in seconds. It only moves forward, and only when the
//! owner of the [`Bus`](super::Bus) calls `advance`. Timers fire in timestamp
//! order; timers sharing a timestamp fire in registration order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use super::{Bus, BusError};

/// Default step: one camera frame at 30 Hz.
pub const DEFAULT_TICK: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    now: f64,
    tick: f64,
}

impl SimClock {
    pub fn new(tick: f64) -> Result<Self, BusError> {
        if !(tick.is_finite() && tick > 0.0) {
            return Err(BusError::InvalidTick(tick));
        }
        Ok(Self { now: 0.0, tick })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Nominal step length in seconds.
    pub fn tick(&self) -> f64 {
        self.tick
    }

    pub(super) fn set(&mut self, t: f64) {
        debug_assert!(t >= self.now, "clock rewind: {} -> {}", self.now, t);
        self.now = t;
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            now: 0.0,
            tick: DEFAULT_TICK,
        }
    }
}

/// Identifies a scheduled callback. Ids are handed out in registration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(pub(super) u64);

impl TimerId {
    pub fn get(self) -> u64 {
        self.0
    }
}

pub type TimerCallback = Box<dyn FnOnce(&mut Bus) + Send>;

/// Queue key: due time first, then registration order.
#[derive(Debug, Clone, Copy)]
pub(super) struct TimerKey {
    pub(super) due: f64,
    pub(super) id: TimerId,
}

impl PartialEq for TimerKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TimerKey {}

impl PartialOrd for TimerKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimerKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.due
            .total_cmp(&other.due)
            .then_with(|| self.id.cmp(&other.id))
    }
}

#[derive(Default)]
pub(super) struct TimerQueue {
    pending: BTreeMap<TimerKey, TimerCallback>,
    next_id: u64,
}

impl TimerQueue {
    pub(super) fn insert(&mut self, due: f64, callback: TimerCallback) -> TimerId {
        let id = TimerId(self.next_id);
        self.next_id += 1;
        self.pending.insert(TimerKey { due, id }, callback);
        id
    }

    /// Removes and returns the earliest timer if it is due at or before `limit`.
    pub(super) fn pop_due(&mut self, limit: f64) -> Option<(TimerKey, TimerCallback)> {
        let first = self.pending.first_key_value()?.0;
        if first.due <= limit {
            self.pending.pop_first()
        } else {
            None
        }
    }

    pub(super) fn cancel(&mut self, id: TimerId) -> bool {
        let key = self.pending.keys().find(|k| k.id == id).copied();
        key.map(|k| self.pending.remove(&k).is_some())
            .unwrap_or(false)
    }

    pub(super) fn len(&self) -> usize {
        self.pending.len()
    }
}

impl fmt::Debug for TimerQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimerQueue")
            .field("pending", &self.pending.keys().collect::<Vec<_>>())
            .field("next_id", &self.next_id)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_tick() {
        assert!(SimClock::new(0.0).is_err());
        assert!(SimClock::new(-1.0).is_err());
        assert!(SimClock::new(f64::NAN).is_err());
        assert_eq!(SimClock::new(0.5).unwrap().tick(), 0.5);
    }

    #[test]
    fn default_tick_is_thirty_hertz() {
        let clock = SimClock::default();
        assert_eq!(clock.now(), 0.0);
        assert!((clock.tick() * 30.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn keys_order_by_time_then_registration() {
        let mut q = TimerQueue::default();
        let late = q.insert(2.0, Box::new(|_| {}));
        let a = q.insert(1.0, Box::new(|_| {}));
        let b = q.insert(1.0, Box::new(|_| {}));
        let order: Vec<TimerId> = std::iter::from_fn(|| q.pop_due(10.0).map(|(k, _)| k.id)).collect();
        assert_eq!(order, vec![a, b, late]);
    }
}
