//! Topic-based publish/subscribe core driven by a virtual clock.
//!
//! Delivery is in-order and at-most-once with no history: a subscriber only
//! sees envelopes published after it attached. The bus is logically
//! single-threaded; subscription handles are plain channels and may be
//! drained from any thread.

pub mod bridge;
mod clock;
pub mod message;

use std::collections::BTreeMap;
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

pub use clock::{SimClock, TimerCallback, TimerId, DEFAULT_TICK};
pub use message::{topics, Message, MessageKind};

use clock::TimerQueue;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("topic name must not be empty")]
    EmptyTopicName,
    #[error("topic `{0}` is already registered")]
    DuplicateTopic(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{topic}` carries {expected}, got {found}")]
    SchemaMismatch {
        topic: String,
        expected: MessageKind,
        found: MessageKind,
    },
    #[error("cannot advance by negative or non-finite dt {0}")]
    NegativeDt(f64),
    #[error("cannot move clock back from {now} to {target}")]
    ClockRewind { now: f64, target: f64 },
    #[error("tick must be positive and finite, got {0}")]
    InvalidTick(f64),
    #[error("timer at {due} is not after the current time {now}")]
    TimerNotInFuture { due: f64, now: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    name: String,
    schema: MessageKind,
}

impl Topic {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> MessageKind {
        self.schema
    }
}

/// One published message, stamped by the bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub topic: String,
    pub seq: u64,
    pub sim_time: f64,
    pub kind: MessageKind,
    #[serde(rename = "msg")]
    pub payload: Message,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeRecord {
    topic: String,
    seq: u64,
    sim_time: f64,
    kind: MessageKind,
    msg: serde_json::Value,
}

impl Envelope {
    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> serde_json::Result<Envelope> {
        let rec: EnvelopeRecord = serde_json::from_str(line)?;
        let payload = Message::decode(rec.kind, rec.msg)?;
        Ok(Envelope {
            topic: rec.topic,
            seq: rec.seq,
            sim_time: rec.sim_time,
            kind: rec.kind,
            payload,
        })
    }
}

/// Sorts envelopes by `(sim_time, topic, seq)`, the canonical log order.
pub fn sort_log(log: &mut [Envelope]) {
    log.sort_by(|a, b| {
        a.sim_time
            .total_cmp(&b.sim_time)
            .then_with(|| a.topic.cmp(&b.topic))
            .then_with(|| a.seq.cmp(&b.seq))
    });
}

/// Ordered stream of envelopes from one topic.
#[derive(Debug)]
pub struct Subscription {
    topic: String,
    rx: mpsc::Receiver<Envelope>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn try_next(&self) -> Option<Envelope> {
        self.rx.try_recv().ok()
    }

    /// Everything delivered so far, in seq order.
    pub fn drain(&self) -> Vec<Envelope> {
        self.rx.try_iter().collect()
    }
}

#[derive(Debug)]
struct TopicState {
    topic: Topic,
    next_seq: u64,
    subscribers: Vec<mpsc::Sender<Envelope>>,
}

#[derive(Debug)]
pub struct Bus {
    clock: SimClock,
    topics: BTreeMap<String, TopicState>,
    timers: TimerQueue,
    recorder: Option<Vec<Envelope>>,
}

impl Bus {
    pub fn new(clock: SimClock) -> Self {
        Self {
            clock,
            topics: BTreeMap::new(),
            timers: TimerQueue::default(),
            recorder: None,
        }
    }

    /// A bus with every pipeline topic registered.
    pub fn with_standard_topics(clock: SimClock) -> Self {
        let mut bus = Self::new(clock);
        for (name, kind) in topics::STANDARD {
            bus.create_topic(name, kind)
                .expect("standard topic names are unique");
        }
        bus
    }

    /// Keep a copy of every published envelope for [`Bus::take_log`].
    pub fn enable_recording(&mut self) {
        self.recorder.get_or_insert_with(Vec::new);
    }

    /// Recorded envelopes in canonical log order. Recording stays enabled.
    pub fn take_log(&mut self) -> Vec<Envelope> {
        let mut log = self.recorder.as_mut().map(std::mem::take).unwrap_or_default();
        sort_log(&mut log);
        log
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn create_topic(&mut self, name: &str, schema: MessageKind) -> Result<Topic, BusError> {
        if name.is_empty() {
            return Err(BusError::EmptyTopicName);
        }
        if self.topics.contains_key(name) {
            return Err(BusError::DuplicateTopic(name.to_owned()));
        }
        let topic = Topic {
            name: name.to_owned(),
            schema,
        };
        self.topics.insert(
            name.to_owned(),
            TopicState {
                topic: topic.clone(),
                next_seq: 1,
                subscribers: Vec::new(),
            },
        );
        Ok(topic)
    }

    pub fn topic(&self, name: &str) -> Option<&Topic> {
        self.topics.get(name).map(|s| &s.topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &Topic> {
        self.topics.values().map(|s| &s.topic)
    }

    /// Live subscribers on `name`; handles that were dropped are pruned on
    /// the next publish.
    pub fn subscriber_count(&self, name: &str) -> Option<usize> {
        self.topics.get(name).map(|s| s.subscribers.len())
    }

    pub fn subscribe(&mut self, name: &str) -> Result<Subscription, BusError> {
        let state = self
            .topics
            .get_mut(name)
            .ok_or_else(|| BusError::UnknownTopic(name.to_owned()))?;
        let (tx, rx) = mpsc::channel();
        state.subscribers.push(tx);
        Ok(Subscription {
            topic: name.to_owned(),
            rx,
        })
    }

    pub fn publish(&mut self, name: &str, payload: impl Into<Message>) -> Result<Envelope, BusError> {
        let payload = payload.into();
        let now = self.clock.now();
        let state = self
            .topics
            .get_mut(name)
            .ok_or_else(|| BusError::UnknownTopic(name.to_owned()))?;
        if payload.kind() != state.topic.schema {
            return Err(BusError::SchemaMismatch {
                topic: name.to_owned(),
                expected: state.topic.schema,
                found: payload.kind(),
            });
        }
        let envelope = Envelope {
            topic: state.topic.name.clone(),
            seq: state.next_seq,
            sim_time: now,
            kind: payload.kind(),
            payload,
        };
        state.next_seq += 1;
        state
            .subscribers
            .retain(|tx| tx.send(envelope.clone()).is_ok());
        if let Some(log) = self.recorder.as_mut() {
            log.push(envelope.clone());
        }
        Ok(envelope)
    }

    /// Registers `callback` to run when the clock reaches `due`, which must be
    /// strictly in the future.
    pub fn schedule_at(
        &mut self,
        due: f64,
        callback: impl FnOnce(&mut Bus) + Send + 'static,
    ) -> Result<TimerId, BusError> {
        let now = self.clock.now();
        if !(due.is_finite() && due > now) {
            return Err(BusError::TimerNotInFuture { due, now });
        }
        Ok(self.timers.insert(due, Box::new(callback)))
    }

    pub fn schedule_in(
        &mut self,
        delay: f64,
        callback: impl FnOnce(&mut Bus) + Send + 'static,
    ) -> Result<TimerId, BusError> {
        self.schedule_at(self.clock.now() + delay, callback)
    }

    pub fn cancel(&mut self, id: TimerId) -> bool {
        self.timers.cancel(id)
    }

    pub fn pending_timers(&self) -> usize {
        self.timers.len()
    }

    /// Moves time forward by `dt`, firing every timer due in `(now, now + dt]`.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<TimerId>, BusError> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(BusError::NegativeDt(dt));
        }
        self.advance_to(self.clock.now() + dt)
    }

    /// Like [`Bus::advance`] with an absolute target. Callbacks observe the
    /// clock at their own due time, so anything they publish is stamped then.
    pub fn advance_to(&mut self, target: f64) -> Result<Vec<TimerId>, BusError> {
        let now = self.clock.now();
        if target.is_nan() || target < now {
            return Err(BusError::ClockRewind { now, target });
        }
        let mut fired = Vec::new();
        while let Some((key, callback)) = self.timers.pop_due(target) {
            self.clock.set(key.due);
            callback(self);
            fired.push(key.id);
        }
        self.clock.set(target);
        Ok(fired)
    }
}
