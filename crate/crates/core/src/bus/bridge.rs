//! Transport-independent half of the JSON bridge.
//!
//! A [`BridgeSession`] holds one client's subscriptions and turns inbound
//! text frames into bus operations. The WebSocket transport only moves
//! strings; everything that decides what a frame means lives here so it can
//! be driven deterministically under the virtual clock.
//!
//! Frames, one JSON object each:
//!
//! ```text
//! {"op":"subscribe","topic":"/head/state"}
//! {"op":"unsubscribe","topic":"/head/state"}
//! {"op":"publish","topic":"/control/mode","msg":{...}}
//! {"op":"publish","topic":"/head/state","seq":7,"sim_time":0.2,"msg":{...}}   (server -> client)
//! {"op":"error","reason":"unknown_topic"}                                      (server -> client)
//! ```

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{sort_log, Bus, Envelope, Message, Subscription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownOp,
    UnknownTopic,
    SchemaMismatch,
    BadFrame,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownOp => "unknown_op",
            ErrorCode::UnknownTopic => "unknown_topic",
            ErrorCode::SchemaMismatch => "schema_mismatch",
            ErrorCode::BadFrame => "bad_frame",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientFrame {
    Subscribe { topic: String },
    Unsubscribe { topic: String },
    Publish { topic: String, msg: Value },
}

/// Parses the envelope of a client frame. The payload of a publish is left
/// undecoded because its kind depends on the topic.
pub fn parse_client_frame(text: &str) -> Result<ClientFrame, ErrorCode> {
    let value: Value = serde_json::from_str(text).map_err(|_| ErrorCode::BadFrame)?;
    let Value::Object(mut obj) = value else {
        return Err(ErrorCode::BadFrame);
    };
    let op = match obj.remove("op") {
        Some(Value::String(op)) => op,
        _ => return Err(ErrorCode::BadFrame),
    };
    match op.as_str() {
        "subscribe" => {
            let topic = take_topic(&mut obj)?;
            ensure_empty(&obj)?;
            Ok(ClientFrame::Subscribe { topic })
        }
        "unsubscribe" => {
            let topic = take_topic(&mut obj)?;
            ensure_empty(&obj)?;
            Ok(ClientFrame::Unsubscribe { topic })
        }
        "publish" => {
            let topic = take_topic(&mut obj)?;
            let msg = obj.remove("msg").ok_or(ErrorCode::BadFrame)?;
            ensure_empty(&obj)?;
            Ok(ClientFrame::Publish { topic, msg })
        }
        _ => Err(ErrorCode::UnknownOp),
    }
}

fn take_topic(obj: &mut Map<String, Value>) -> Result<String, ErrorCode> {
    match obj.remove("topic") {
        Some(Value::String(t)) => Ok(t),
        _ => Err(ErrorCode::BadFrame),
    }
}

fn ensure_empty(obj: &Map<String, Value>) -> Result<(), ErrorCode> {
    if obj.is_empty() {
        Ok(())
    } else {
        Err(ErrorCode::BadFrame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerFrame {
    Publish(Envelope),
    Error(ErrorCode),
}

#[derive(Serialize)]
struct PublishFrame<'a> {
    op: &'static str,
    topic: &'a str,
    seq: u64,
    sim_time: f64,
    msg: &'a Message,
}

#[derive(Serialize)]
struct ErrorFrame {
    op: &'static str,
    reason: ErrorCode,
}

impl ServerFrame {
    pub fn to_json(&self) -> String {
        let out = match self {
            ServerFrame::Publish(env) => serde_json::to_string(&PublishFrame {
                op: "publish",
                topic: &env.topic,
                seq: env.seq,
                sim_time: env.sim_time,
                msg: &env.payload,
            }),
            ServerFrame::Error(reason) => serde_json::to_string(&ErrorFrame {
                op: "error",
                reason: *reason,
            }),
        };
        out.expect("server frames always serialize")
    }
}

/// Per-client bridge state.
#[derive(Debug)]
pub struct BridgeSession {
    latency: f64,
    subscriptions: BTreeMap<String, Subscription>,
}

impl BridgeSession {
    /// `latency` is the injected one-way delay, in seconds, applied to every
    /// message a client publishes.
    pub fn new(latency: f64) -> Self {
        Self {
            latency: latency.max(0.0),
            subscriptions: BTreeMap::new(),
        }
    }

    pub fn is_subscribed(&self, topic: &str) -> bool {
        self.subscriptions.contains_key(topic)
    }

    /// Applies one inbound frame. Returns the error frame to send back, if
    /// any; the session stays usable after an error.
    pub fn handle(&mut self, bus: &mut Bus, text: &str) -> Option<ServerFrame> {
        self.apply(bus, text).err().map(ServerFrame::Error)
    }

    fn apply(&mut self, bus: &mut Bus, text: &str) -> Result<(), ErrorCode> {
        match parse_client_frame(text)? {
            ClientFrame::Subscribe { topic } => {
                if let Entry::Vacant(slot) = self.subscriptions.entry(topic) {
                    let sub = bus.subscribe(slot.key()).map_err(|_| ErrorCode::UnknownTopic)?;
                    slot.insert(sub);
                }
                Ok(())
            }
            ClientFrame::Unsubscribe { topic } => {
                if bus.topic(&topic).is_none() {
                    return Err(ErrorCode::UnknownTopic);
                }
                self.subscriptions.remove(&topic);
                Ok(())
            }
            ClientFrame::Publish { topic, msg } => {
                let kind = bus
                    .topic(&topic)
                    .ok_or(ErrorCode::UnknownTopic)?
                    .schema();
                let payload = Message::decode(kind, msg).map_err(|_| ErrorCode::SchemaMismatch)?;
                if self.latency > 0.0 {
                    bus.schedule_in(self.latency, move |bus| {
                        // topic and kind were validated above and topics are never removed
                        let _ = bus.publish(&topic, payload);
                    })
                    .map_err(|_| ErrorCode::BadFrame)?;
                } else {
                    bus.publish(&topic, payload).map_err(|_| ErrorCode::SchemaMismatch)?;
                }
                Ok(())
            }
        }
    }

    /// Everything delivered to this client since the last poll, in log order.
    pub fn poll(&mut self) -> Vec<ServerFrame> {
        let mut pending: Vec<Envelope> = self
            .subscriptions
            .values()
            .flat_map(|s| s.drain())
            .collect();
        sort_log(&mut pending);
        pending.into_iter().map(ServerFrame::Publish).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{topics, SimClock};

    fn bus() -> Bus {
        Bus::with_standard_topics(SimClock::default())
    }

    const MODE: &str = r#"{"posture":"head_only","emotion_mirroring":true,"schedule":"continuous"}"#;

    #[test]
    fn parses_all_client_ops() {
        assert_eq!(
            parse_client_frame(r#"{"topic":"/a","op":"subscribe"}"#),
            Ok(ClientFrame::Subscribe { topic: "/a".into() })
        );
        assert_eq!(
            parse_client_frame(r#"{"op":"unsubscribe","topic":"/a"}"#),
            Ok(ClientFrame::Unsubscribe { topic: "/a".into() })
        );
        assert!(matches!(
            parse_client_frame(r#"{"op":"publish","topic":"/a","msg":{}}"#),
            Ok(ClientFrame::Publish { .. })
        ));
    }

    #[test]
    fn rejects_malformed_frames() {
        assert_eq!(parse_client_frame("not json"), Err(ErrorCode::BadFrame));
        assert_eq!(parse_client_frame("[1,2]"), Err(ErrorCode::BadFrame));
        assert_eq!(parse_client_frame(r#"{"topic":"/a"}"#), Err(ErrorCode::BadFrame));
        assert_eq!(parse_client_frame(r#"{"op":"dance"}"#), Err(ErrorCode::UnknownOp));
        assert_eq!(
            parse_client_frame(r#"{"op":"subscribe","topic":"/a","qos":1}"#),
            Err(ErrorCode::BadFrame)
        );
        assert_eq!(parse_client_frame(r#"{"op":"publish","topic":"/a"}"#), Err(ErrorCode::BadFrame));
    }

    #[test]
    fn unknown_op_error_frame_is_exact() {
        let mut bus = bus();
        let mut session = BridgeSession::new(0.0);
        let reply = session.handle(&mut bus, r#"{"op":"teleport"}"#).unwrap();
        assert_eq!(reply.to_json(), r#"{"op":"error","reason":"unknown_op"}"#);
        // still usable
        assert!(session
            .handle(&mut bus, r#"{"op":"subscribe","topic":"/head/state"}"#)
            .is_none());
    }

    #[test]
    fn subscribe_then_local_publish_is_forwarded() {
        let mut bus = bus();
        let mut session = BridgeSession::new(0.0);
        assert!(session
            .handle(&mut bus, r#"{"op":"subscribe","topic":"/head/state"}"#)
            .is_none());
        let state = crate::actuation::HeadState {
            pan: 1.5,
            tilt: -2.0,
            sim_time: 0.0,
        };
        let env = bus.publish(topics::HEAD_STATE, state).unwrap();
        let frames = session.poll();
        assert_eq!(frames, vec![ServerFrame::Publish(env)]);
        assert_eq!(
            frames[0].to_json(),
            r#"{"op":"publish","topic":"/head/state","seq":1,"sim_time":0.0,"msg":{"pan":1.5,"tilt":-2.0,"sim_time":0.0}}"#
        );
    }

    #[test]
    fn topic_and_schema_errors() {
        let mut bus = bus();
        let mut session = BridgeSession::new(0.0);
        let e = session.handle(&mut bus, r#"{"op":"subscribe","topic":"/nope"}"#);
        assert_eq!(e, Some(ServerFrame::Error(ErrorCode::UnknownTopic)));
        let e = session.handle(
            &mut bus,
            r#"{"op":"publish","topic":"/control/mode","msg":{"pan":1}}"#,
        );
        assert_eq!(e, Some(ServerFrame::Error(ErrorCode::SchemaMismatch)));
    }

    #[test]
    fn injected_latency_stamps_delivery() {
        let mut bus = bus();
        let local = bus.subscribe(topics::CONTROL_MODE).unwrap();
        let mut session = BridgeSession::new(0.005);
        session.handle(&mut bus, r#"{"op":"subscribe","topic":"/control/mode"}"#);
        bus.advance(1.0).unwrap();
        let frame = format!(r#"{{"op":"publish","topic":"/control/mode","msg":{MODE}}}"#);
        assert!(session.handle(&mut bus, &frame).is_none());
        assert!(local.drain().is_empty());
        bus.advance(1.0 / 30.0).unwrap();
        let env = local.try_next().unwrap();
        assert!((env.sim_time - 1.005).abs() < 1e-12);
        assert_eq!(session.poll(), vec![ServerFrame::Publish(env)]);
    }

    #[test]
    fn unsubscribe_stops_delivery() {
        let mut bus = bus();
        let mut session = BridgeSession::new(0.0);
        session.handle(&mut bus, r#"{"op":"subscribe","topic":"/control/mode"}"#);
        assert!(session.is_subscribed("/control/mode"));
        session.handle(&mut bus, r#"{"op":"unsubscribe","topic":"/control/mode"}"#);
        let frame = format!(r#"{{"op":"publish","topic":"/control/mode","msg":{MODE}}}"#);
        session.handle(&mut bus, &frame);
        assert!(session.poll().is_empty());
    }
}
