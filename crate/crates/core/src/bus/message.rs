//! Closed registry of message kinds carried on the bus.
//!
//! Every topic is bound to exactly one [`MessageKind`]. Payloads serialize as
//! the bare JSON object of their type; the kind is never embedded in the
//! payload, it is recovered from the topic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actuation::{EcaFaceState, HeadCommand, HeadState};
use crate::harness::RunInfo;
use crate::interlocutor::{InterlocutorState, LandmarkFrame};
use crate::mimicry::{EcaTarget, MimicryMode};
use crate::perception::{EmotionEvent, FacePose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    RunInfo,
    InterlocutorState,
    LandmarkFrame,
    FacePose,
    EmotionEvent,
    MimicryMode,
    HeadCommand,
    EcaTarget,
    HeadState,
    EcaFaceState,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::RunInfo,
        MessageKind::InterlocutorState,
        MessageKind::LandmarkFrame,
        MessageKind::FacePose,
        MessageKind::EmotionEvent,
        MessageKind::MimicryMode,
        MessageKind::HeadCommand,
        MessageKind::EcaTarget,
        MessageKind::HeadState,
        MessageKind::EcaFaceState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::RunInfo => "RunInfo",
            MessageKind::InterlocutorState => "InterlocutorState",
            MessageKind::LandmarkFrame => "LandmarkFrame",
            MessageKind::FacePose => "FacePose",
            MessageKind::EmotionEvent => "EmotionEvent",
            MessageKind::MimicryMode => "MimicryMode",
            MessageKind::HeadCommand => "HeadCommand",
            MessageKind::EcaTarget => "EcaTarget",
            MessageKind::HeadState => "HeadState",
            MessageKind::EcaFaceState => "EcaFaceState",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown message kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for MessageKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Message {
    RunInfo(Box<RunInfo>),
    InterlocutorState(InterlocutorState),
    LandmarkFrame(LandmarkFrame),
    FacePose(FacePose),
    EmotionEvent(EmotionEvent),
    MimicryMode(MimicryMode),
    HeadCommand(HeadCommand),
    EcaTarget(EcaTarget),
    HeadState(HeadState),
    EcaFaceState(EcaFaceState),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::RunInfo(_) => MessageKind::RunInfo,
            Message::InterlocutorState(_) => MessageKind::InterlocutorState,
            Message::LandmarkFrame(_) => MessageKind::LandmarkFrame,
            Message::FacePose(_) => MessageKind::FacePose,
            Message::EmotionEvent(_) => MessageKind::EmotionEvent,
            Message::MimicryMode(_) => MessageKind::MimicryMode,
            Message::HeadCommand(_) => MessageKind::HeadCommand,
            Message::EcaTarget(_) => MessageKind::EcaTarget,
            Message::HeadState(_) => MessageKind::HeadState,
            Message::EcaFaceState(_) => MessageKind::EcaFaceState,
        }
    }

    /// Decodes a bare payload object as the given kind. Unknown fields are
    /// rejected by every payload type.
    pub fn decode(kind: MessageKind, value: serde_json::Value) -> serde_json::Result<Message> {
        use serde_json::from_value;
        Ok(match kind {
            MessageKind::RunInfo => Message::RunInfo(Box::new(from_value(value)?)),
            MessageKind::InterlocutorState => Message::InterlocutorState(from_value(value)?),
            MessageKind::LandmarkFrame => Message::LandmarkFrame(from_value(value)?),
            MessageKind::FacePose => Message::FacePose(from_value(value)?),
            MessageKind::EmotionEvent => Message::EmotionEvent(from_value(value)?),
            MessageKind::MimicryMode => Message::MimicryMode(from_value(value)?),
            MessageKind::HeadCommand => Message::HeadCommand(from_value(value)?),
            MessageKind::EcaTarget => Message::EcaTarget(from_value(value)?),
            MessageKind::HeadState => Message::HeadState(from_value(value)?),
            MessageKind::EcaFaceState => Message::EcaFaceState(from_value(value)?),
        })
    }
}

macro_rules! impl_from_payload {
    ($($ty:ident),* $(,)?) => {
        $(
            impl From<$ty> for Message {
                fn from(v: $ty) -> Self {
                    Message::$ty(v)
                }
            }
        )*
    };
}

impl_from_payload!(
    InterlocutorState,
    LandmarkFrame,
    FacePose,
    EmotionEvent,
    MimicryMode,
    HeadCommand,
    EcaTarget,
    HeadState,
    EcaFaceState,
);

impl From<RunInfo> for Message {
    fn from(v: RunInfo) -> Self {
        Message::RunInfo(Box::new(v))
    }
}

/// Topic names used by the pipeline.
pub mod topics {
    use super::MessageKind;

    pub const RUN_INFO: &str = "/run/info";
    pub const INTERLOCUTOR_STATE: &str = "/interlocutor/state";
    pub const INTERLOCUTOR_FRAMES: &str = "/interlocutor/frames";
    pub const FACE_POSE: &str = "/face/pose";
    pub const FACE_EMOTION: &str = "/face/emotion";
    pub const CONTROL_MODE: &str = "/control/mode";
    pub const HEAD_CMD: &str = "/head/cmd";
    pub const ECA_TARGET: &str = "/eca/target";
    pub const HEAD_STATE: &str = "/head/state";
    pub const ECA_STATE: &str = "/eca/state";

    pub const STANDARD: [(&str, MessageKind); 10] = [
        (RUN_INFO, MessageKind::RunInfo),
        (INTERLOCUTOR_STATE, MessageKind::InterlocutorState),
        (INTERLOCUTOR_FRAMES, MessageKind::LandmarkFrame),
        (FACE_POSE, MessageKind::FacePose),
        (FACE_EMOTION, MessageKind::EmotionEvent),
        (CONTROL_MODE, MessageKind::MimicryMode),
        (HEAD_CMD, MessageKind::HeadCommand),
        (ECA_TARGET, MessageKind::EcaTarget),
        (HEAD_STATE, MessageKind::HeadState),
        (ECA_STATE, MessageKind::EcaFaceState),
    ];
}
