//! The human side of the interaction: ground-truth interlocutor state and the
//! landmark frames a camera on the robot head would see.

mod scenario;
pub mod template;
pub mod trace;

use serde::{Deserialize, Serialize};

pub use scenario::{Motion, Path, Scenario, ScenarioError, ScenarioId, Segment};
pub use trace::{load_trace, record_trace, Trace, TraceEntry, TraceError, TraceHeader, TraceWriter};

use crate::actuation::HeadState;
use crate::perception::CameraModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionLabel {
    Happiness,
    Anger,
    Sadness,
    Fear,
    Surprise,
    Disgust,
    Contempt,
    /// No emotion displayed.
    #[default]
    Neutral,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 8] = [
        EmotionLabel::Happiness,
        EmotionLabel::Anger,
        EmotionLabel::Sadness,
        EmotionLabel::Fear,
        EmotionLabel::Surprise,
        EmotionLabel::Disgust,
        EmotionLabel::Contempt,
        EmotionLabel::Neutral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Contempt => "contempt",
            EmotionLabel::Neutral => "neutral",
        }
    }

    /// Every label except `self`, in declaration order.
    pub fn others(self) -> impl Iterator<Item = EmotionLabel> {
        EmotionLabel::ALL.into_iter().filter(move |l| *l != self)
    }
}

/// Metres in the robot frame: `x` lateral (positive = robot's left), `z`
/// depth along the optical axis of a centred head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterlocutorState {
    pub position: Position,
    /// Degrees, 0 = facing the camera, positive = turned left.
    pub face_yaw: f64,
    pub face_pitch: f64,
    pub expression: EmotionLabel,
    pub occluded: bool,
}

impl InterlocutorState {
    pub const MAX_PITCH: f64 = 60.0;

    /// Standing still in front of the robot at `depth` metres.
    pub fn facing_at(depth: f64) -> Self {
        Self {
            position: Position { x: 0.0, z: depth },
            face_yaw: 0.0,
            face_pitch: 0.0,
            expression: EmotionLabel::Neutral,
            occluded: false,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.position.z > 0.0
            && self.position.x.is_finite()
            && self.face_yaw.is_finite()
            && self.face_pitch.abs() <= Self::MAX_PITCH
    }

    /// Ground-truth (pan, tilt) direction from the head pivot to the face, in
    /// degrees. The face is at camera height, so tilt is always zero.
    pub fn direction(&self) -> (f64, f64) {
        (self.position.x.atan2(self.position.z).to_degrees(), 0.0)
    }
}

/// One camera frame's worth of landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkFrame {
    pub sim_time: f64,
    /// Normalized image coordinates; 68 points when visible, else empty.
    pub points: Vec<[f64; 2]>,
    pub in_fov: bool,
    pub occluded: bool,
    /// Used by perception for profile gating only.
    pub true_yaw: f64,
    /// Ground-truth expression, the input of the simulated classifier.
    pub expression: EmotionLabel,
}

/// Renders `state` through a camera mounted on the head at `head`.
///
/// The face centre is placed by its angular offset from the optical axis
/// (linear in angle, matching the gaze law), the template is scaled by the
/// image width at the face's depth, and its x spread shrinks by cos(yaw).
/// Points are clipped to the image.
pub fn synthesize_landmarks(
    state: &InterlocutorState,
    camera: &CameraModel,
    head: &HeadState,
    sim_time: f64,
) -> LandmarkFrame {
    let (pan, tilt) = state.direction();
    let cx = 0.5 - (pan - head.pan) / camera.fov_h;
    let cy = 0.5 - (tilt - head.tilt) / camera.fov_v;
    let in_fov = (0.0..=1.0).contains(&cx) && (0.0..=1.0).contains(&cy);

    let points = if in_fov && !state.occluded {
        let depth = state.position.z;
        let width = 2.0 * depth * (camera.fov_h.to_radians() / 2.0).tan();
        let height = 2.0 * depth * (camera.fov_v.to_radians() / 2.0).tan();
        let shear = state.face_yaw.to_radians().cos();
        template::offsets_m()
            .map(|(ox, oy)| {
                [
                    (cx + ox * shear / width).clamp(0.0, 1.0),
                    (cy + oy / height).clamp(0.0, 1.0),
                ]
            })
            .collect()
    } else {
        Vec::new()
    };

    LandmarkFrame {
        sim_time,
        points,
        in_fov,
        occluded: state.occluded,
        true_yaw: state.face_yaw,
        expression: state.expression,
    }
}

/// Something that produces the interlocutor for each camera tick.
pub trait FrameSource: Send {
    /// `None` once the source is exhausted.
    fn sample(
        &mut self,
        t: f64,
        head: &HeadState,
        camera: &CameraModel,
    ) -> Option<(InterlocutorState, LandmarkFrame)>;
}

/// Evaluates a [`Scenario`] and renders it through the head camera.
#[derive(Debug, Clone)]
pub struct ScriptedSource {
    scenario: Scenario,
}

impl ScriptedSource {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }
}

impl FrameSource for ScriptedSource {
    fn sample(
        &mut self,
        t: f64,
        head: &HeadState,
        camera: &CameraModel,
    ) -> Option<(InterlocutorState, LandmarkFrame)> {
        let state = self.scenario.state_at(t).ok()?;
        let frame = synthesize_landmarks(&state, camera, head, t);
        Some((state, frame))
    }
}

/// Plays back recorded ticks verbatim, ignoring the live head pose.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    entries: std::vec::IntoIter<TraceEntry>,
}

impl ReplaySource {
    pub fn new(trace: Trace) -> Self {
        Self {
            entries: trace.entries.into_iter(),
        }
    }
}

impl FrameSource for ReplaySource {
    fn sample(
        &mut self,
        _t: f64,
        _head: &HeadState,
        _camera: &CameraModel,
    ) -> Option<(InterlocutorState, LandmarkFrame)> {
        self.entries.next().map(|e| (e.state, e.frame))
    }
}
