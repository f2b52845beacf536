//! The rapport controller: gaze servoing, routing per condition, the
//! intermittent gate and emotion debounce.

mod blend;
mod controller;

use serde::{Deserialize, Serialize};

pub use blend::{expression_for, AuTable, BlendError, ExpressionBlend};
pub use controller::{Controller, ControllerConfig};

use crate::actuation::{HeadCommand, HeadState};
use crate::interlocutor::EmotionLabel;
use crate::perception::{CameraModel, EmotionEvent, FacePose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    None,
    EcaOnly,
    HeadOnly,
    Both,
}

impl Posture {
    pub const ALL: [Posture; 4] = [Posture::None, Posture::EcaOnly, Posture::HeadOnly, Posture::Both];

    pub fn moves_head(self) -> bool {
        matches!(self, Posture::HeadOnly | Posture::Both)
    }

    pub fn moves_eca(self) -> bool {
        matches!(self, Posture::EcaOnly | Posture::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Posture::None => "none",
            Posture::EcaOnly => "eca_only",
            Posture::HeadOnly => "head_only",
            Posture::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Continuous,
    Intermittent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimicryMode {
    pub posture: Posture,
    pub emotion_mirroring: bool,
    pub schedule: Schedule,
}

impl MimicryMode {
    pub fn new(posture: Posture, emotion_mirroring: bool) -> Self {
        Self {
            posture,
            emotion_mirroring,
            schedule: Schedule::Continuous,
        }
    }

    /// Short label such as `both+emotion` or `head_only/intermittent`.
    pub fn label(&self) -> String {
        let mut s = self.posture.name().to_owned();
        if self.emotion_mirroring {
            s.push_str("+emotion");
        }
        if self.schedule == Schedule::Intermittent {
            s.push_str("/intermittent");
        }
        s
    }
}

impl Default for MimicryMode {
    fn default() -> Self {
        Self::new(Posture::Both, true)
    }
}

/// Degrees, positive pan = robot's left, positive tilt = up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeTarget {
    pub pan: f64,
    pub tilt: f64,
}

/// Where the on-screen ECA looks, relative to straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeOffset {
    pub pan: f64,
    pub tilt: f64,
}

impl From<GazeTarget> for GazeOffset {
    fn from(g: GazeTarget) -> Self {
        Self {
            pan: g.pan,
            tilt: g.tilt,
        }
    }
}

/// Head orientation that would put the face on the optical axis.
pub fn gaze_from_face(pose: &FacePose, camera: &CameraModel, head: &HeadState) -> GazeTarget {
    GazeTarget {
        pan: head.pan + (0.5 - pose.center[0]) * camera.fov_h,
        tilt: head.tilt + (0.5 - pose.center[1]) * camera.fov_v,
    }
}

/// Per-axis exponential moving average seeded by the first sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoother {
    alpha: f64,
    last: Option<GazeTarget>,
}

impl Smoother {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, last: None }
    }

    pub fn last(&self) -> Option<GazeTarget> {
        self.last
    }

    pub fn smooth(&mut self, target: GazeTarget) -> GazeTarget {
        let out = match self.last {
            None => target,
            Some(last) => GazeTarget {
                pan: self.alpha * target.pan + (1.0 - self.alpha) * last.pan,
                tilt: self.alpha * target.tilt + (1.0 - self.alpha) * last.tilt,
            },
        };
        self.last = Some(out);
        out
    }
}

/// Decides which embodiments follow the gaze this tick.
pub fn route(mode: &MimicryMode, gaze: GazeTarget, gate_open: bool) -> (Option<HeadCommand>, Option<GazeOffset>) {
    if !gate_open {
        return (None, None);
    }
    let head = mode
        .posture
        .moves_head()
        .then(|| HeadCommand::new(gaze.pan, gaze.tilt));
    let eca = mode.posture.moves_eca().then(|| gaze.into());
    (head, eca)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntermittentSchedule {
    pub on_window: f64,
    pub off_window: f64,
    pub phase: f64,
}

impl Default for IntermittentSchedule {
    fn default() -> Self {
        Self {
            on_window: 4.0,
            off_window: 4.0,
            phase: 0.0,
        }
    }
}

impl IntermittentSchedule {
    pub fn is_valid(&self) -> bool {
        self.on_window.is_finite()
            && self.off_window.is_finite()
            && self.phase.is_finite()
            && self.on_window > 0.0
            && self.off_window > 0.0
    }

    pub fn is_open(&self, t: f64) -> bool {
        (t - self.phase).rem_euclid(self.on_window + self.off_window) < self.on_window
    }

    pub fn duty(&self) -> f64 {
        self.on_window / (self.on_window + self.off_window)
    }
}

pub fn gate_open(schedule: Schedule, windows: &IntermittentSchedule, t: f64) -> bool {
    match schedule {
        Schedule::Continuous => true,
        Schedule::Intermittent => windows.is_open(t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmotionHoldConfig {
    pub k_debounce: u32,
    /// Seconds a newly shown emotion stays up before it may change.
    pub min_hold: f64,
    pub conf_threshold: f64,
}

impl Default for EmotionHoldConfig {
    fn default() -> Self {
        Self {
            k_debounce: 3,
            min_hold: 1.0,
            conf_threshold: 0.5,
        }
    }
}

/// Debounced, hysteretic view of the classifier stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionHold {
    pub current: EmotionLabel,
    pub candidate: EmotionLabel,
    pub consecutive: u32,
    pub hold_until: f64,
    config: EmotionHoldConfig,
}

impl EmotionHold {
    pub fn new(config: EmotionHoldConfig) -> Self {
        Self {
            current: EmotionLabel::Neutral,
            candidate: EmotionLabel::Neutral,
            consecutive: 0,
            hold_until: 0.0,
            config,
        }
    }

    pub fn config(&self) -> &EmotionHoldConfig {
        &self.config
    }

    pub fn update(&mut self, event: &EmotionEvent, t: f64) -> EmotionLabel {
        if event.confidence < self.config.conf_threshold {
            return self.current;
        }
        if event.label == self.current {
            self.candidate = self.current;
            self.consecutive = 0;
            return self.current;
        }
        if event.label == self.candidate {
            self.consecutive += 1;
        } else {
            self.candidate = event.label;
            self.consecutive = 1;
        }
        if self.consecutive >= self.config.k_debounce && t >= self.hold_until {
            self.current = event.label;
            self.consecutive = 0;
            self.hold_until = t + self.config.min_hold;
        }
        self.current
    }
}

/// What the controller asks the ECA to show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcaTarget {
    pub gaze: Option<GazeOffset>,
    pub blend: ExpressionBlend,
    /// Label the blend was looked up from; neutral when not mirroring.
    pub expression: EmotionLabel,
    pub mode: MimicryMode,
    pub gate_open: bool,
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pose(x: f64, y: f64) -> FacePose {
        FacePose {
            sim_time: 0.0,
            center: [x, y],
            confidence: 1.0,
        }
    }

    fn head(pan: f64, tilt: f64) -> HeadState {
        HeadState {
            pan,
            tilt,
            sim_time: 0.0,
        }
    }

    fn ev(label: EmotionLabel, confidence: f64) -> EmotionEvent {
        EmotionEvent {
            sim_time: 0.0,
            label,
            confidence,
        }
    }

    #[test]
    fn gaze_examples() {
        let cam = CameraModel::default();
        assert_eq!(gaze_from_face(&pose(0.5, 0.5), &cam, &head(0.0, 0.0)), GazeTarget::default());
        let g = gaze_from_face(&pose(0.0, 0.5), &cam, &head(0.0, 0.0));
        assert_eq!(g.pan, 29.0);
        let g = gaze_from_face(&pose(0.5, 0.5), &cam, &head(10.0, -5.0));
        assert_eq!((g.pan, g.tilt), (10.0, -5.0));
    }

    #[test]
    fn gaze_target_recentres_face() {
        // aim the head at the target and re-project the same bearing
        let cam = CameraModel::default();
        let g = gaze_from_face(&pose(0.0, 0.5), &cam, &head(0.0, 0.0));
        let bearing = 0.5 * cam.fov_h;
        let x_after = 0.5 - (bearing - g.pan) / cam.fov_h;
        assert_eq!(x_after, 0.5);
    }

    #[test]
    fn smoother_examples() {
        let mut s = Smoother::new(0.3);
        let out: Vec<f64> = [0.0, 10.0, 10.0]
            .iter()
            .map(|&p| s.smooth(GazeTarget { pan: p, tilt: 0.0 }).pan)
            .collect();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 3.0).abs() < 1e-12 && (out[2] - 5.1).abs() < 1e-12);
        let mut s = Smoother::new(1.0);
        for p in [1.0, -4.0, 7.5] {
            assert_eq!(s.smooth(GazeTarget { pan: p, tilt: p }).pan, p);
        }
        let mut s = Smoother::new(0.3);
        for _ in 0..10 {
            assert_eq!(s.smooth(GazeTarget { pan: 4.0, tilt: -1.0 }), GazeTarget { pan: 4.0, tilt: -1.0 });
        }
    }

    #[test]
    fn route_examples() {
        let g = GazeTarget { pan: 5.0, tilt: 1.0 };
        let (h, e) = route(&MimicryMode::new(Posture::HeadOnly, false), g, true);
        assert!(h.is_some() && e.is_none());
        let (h, e) = route(&MimicryMode::new(Posture::EcaOnly, false), g, true);
        assert!(h.is_none() && e.is_some());
        assert_eq!(route(&MimicryMode::new(Posture::Both, true), g, false), (None, None));
    }

    #[test]
    fn gate_window_edges() {
        let w = IntermittentSchedule::default();
        assert!(gate_open(Schedule::Continuous, &w, 4.0));
        assert!(gate_open(Schedule::Intermittent, &w, 3.9));
        assert!(!gate_open(Schedule::Intermittent, &w, 4.0));
        assert!(gate_open(Schedule::Intermittent, &w, 8.0));
    }

    #[test]
    fn hold_examples() {
        let mut h = EmotionHold::new(EmotionHoldConfig::default());
        h.hold_until = 0.0;
        for _ in 0..2 {
            assert_eq!(h.update(&ev(EmotionLabel::Happiness, 0.9), 5.0), EmotionLabel::Neutral);
        }
        assert_eq!(h.update(&ev(EmotionLabel::Happiness, 0.9), 5.0), EmotionLabel::Happiness);
        assert_eq!(h.hold_until, 6.0);

        let mut h = EmotionHold::new(EmotionHoldConfig::default());
        h.update(&ev(EmotionLabel::Happiness, 0.9), 5.0);
        h.update(&ev(EmotionLabel::Happiness, 0.9), 5.0);
        h.update(&ev(EmotionLabel::Anger, 0.9), 5.0);
        assert_eq!(h.current, EmotionLabel::Neutral);
        assert_eq!(h.consecutive, 1);

        let mut h = EmotionHold::new(EmotionHoldConfig::default());
        let before = h;
        h.update(&ev(EmotionLabel::Happiness, 0.3), 5.0);
        assert_eq!(h, before);
    }

    #[test]
    fn mode_json_shape() {
        let m = MimicryMode::new(Posture::HeadOnly, true);
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"posture":"head_only","emotion_mirroring":true,"schedule":"continuous"}"#
        );
    }

    /// Straight-line restatement of the debounce rule used as a reference.
    fn reference(events: &[(usize, f64, f64)], cfg: EmotionHoldConfig) -> Vec<EmotionLabel> {
        let mut current = EmotionLabel::Neutral;
        let mut run: Vec<EmotionLabel> = Vec::new();
        let mut hold_until = 0.0;
        let mut out = Vec::new();
        for &(li, conf, t) in events {
            let label = EmotionLabel::ALL[li];
            if conf >= cfg.conf_threshold {
                if label == current {
                    run.clear();
                } else {
                    if run.last() != Some(&label) {
                        run.clear();
                    }
                    run.push(label);
                    if run.len() >= cfg.k_debounce as usize && t >= hold_until {
                        current = label;
                        hold_until = t + cfg.min_hold;
                        run.clear();
                    }
                }
            }
            out.push(current);
        }
        out
    }

    proptest! {
        #[test]
        fn smoother_never_overshoots(a in -90.0f64..90.0, b in -90.0f64..90.0, alpha in 0.01f64..=1.0) {
            let mut s = Smoother::new(alpha);
            s.smooth(GazeTarget { pan: a, tilt: a });
            let out = s.smooth(GazeTarget { pan: b, tilt: b });
            prop_assert!(a.min(b) <= out.pan && out.pan <= a.max(b));
        }

        #[test]
        fn gaze_is_translation_consistent(x in 0.0f64..1.0, d in -0.5f64..0.5, pan in -35.0f64..35.0) {
            let cam = CameraModel::default();
            let h = head(pan, 0.0);
            let a = gaze_from_face(&pose(x, 0.5), &cam, &h).pan;
            let b = gaze_from_face(&pose(x + d, 0.5), &cam, &h).pan;
            prop_assert!(((b - a) + d * cam.fov_h).abs() < 1e-9);
        }

        #[test]
        fn hold_matches_reference(
            events in prop::collection::vec((0usize..8, 0.0f64..1.0, 0.0f64..0.2), 1..200),
            k in 1u32..5,
            min_hold in 0.0f64..2.0,
        ) {
            let cfg = EmotionHoldConfig { k_debounce: k, min_hold, conf_threshold: 0.5 };
            let mut t = 0.0;
            let timed: Vec<_> = events.iter().map(|&(l, c, dt)| { t += dt; (l, c, t) }).collect();
            let mut h = EmotionHold::new(cfg);
            let got: Vec<_> = timed
                .iter()
                .map(|&(l, c, t)| h.update(&EmotionEvent { sim_time: t, label: EmotionLabel::ALL[l], confidence: c }, t))
                .collect();
            prop_assert_eq!(&got, &reference(&timed, cfg));
            // switches are spaced by min_hold and preceded by k accepted matches
            let mut last_switch: Option<f64> = None;
            for i in 1..got.len() {
                if got[i] != got[i - 1] {
                    if let Some(prev) = last_switch {
                        prop_assert!(timed[i].2 - prev >= min_hold);
                    }
                    last_switch = Some(timed[i].2);
                    let streak = timed[..=i]
                        .iter()
                        .rev()
                        .filter(|e| e.1 >= 0.5)
                        .take(k as usize)
                        .filter(|e| EmotionLabel::ALL[e.0] == got[i])
                        .count();
                    prop_assert_eq!(streak, k as usize);
                }
            }
        }
    }
}
