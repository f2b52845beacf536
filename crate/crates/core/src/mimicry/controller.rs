use std::collections::VecDeque;

use crate::actuation::{DelayLine, HeadState, LatencyConfig};
use crate::bus::{topics, Bus, BusError, Message, Subscription};
use crate::interlocutor::EmotionLabel;
use crate::perception::CameraModel;

use super::{
    expression_for, gate_open, gaze_from_face, route, AuTable, EcaTarget, EmotionHold, EmotionHoldConfig,
    GazeTarget, IntermittentSchedule, MimicryMode, Smoother,
};

const HISTORY: usize = 128;

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub camera: CameraModel,
    pub alpha: f64,
    pub intermittent: IntermittentSchedule,
    pub emotion: EmotionHoldConfig,
    pub au_table: AuTable,
    pub latency: LatencyConfig,
}

/// The single task that owns all controller state.
#[derive(Debug)]
pub struct Controller {
    config: ControllerConfig,
    mode: MimicryMode,
    smoother: Smoother,
    hold: EmotionHold,
    delay: DelayLine,
    head_history: VecDeque<HeadState>,
    gaze: Option<GazeTarget>,
    modes: Subscription,
    heads: Subscription,
    poses: Subscription,
    emotions: Subscription,
}

impl Controller {
    pub fn new(bus: &mut Bus, config: ControllerConfig, mode: MimicryMode) -> Result<Self, BusError> {
        Ok(Self {
            mode,
            smoother: Smoother::new(config.alpha),
            hold: EmotionHold::new(config.emotion),
            delay: DelayLine::new(&config.latency),
            head_history: VecDeque::with_capacity(HISTORY),
            gaze: None,
            modes: bus.subscribe(topics::CONTROL_MODE)?,
            heads: bus.subscribe(topics::HEAD_STATE)?,
            poses: bus.subscribe(topics::FACE_POSE)?,
            emotions: bus.subscribe(topics::FACE_EMOTION)?,
            config,
        })
    }

    pub fn mode(&self) -> MimicryMode {
        self.mode
    }

    pub fn stable_emotion(&self) -> EmotionLabel {
        self.hold.current
    }

    /// Head pose at or just before `t`; the camera rides on the head, so the
    /// pose must be interpreted relative to where the head was at capture.
    fn head_at(&self, t: f64) -> HeadState {
        self.head_history
            .iter()
            .rev()
            .find(|h| h.sim_time <= t)
            .or(self.head_history.front())
            .copied()
            .unwrap_or_default()
    }

    pub fn tick(&mut self, bus: &mut Bus) -> Result<EcaTarget, BusError> {
        let now = bus.now();

        if let Some(Message::MimicryMode(mode)) = self.modes.drain().pop().map(|e| e.payload) {
            if mode != self.mode {
                self.mode = mode;
                // acknowledge so remote clients see the applied mode
                bus.publish(topics::CONTROL_MODE, mode)?;
            }
        }

        for env in self.heads.drain() {
            if let Message::HeadState(h) = env.payload {
                if self.head_history.len() == HISTORY {
                    self.head_history.pop_front();
                }
                self.head_history.push_back(h);
            }
        }

        let gate = gate_open(self.mode.schedule, &self.config.intermittent, now);

        if let Some(Message::FacePose(pose)) = self.poses.drain().pop().map(|e| e.payload) {
            let head = self.head_at(pose.sim_time);
            let gaze = self.smoother.smooth(gaze_from_face(&pose, &self.config.camera, &head));
            self.gaze = Some(gaze);
            if let (Some(mut cmd), _) = route(&self.mode, gaze, gate) {
                cmd.observed = pose.sim_time;
                cmd.issued = now;
                self.delay.send(bus, topics::HEAD_CMD, cmd)?;
            }
        }

        for env in self.emotions.drain() {
            if let Message::EmotionEvent(ev) = env.payload {
                self.hold.update(&ev, ev.sim_time);
            }
        }

        let eca_gaze = self.gaze.and_then(|g| route(&self.mode, g, gate).1);
        let expression = if self.mode.emotion_mirroring && gate {
            self.hold.current
        } else {
            EmotionLabel::Neutral
        };
        let target = EcaTarget {
            gaze: eca_gaze,
            blend: expression_for(expression, &self.config.au_table),
            expression,
            mode: self.mode,
            gate_open: gate,
        };
        bus.publish(topics::ECA_TARGET, target.clone())?;
        Ok(target)
    }
}
