//! Robot head kinematics, the command delay line and the ECA face state.

use serde::{Deserialize, Serialize};

use crate::bus::{topics, Bus, BusError, Subscription};
use crate::interlocutor::EmotionLabel;
use crate::mimicry::{EcaTarget, ExpressionBlend, GazeOffset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActuationError {
    #[error("dt must be positive and finite, got {0}")]
    NonPositiveDt(f64),
    #[error("head state ({pan}, {tilt}) is outside the joint limits")]
    OutOfLimits { pan: f64, tilt: f64 },
}

/// Absolute pan/tilt target in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadCommand {
    pub pan: f64,
    pub tilt: f64,
    /// Capture time of the pose that produced the command.
    #[serde(default)]
    pub observed: f64,
    /// Controller time at which the command was sent.
    #[serde(default)]
    pub issued: f64,
}

impl HeadCommand {
    pub fn new(pan: f64, tilt: f64) -> Self {
        Self {
            pan,
            tilt,
            observed: 0.0,
            issued: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pan.is_finite() && self.tilt.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadLimits {
    pub pan_max: f64,
    pub tilt_max: f64,
    /// Degrees per second, per axis.
    pub rate_max: f64,
}

impl Default for HeadLimits {
    fn default() -> Self {
        Self {
            pan_max: 35.0,
            tilt_max: 23.0,
            rate_max: 60.0,
        }
    }
}

impl HeadLimits {
    pub fn is_valid(&self) -> bool {
        [self.pan_max, self.tilt_max, self.rate_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn contains(&self, pan: f64, tilt: f64) -> bool {
        pan.abs() <= self.pan_max && tilt.abs() <= self.tilt_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadState {
    pub pan: f64,
    pub tilt: f64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    /// One-way delay in seconds.
    pub delay: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self { delay: 0.005 }
    }
}

/// Saturation of the on-screen ECA gaze, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcaClamp {
    pub pan: f64,
    pub tilt: f64,
}

impl Default for EcaClamp {
    fn default() -> Self {
        Self {
            pan: 15.0,
            tilt: 10.0,
        }
    }
}

impl EcaClamp {
    pub fn apply(&self, g: GazeOffset) -> GazeOffset {
        GazeOffset {
            pan: g.pan.clamp(-self.pan, self.pan),
            tilt: g.tilt.clamp(-self.tilt, self.tilt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcaFaceState {
    pub gaze_offset: GazeOffset,
    pub blend: ExpressionBlend,
    pub expression: EmotionLabel,
    pub sim_time: f64,
}

/// Clips each axis to its joint limit. NaN passes through.
pub fn clamp(cmd: HeadCommand, limits: &HeadLimits) -> HeadCommand {
    HeadCommand {
        pan: cmd.pan.clamp(-limits.pan_max, limits.pan_max),
        tilt: cmd.tilt.clamp(-limits.tilt_max, limits.tilt_max),
        ..cmd
    }
}

fn step_axis(current: f64, target: f64, max_move: f64) -> f64 {
    if !target.is_finite() {
        return current;
    }
    let delta = target - current;
    if delta.abs() <= max_move {
        target
    } else {
        current + max_move.copysign(delta)
    }
}

/// Constant-rate motion toward the clamped command.
pub fn step(
    state: &HeadState,
    cmd: &HeadCommand,
    dt: f64,
    limits: &HeadLimits,
) -> Result<HeadState, ActuationError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ActuationError::NonPositiveDt(dt));
    }
    if !limits.contains(state.pan, state.tilt) {
        return Err(ActuationError::OutOfLimits {
            pan: state.pan,
            tilt: state.tilt,
        });
    }
    let target = clamp(*cmd, limits);
    let max_move = limits.rate_max * dt;
    Ok(HeadState {
        pan: step_axis(state.pan, target.pan, max_move).clamp(-limits.pan_max, limits.pan_max),
        tilt: step_axis(state.tilt, target.tilt, max_move).clamp(-limits.tilt_max, limits.tilt_max),
        sim_time: state.sim_time + dt,
    })
}

/// Offline form of the delay line: shifts every timestamp by the delay.
pub fn delay_line<T: Clone>(stream: &[(f64, T)], latency: &LatencyConfig) -> Vec<(f64, T)> {
    stream
        .iter()
        .map(|(t, v)| (t + latency.delay, v.clone()))
        .collect()
}

/// Delivers commands onto a topic after a fixed virtual delay.
#[derive(Debug, Clone, Copy)]
pub struct DelayLine {
    delay: f64,
}

impl DelayLine {
    pub fn new(latency: &LatencyConfig) -> Self {
        Self {
            delay: latency.delay.max(0.0),
        }
    }

    pub fn send(&self, bus: &mut Bus, topic: &'static str, cmd: HeadCommand) -> Result<(), BusError> {
        if self.delay == 0.0 {
            bus.publish(topic, cmd)?;
        } else {
            bus.schedule_in(self.delay, move |bus| {
                bus.publish(topic, cmd).expect("delayed topic was checked at send");
            })?;
        }
        Ok(())
    }
}

pub fn compose_eca(
    gaze: Option<GazeOffset>,
    blend: ExpressionBlend,
    expression: EmotionLabel,
    sim_time: f64,
    limits: &EcaClamp,
) -> EcaFaceState {
    EcaFaceState {
        gaze_offset: limits.apply(gaze.unwrap_or_default()),
        blend,
        expression,
        sim_time,
    }
}

/// Owns the simulated head. Latest command wins; a command persists as the
/// target until replaced.
#[derive(Debug)]
pub struct HeadActuator {
    limits: HeadLimits,
    state: HeadState,
    target: Option<HeadCommand>,
    commands: Subscription,
}

impl HeadActuator {
    pub fn new(bus: &mut Bus, limits: HeadLimits) -> Result<Self, BusError> {
        Ok(Self {
            limits,
            state: HeadState {
                sim_time: bus.now(),
                ..HeadState::default()
            },
            target: None,
            commands: bus.subscribe(topics::HEAD_CMD)?,
        })
    }

    pub fn state(&self) -> HeadState {
        self.state
    }

    /// Applies pending commands, moves to the bus time and publishes the
    /// new state.
    pub fn tick(&mut self, bus: &mut Bus) -> Result<HeadState, BusError> {
        for env in self.commands.drain() {
            if let crate::bus::Message::HeadCommand(cmd) = env.payload {
                if cmd.is_finite() {
                    self.target = Some(cmd);
                }
            }
        }
        let now = bus.now();
        let dt = now - self.state.sim_time;
        if dt > 0.0 {
            let hold = HeadCommand::new(self.state.pan, self.state.tilt);
            let cmd = self.target.unwrap_or(hold);
            self.state = step(&self.state, &cmd, dt, &self.limits)
                .expect("state stays within limits and dt is positive");
            // avoid accumulating float drift against the bus clock
            self.state.sim_time = now;
        }
        bus.publish(topics::HEAD_STATE, self.state)?;
        Ok(self.state)
    }
}

/// Renders the latest ECA target into a face state every tick.
#[derive(Debug)]
pub struct EcaActuator {
    clamp: EcaClamp,
    latest: Option<EcaTarget>,
    targets: Subscription,
}

impl EcaActuator {
    pub fn new(bus: &mut Bus, clamp: EcaClamp) -> Result<Self, BusError> {
        Ok(Self {
            clamp,
            latest: None,
            targets: bus.subscribe(topics::ECA_TARGET)?,
        })
    }

    pub fn tick(&mut self, bus: &mut Bus) -> Result<EcaFaceState, BusError> {
        if let Some(env) = self.targets.drain().pop() {
            if let crate::bus::Message::EcaTarget(t) = env.payload {
                self.latest = Some(t);
            }
        }
        let face = match &self.latest {
            Some(t) => compose_eca(t.gaze, t.blend.clone(), t.expression, bus.now(), &self.clamp),
            None => compose_eca(None, ExpressionBlend::default(), EmotionLabel::Neutral, bus.now(), &self.clamp),
        };
        bus.publish(topics::ECA_STATE, face.clone())?;
        Ok(face)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::bus::SimClock;

    const DT: f64 = 1.0 / 30.0;

    fn at(pan: f64, tilt: f64) -> HeadState {
        HeadState {
            pan,
            tilt,
            sim_time: 0.0,
        }
    }

    #[test]
    fn clamp_examples() {
        let l = HeadLimits::default();
        assert_eq!(clamp(HeadCommand::new(50.0, 0.0), &l), HeadCommand::new(35.0, 0.0));
        assert_eq!(clamp(HeadCommand::new(0.0, -30.0), &l), HeadCommand::new(0.0, -23.0));
        assert_eq!(clamp(HeadCommand::new(10.0, -10.0), &l), HeadCommand::new(10.0, -10.0));
    }

    #[test]
    fn step_moves_two_degrees_per_frame() {
        let l = HeadLimits::default();
        let s = step(&at(0.0, 0.0), &HeadCommand::new(35.0, 0.0), DT, &l).unwrap();
        assert!((s.pan - 2.0).abs() < 1e-12);
        let mut s = at(0.0, 0.0);
        let mut ticks = 0;
        while s.pan != 35.0 {
            s = step(&s, &HeadCommand::new(35.0, 0.0), DT, &l).unwrap();
            ticks += 1;
        }
        assert_eq!(ticks, 18);
    }

    #[test]
    fn step_preconditions() {
        let l = HeadLimits::default();
        let cmd = HeadCommand::new(0.0, 0.0);
        assert!(matches!(step(&at(0.0, 0.0), &cmd, 0.0, &l), Err(ActuationError::NonPositiveDt(_))));
        assert!(matches!(step(&at(40.0, 0.0), &cmd, DT, &l), Err(ActuationError::OutOfLimits { .. })));
        let s = step(&at(3.0, 4.0), &HeadCommand::new(3.0, 4.0), DT, &l).unwrap();
        assert_eq!((s.pan, s.tilt), (3.0, 4.0));
        assert!((s.sim_time - DT).abs() < 1e-15);
    }

    #[test]
    fn delay_line_examples() {
        let stream = vec![(1.0, 'a'), (1.001, 'b')];
        assert_eq!(delay_line(&stream, &LatencyConfig { delay: 0.0 }), stream);
        let out = delay_line(&stream, &LatencyConfig::default());
        assert!((out[0].0 - 1.005).abs() < 1e-12);
        assert!(((out[1].0 - out[0].0) - 0.001).abs() < 1e-12);
        assert_eq!(out.iter().map(|p| p.1).collect::<String>(), "ab");
    }

    #[test]
    fn compose_examples() {
        let c = EcaClamp::default();
        let idle = compose_eca(None, ExpressionBlend::default(), EmotionLabel::Neutral, 0.0, &c);
        assert_eq!(idle.gaze_offset, GazeOffset::default());
        assert!(idle.blend.is_neutral());
        let far = compose_eca(Some(GazeOffset { pan: 40.0, tilt: 0.0 }), ExpressionBlend::default(), EmotionLabel::Neutral, 0.0, &c);
        assert_eq!(far.gaze_offset, GazeOffset { pan: 15.0, tilt: 0.0 });
        let happy = ExpressionBlend::from_pairs([(6, 0.6), (12, 0.8)]);
        let s = compose_eca(Some(GazeOffset { pan: 5.0, tilt: -3.0 }), happy.clone(), EmotionLabel::Happiness, 0.0, &c);
        assert_eq!(s.gaze_offset, GazeOffset { pan: 5.0, tilt: -3.0 });
        assert_eq!(s.blend, happy);
    }

    #[test]
    fn actuator_applies_delayed_command() {
        let mut bus = Bus::with_standard_topics(SimClock::default());
        let mut head = HeadActuator::new(&mut bus, HeadLimits::default()).unwrap();
        DelayLine::new(&LatencyConfig::default())
            .send(&mut bus, topics::HEAD_CMD, HeadCommand::new(10.0, 0.0))
            .unwrap();
        assert_eq!(head.tick(&mut bus).unwrap().pan, 0.0);
        bus.advance(DT).unwrap();
        assert!((head.tick(&mut bus).unwrap().pan - 2.0).abs() < 1e-12);
    }

    #[test]
    fn actuator_ignores_non_finite_commands() {
        let mut bus = Bus::with_standard_topics(SimClock::default());
        let mut head = HeadActuator::new(&mut bus, HeadLimits::default()).unwrap();
        bus.publish(topics::HEAD_CMD, HeadCommand::new(f64::NAN, 5.0)).unwrap();
        bus.advance(DT).unwrap();
        let s = head.tick(&mut bus).unwrap();
        assert_eq!((s.pan, s.tilt), (0.0, 0.0));
    }

    fn angle() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1000.0f64..1000.0,
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            Just(f64::NAN),
        ]
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let l = HeadLimits::default();
            let once = clamp(HeadCommand::new(a, b), &l);
            prop_assert_eq!(clamp(once, &l), once);
            let hi = clamp(HeadCommand::new(a.max(b), a.max(b)), &l);
            let lo = clamp(HeadCommand::new(a.min(b), a.min(b)), &l);
            prop_assert!(lo.pan <= hi.pan && lo.tilt <= hi.tilt);
        }

        #[test]
        fn step_is_rate_bounded_and_safe(
            pan in -35.0f64..=35.0, tilt in -23.0f64..=23.0,
            cp in angle(), ct in angle(), dt in 1e-4f64..0.5,
        ) {
            let l = HeadLimits::default();
            let s = step(&at(pan, tilt), &HeadCommand { pan: cp, tilt: ct, observed: 0.0, issued: 0.0 }, dt, &l).unwrap();
            prop_assert!(l.contains(s.pan, s.tilt));
            prop_assert!((s.pan - pan).abs() <= l.rate_max * dt + 1e-12);
            prop_assert!((s.tilt - tilt).abs() <= l.rate_max * dt + 1e-12);
        }
    }
}
