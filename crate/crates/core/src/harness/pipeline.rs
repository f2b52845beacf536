use crate::actuation::{EcaActuator, HeadActuator, HeadState};
use crate::bus::{topics, Bus, BusError, Envelope, Message, SimClock, Subscription};
use crate::config::Config;
use crate::interlocutor::{FrameSource, TraceEntry};
use crate::mimicry::{Controller, EcaTarget, MimicryMode};
use crate::perception::PerceptionNode;

use super::metrics::{self, Metrics, Observations, TickObservation};
use super::RunInfo;

/// One fully wired closed loop on its own bus.
///
/// Each tick runs, in order: clock advance (delivering delayed messages),
/// head actuator, ECA actuator, controller, interlocutor source, perception.
pub struct Pipeline {
    bus: Bus,
    config: Config,
    tick: u64,
    head: HeadActuator,
    eca: EcaActuator,
    controller: Controller,
    perception: PerceptionNode,
    source: Option<Box<dyn FrameSource>>,
    frames: Subscription,
    commands: Subscription,
    trace: Vec<TraceEntry>,
    obs: Observations,
}

impl Pipeline {
    /// `source` may be `None` when frames arrive on the bus from elsewhere.
    pub fn new(
        config: &Config,
        info: RunInfo,
        source: Option<Box<dyn FrameSource>>,
    ) -> Result<Self, BusError> {
        let rate = config.perception.camera.rate;
        let mut bus = Bus::with_standard_topics(SimClock::new(1.0 / rate)?);
        bus.enable_recording();
        let head = HeadActuator::new(&mut bus, config.actuation.limits)?;
        let eca = EcaActuator::new(&mut bus, config.actuation.eca_clamp)?;
        let controller = Controller::new(&mut bus, config.controller(), info.mode)?;
        let perception = PerceptionNode::new(
            config.perception.center,
            config.perception.noise(info.seed),
            config.perception.classify_every,
        );
        let frames = bus.subscribe(topics::INTERLOCUTOR_FRAMES)?;
        let commands = bus.subscribe(topics::HEAD_CMD)?;
        let mode = info.mode;
        bus.publish(topics::RUN_INFO, info)?;
        bus.publish(topics::CONTROL_MODE, mode)?;
        Ok(Self {
            bus,
            config: config.clone(),
            tick: 0,
            head,
            eca,
            controller,
            perception,
            source,
            frames,
            commands,
            trace: Vec::new(),
            obs: Observations::default(),
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn head_state(&self) -> HeadState {
        self.head.state()
    }

    pub fn mode(&self) -> MimicryMode {
        self.controller.mode()
    }

    /// Virtual time of the next tick.
    pub fn next_tick_time(&self) -> f64 {
        self.tick as f64 / self.config.perception.camera.rate
    }

    pub fn step(&mut self) -> Result<EcaTarget, BusError> {
        let t = self.next_tick_time();
        self.bus.advance_to(t)?;

        let head = self.head.tick(&mut self.bus)?;
        self.eca.tick(&mut self.bus)?;
        let target = self.controller.tick(&mut self.bus)?;

        let mut truth = None;
        if let Some(source) = self.source.as_mut() {
            if let Some((state, frame)) = source.sample(t, &head, &self.config.perception.camera) {
                self.bus.publish(topics::INTERLOCUTOR_STATE, state.clone())?;
                self.bus.publish(topics::INTERLOCUTOR_FRAMES, frame.clone())?;
                self.trace.push(TraceEntry {
                    t,
                    state: state.clone(),
                    frame,
                });
                truth = Some(state);
            }
        }

        for env in self.frames.drain() {
            let Message::LandmarkFrame(mut frame) = env.payload else { continue };
            // a frame's capture time is when it reached the bus
            frame.sim_time = env.sim_time;
            self.obs.frames += 1;
            let (pose, emotion) = self.perception.process(&frame);
            if let Some(pose) = pose {
                self.obs.poses += 1;
                self.bus.publish(topics::FACE_POSE, pose)?;
            }
            if let Some(emotion) = emotion {
                self.bus.publish(topics::FACE_EMOTION, emotion)?;
            }
        }

        for env in self.commands.drain() {
            if let Message::HeadCommand(cmd) = env.payload {
                self.obs.commands.push((env.sim_time, cmd));
            }
        }
        self.obs.ticks.push(TickObservation {
            t,
            truth,
            head: Some(head),
            eca: Some((target.expression, target.gate_open)),
        });

        self.tick += 1;
        Ok(target)
    }

    pub fn run_ticks(&mut self, n: u64) -> Result<(), BusError> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        metrics::compute(&self.obs, &self.config)
    }

    pub fn take_log(&mut self) -> Vec<Envelope> {
        self.bus.take_log()
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        std::mem::take(&mut self.trace)
    }
}
