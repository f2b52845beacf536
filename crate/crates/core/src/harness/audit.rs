//! Offline re-check of a condition log: safety and routing invariants plus
//! an independent recomputation of the metrics.

use std::collections::{BTreeMap, HashMap};

use crate::actuation::HeadState;
use crate::bus::{Envelope, Message};
use crate::mimicry::{expression_for, EcaTarget};

use super::metrics::{self, Metrics, Observations, TickObservation};
use super::RunInfo;

const RATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub info: Option<RunInfo>,
    pub metrics: Option<Metrics>,
    pub violations: Vec<String>,
}

impl AuditOutcome {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Times in a log are non-negative, so their bit patterns sort like the values.
fn key(t: f64) -> u64 {
    t.to_bits()
}

fn slot(ticks: &mut BTreeMap<u64, TickObservation>, t: f64) -> &mut TickObservation {
    ticks.entry(key(t)).or_insert(TickObservation {
        t,
        truth: None,
        head: None,
        eca: None,
    })
}

pub fn audit(log: &[Envelope]) -> AuditOutcome {
    let mut violations = Vec::new();
    let info = log.iter().find_map(|e| match &e.payload {
        Message::RunInfo(info) => Some((**info).clone()),
        _ => None,
    });
    let Some(info) = info else {
        violations.push("log has no run info".to_owned());
        return AuditOutcome {
            info: None,
            metrics: None,
            violations,
        };
    };
    let config = &info.config;
    let limits = &config.actuation.limits;
    let clamp = &config.actuation.eca_clamp;

    let mut next_seq: HashMap<&str, u64> = HashMap::new();
    let mut ticks: BTreeMap<u64, TickObservation> = BTreeMap::new();
    let mut targets_by_time: HashMap<u64, &EcaTarget> = HashMap::new();
    let mut obs = Observations::default();
    let mut last_head: Option<HeadState> = None;

    let mut prev: Option<&Envelope> = None;
    for env in log {
        if let Some(p) = prev {
            let ordered = p
                .sim_time
                .total_cmp(&env.sim_time)
                .then_with(|| p.topic.cmp(&env.topic))
                .then_with(|| p.seq.cmp(&env.seq))
                .is_lt();
            if !ordered {
                violations.push(format!("{} seq {} is out of log order", env.topic, env.seq));
            }
        }
        prev = Some(env);

        let expected = next_seq.entry(env.topic.as_str()).or_insert(1);
        if env.seq != *expected {
            violations.push(format!("{} seq {} where {} was expected", env.topic, env.seq, expected));
        }
        *expected = env.seq + 1;

        match &env.payload {
            Message::InterlocutorState(s) => {
                slot(&mut ticks, env.sim_time).truth = Some(s.clone());
            }
            Message::HeadState(h) => {
                if !limits.contains(h.pan, h.tilt) {
                    violations.push(format!("head ({}, {}) outside limits at t={}", h.pan, h.tilt, env.sim_time));
                }
                if let Some(last) = last_head {
                    let bound = limits.rate_max * (h.sim_time - last.sim_time) + RATE_SLACK;
                    if (h.pan - last.pan).abs() > bound || (h.tilt - last.tilt).abs() > bound {
                        violations.push(format!("head moved faster than rate_max at t={}", env.sim_time));
                    }
                }
                last_head = Some(*h);
                slot(&mut ticks, env.sim_time).head = Some(*h);
            }
            Message::EcaTarget(target) => {
                let mode = &target.mode;
                if target.gaze.is_some() && !(target.gate_open && mode.posture.moves_eca()) {
                    violations.push(format!("ECA gaze offset under {} at t={}", mode.label(), env.sim_time));
                }
                if !target.blend.is_neutral() && !(target.gate_open && mode.emotion_mirroring) {
                    violations.push(format!("non-neutral blend under {} at t={}", mode.label(), env.sim_time));
                }
                if target.blend != expression_for(target.expression, &config.mimicry.au_table) {
                    violations.push(format!("blend does not match `{}` at t={}", target.expression.name(), env.sim_time));
                }
                if target.blend.validate().is_err() {
                    violations.push(format!("blend weight out of range at t={}", env.sim_time));
                }
                targets_by_time.insert(key(env.sim_time), target);
                slot(&mut ticks, env.sim_time).eca = Some((target.expression, target.gate_open));
            }
            Message::EcaFaceState(face) => {
                let g = face.gaze_offset;
                if g.pan.abs() > clamp.pan || g.tilt.abs() > clamp.tilt {
                    violations.push(format!("ECA gaze ({}, {}) beyond clamp at t={}", g.pan, g.tilt, env.sim_time));
                }
                if face.blend.validate().is_err() {
                    violations.push(format!("ECA blend weight out of range at t={}", env.sim_time));
                }
            }
            Message::HeadCommand(cmd) => obs.commands.push((env.sim_time, *cmd)),
            Message::LandmarkFrame(_) => obs.frames += 1,
            Message::FacePose(pose) => {
                obs.poses += 1;
                if !(pose.center.iter().all(|c| (0.0..=1.0).contains(c)) && pose.confidence > 0.0) {
                    violations.push(format!("face pose out of range at t={}", env.sim_time));
                }
            }
            _ => {}
        }
    }

    for (_, cmd) in &obs.commands {
        match targets_by_time.get(&key(cmd.issued)) {
            Some(t) if t.gate_open && t.mode.posture.moves_head() => {}
            Some(t) => violations.push(format!("head command issued under {} at t={}", t.mode.label(), cmd.issued)),
            None => violations.push(format!("head command issued at t={} with no controller output", cmd.issued)),
        }
    }

    obs.ticks = ticks.into_values().collect();
    let metrics = metrics::compute(&obs, config);
    AuditOutcome {
        info: Some(info),
        metrics: Some(metrics),
        violations,
    }
}
