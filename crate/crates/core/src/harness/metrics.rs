//! Objective surrogate metrics. Both the live pipeline and the log audit
//! reduce what they saw to [`Observations`] and share the arithmetic here.

use serde::{Deserialize, Serialize};

use crate::actuation::{HeadCommand, HeadLimits, HeadState};
use crate::config::Config;
use crate::interlocutor::{EmotionLabel, InterlocutorState};

/// Angular distance between where the head points and where the face is.
pub fn tracking_error(head: &HeadState, face_direction: (f64, f64)) -> f64 {
    let dp = head.pan - face_direction.0;
    let dt = head.tilt - face_direction.1;
    (dp * dp + dt * dt).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickObservation {
    pub t: f64,
    pub truth: Option<InterlocutorState>,
    pub head: Option<HeadState>,
    /// Displayed expression and gate state from the controller output.
    pub eca: Option<(EmotionLabel, bool)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observations {
    pub ticks: Vec<TickObservation>,
    /// Head commands with their delivery time.
    pub commands: Vec<(f64, HeadCommand)>,
    pub frames: u64,
    pub poses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: u64,
    /// Degrees.
    pub mean_tracking_error: f64,
    pub p95_tracking_error: f64,
    /// Mean seconds from frame capture to command delivery; absent when the
    /// head was never commanded.
    pub command_latency: Option<f64>,
    pub clamp_saturation_fraction: f64,
    pub detection_uptime: f64,
    /// Absent when every tick falls in a grace window.
    pub emotion_match_rate: Option<f64>,
    pub mirror_duty: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0u64), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn saturated(cmd: &HeadCommand, limits: &HeadLimits) -> bool {
    !limits.contains(cmd.pan, cmd.tilt)
}

/// Seconds after each change of the portrayed expression during which the
/// shown expression is not expected to match yet.
pub fn grace_window(config: &Config) -> f64 {
    let e = &config.mimicry.emotion;
    f64::from(e.k_debounce) / config.perception.camera.rate + e.min_hold
}

pub fn emotion_match_rate(ticks: &[TickObservation], grace: f64) -> Option<f64> {
    let mut switched_at: Option<f64> = None;
    let mut previous: Option<EmotionLabel> = None;
    let (mut matched, mut counted) = (0u64, 0u64);
    for tick in ticks {
        let Some(truth) = &tick.truth else { continue };
        if previous != Some(truth.expression) {
            switched_at = Some(tick.t);
            previous = Some(truth.expression);
        }
        let Some((shown, _)) = tick.eca else { continue };
        if tick.t - switched_at.unwrap_or(tick.t) < grace {
            continue;
        }
        counted += 1;
        if shown == truth.expression {
            matched += 1;
        }
    }
    (counted > 0).then(|| matched as f64 / counted as f64)
}

pub fn compute(obs: &Observations, config: &Config) -> Metrics {
    let errors: Vec<f64> = obs
        .ticks
        .iter()
        .filter_map(|t| Some(tracking_error(t.head.as_ref()?, t.truth.as_ref()?.direction())))
        .collect();
    let limits = &config.actuation.limits;
    let gates: Vec<bool> = obs.ticks.iter().filter_map(|t| t.eca.map(|e| e.1)).collect();
    Metrics {
        ticks: obs.ticks.len() as u64,
        mean_tracking_error: mean(errors.iter().copied()).unwrap_or(0.0),
        p95_tracking_error: percentile(&errors, 0.95).unwrap_or(0.0),
        command_latency: mean(obs.commands.iter().map(|(at, c)| at - c.observed)),
        clamp_saturation_fraction: mean(
            obs.commands
                .iter()
                .map(|(_, c)| if saturated(c, limits) { 1.0 } else { 0.0 }),
        )
        .unwrap_or(0.0),
        detection_uptime: if obs.frames == 0 {
            0.0
        } else {
            obs.poses as f64 / obs.frames as f64
        },
        emotion_match_rate: emotion_match_rate(&obs.ticks, grace_window(config)),
        mirror_duty: mean(gates.iter().map(|&g| if g { 1.0 } else { 0.0 })).unwrap_or(0.0),
    }
}
