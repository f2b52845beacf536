use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmotionLabel, InterlocutorState, Position};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("t = {t} is outside [0, {total}]")]
    OutOfRange { t: f64, total: f64 },
    #[error("scenario has no segments")]
    Empty,
    #[error("segment {index} has non-positive or non-finite duration {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("segment {index} can reach an invalid state: {reason}")]
    BadMotion { index: usize, reason: &'static str },
}

/// A scalar trajectory over one segment, evaluated at local time `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Path {
    Const { value: f64 },
    /// Straight line from `from` at the segment start to `to` at its end.
    Linear { from: f64, to: f64 },
    /// `offset + amplitude * sin(2π (tau + phase) / period)`.
    Sine {
        offset: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
}

impl Path {
    pub fn constant(value: f64) -> Self {
        Path::Const { value }
    }

    pub fn eval(&self, tau: f64, duration: f64) -> f64 {
        match *self {
            Path::Const { value } => value,
            Path::Linear { from, to } => from + (to - from) * (tau / duration),
            Path::Sine {
                offset,
                amplitude,
                period,
                phase,
            } => offset + amplitude * (std::f64::consts::TAU * (tau + phase) / period).sin(),
        }
    }

    /// Closed interval containing every value the path can take.
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Path::Const { value } => (value, value),
            Path::Linear { from, to } => (from.min(to), from.max(to)),
            Path::Sine {
                offset, amplitude, ..
            } => (offset - amplitude.abs(), offset + amplitude.abs()),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Path::Const { value } => value.is_finite(),
            Path::Linear { from, to } => from.is_finite() && to.is_finite(),
            Path::Sine {
                offset,
                amplitude,
                period,
                phase,
            } => {
                offset.is_finite() && amplitude.is_finite() && phase.is_finite() && period.is_finite() && period != 0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub x: Path,
    pub z: Path,
    pub yaw: Path,
    pub pitch: Path,
}

impl Motion {
    /// Standing still, facing the camera.
    pub fn still(x: f64, depth: f64) -> Self {
        Self {
            x: Path::constant(x),
            z: Path::constant(depth),
            yaw: Path::constant(0.0),
            pitch: Path::constant(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub motion: Motion,
    pub expression: EmotionLabel,
    #[serde(default)]
    pub occluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Exp1,
    Exp2,
    Exp3,
    Custom,
}

/// Piecewise interlocutor script. Expression is constant within a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: ScenarioId,
    pub segments: Vec<Segment>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(id: ScenarioId, segments: Vec<Segment>, seed: u64) -> Result<Self, ScenarioError> {
        let scenario = Self { id, segments, seed };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn custom(segments: Vec<Segment>, seed: u64) -> Result<Self, ScenarioError> {
        Self::new(ScenarioId::Custom, segments, seed)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.segments.is_empty() {
            return Err(ScenarioError::Empty);
        }
        for (index, seg) in self.segments.iter().enumerate() {
            if !(seg.duration.is_finite() && seg.duration > 0.0) {
                return Err(ScenarioError::BadDuration {
                    index,
                    duration: seg.duration,
                });
            }
            let m = &seg.motion;
            if ![&m.x, &m.z, &m.yaw, &m.pitch].iter().all(|p| p.is_finite()) {
                return Err(ScenarioError::BadMotion {
                    index,
                    reason: "non-finite path parameter",
                });
            }
            if m.z.bounds().0 <= 0.0 {
                return Err(ScenarioError::BadMotion {
                    index,
                    reason: "depth must stay positive",
                });
            }
            let (lo, hi) = m.pitch.bounds();
            if lo < -InterlocutorState::MAX_PITCH || hi > InterlocutorState::MAX_PITCH {
                return Err(ScenarioError::BadMotion {
                    index,
                    reason: "pitch must stay within ±60°",
                });
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Ground-truth state at absolute time `t`. Segment starts are inclusive.
    pub fn state_at(&self, t: f64) -> Result<InterlocutorState, ScenarioError> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) {
            return Err(ScenarioError::OutOfRange { t, total });
        }
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration;
            if t < end || i == last {
                let tau = (t - start).clamp(0.0, seg.duration);
                let m = &seg.motion;
                return Ok(InterlocutorState {
                    position: Position {
                        x: m.x.eval(tau, seg.duration),
                        z: m.z.eval(tau, seg.duration),
                    },
                    face_yaw: m.yaw.eval(tau, seg.duration),
                    face_pitch: m.pitch.eval(tau, seg.duration),
                    expression: seg.expression,
                    occluded: seg.occluded,
                });
            }
            start = end;
        }
        unreachable!("the last segment always matches")
    }

    /// Posture-mimicry script: stand still, walk to one side, turn the head
    /// from side to side, cross to the other side, turn again. 15 s, neutral.
    pub fn exp1(depth: f64, seed: u64) -> Self {
        let neutral = |duration, motion| Segment {
            duration,
            motion,
            expression: EmotionLabel::Neutral,
            occluded: false,
        };
        let segments = vec![
            neutral(2.0, Motion::still(0.0, depth)),
            neutral(
                4.0,
                Motion {
                    x: Path::Linear { from: 0.0, to: 0.25 },
                    ..Motion::still(0.0, depth)
                },
            ),
            neutral(
                3.0,
                Motion {
                    yaw: Path::Sine {
                        offset: 0.0,
                        amplitude: 60.0,
                        period: 3.0,
                        phase: 0.0,
                    },
                    ..Motion::still(0.25, depth)
                },
            ),
            neutral(
                4.0,
                Motion {
                    x: Path::Linear { from: 0.25, to: -0.25 },
                    ..Motion::still(0.0, depth)
                },
            ),
            neutral(
                2.0,
                Motion {
                    yaw: Path::Sine {
                        offset: 0.0,
                        amplitude: 45.0,
                        period: 2.0,
                        phase: 0.0,
                    },
                    ..Motion::still(-0.25, depth)
                },
            ),
        ];
        Self {
            id: ScenarioId::Exp1,
            segments,
            seed,
        }
    }

    /// Emotion-mirroring script: standing still, portraying happiness, anger
    /// and neutral in seed-shuffled order, `hold` seconds each.
    pub fn exp2(depth: f64, hold: f64, seed: u64) -> Self {
        let mut order = [EmotionLabel::Happiness, EmotionLabel::Anger, EmotionLabel::Neutral];
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let segments = order
            .into_iter()
            .map(|expression| Segment {
                duration: hold,
                motion: Motion::still(0.0, depth),
                expression,
                occluded: false,
            })
            .collect();
        Self {
            id: ScenarioId::Exp2,
            segments,
            seed,
        }
    }

    /// Combined script: walk out to `reach` metres at the side and back over
    /// `duration`, facing the camera, switching among happiness, anger and
    /// neutral after uniform random intervals in `[change_min, change_max]`.
    pub fn exp3(depth: f64, duration: f64, change: (f64, f64), reach: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = [EmotionLabel::Happiness, EmotionLabel::Anger, EmotionLabel::Neutral];
        let mut expression = *labels.choose(&mut rng).expect("non-empty");
        let mut segments = Vec::new();
        let mut start = 0.0;
        while start < duration {
            let span = if change.1 > change.0 {
                rng.gen_range(change.0..=change.1)
            } else {
                change.0
            };
            let span = span.min(duration - start);
            segments.push(Segment {
                duration: span,
                motion: Motion {
                    // half a sine over the whole run: out to `reach` and back
                    x: Path::Sine {
                        offset: 0.0,
                        amplitude: reach,
                        period: 2.0 * duration,
                        phase: start,
                    },
                    ..Motion::still(0.0, depth)
                },
                expression,
                occluded: false,
            });
            start += span;
            let others: Vec<_> = labels.iter().copied().filter(|l| *l != expression).collect();
            expression = *others.choose(&mut rng).expect("two alternatives");
        }
        Self {
            id: ScenarioId::Exp3,
            segments,
            seed,
        }
    }
}
