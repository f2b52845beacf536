//! Simulated detector: face-centre extraction, detection gating and a noisy
//! emotion classifier driven by the ground-truth expression.

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::interlocutor::template::LANDMARK_COUNT;
use crate::interlocutor::{EmotionLabel, LandmarkFrame};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerceptionError {
    #[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
    PointCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Horizontal field of view, degrees.
    pub fov_h: f64,
    pub fov_v: f64,
    /// Frames per second.
    pub rate: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fov_h: 58.0,
            fov_v: 45.0,
            rate: 30.0,
        }
    }
}

impl CameraModel {
    pub fn is_valid(&self) -> bool {
        let fov = |f: f64| f > 0.0 && f < 180.0;
        fov(self.fov_h) && fov(self.fov_v) && self.rate.is_finite() && self.rate > 0.0
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacePose {
    /// Capture time of the frame this pose came from.
    pub sim_time: f64,
    pub center: [f64; 2],
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionEvent {
    pub sim_time: f64,
    pub label: EmotionLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMethod {
    #[default]
    BoundingBox,
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub misclassify_prob: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(misclassify_prob: f64, seed: u64) -> Self {
        Self {
            misclassify_prob,
            seed,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Midpoint of the bounding box (or mean) of exactly 68 points.
pub fn face_center(points: &[[f64; 2]], method: CenterMethod) -> Result<[f64; 2], PerceptionError> {
    if points.len() != LANDMARK_COUNT {
        return Err(PerceptionError::PointCount(points.len()));
    }
    Ok(match method {
        CenterMethod::BoundingBox => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for p in points {
                for a in 0..2 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
        }
        CenterMethod::Centroid => {
            let n = points.len() as f64;
            let sum = points
                .iter()
                .fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
            [sum[0] / n, sum[1] / n]
        }
    })
}

/// Beyond this yaw the detector loses the face.
pub const PROFILE_LIMIT: f64 = 90.0;

pub fn detect(frame: &LandmarkFrame, method: CenterMethod) -> Option<FacePose> {
    // false for a NaN yaw as well
    let frontal = frame.true_yaw.abs() <= PROFILE_LIMIT;
    if frame.occluded || !frame.in_fov || !frontal {
        return None;
    }
    let center = face_center(&frame.points, method).ok()?;
    Some(FacePose {
        sim_time: frame.sim_time,
        center: [center[0].clamp(0.0, 1.0), center[1].clamp(0.0, 1.0)],
        confidence: frame.true_yaw.to_radians().cos().clamp(0.1, 1.0),
    })
}

/// One classifier draw. A single uniform decides whether to confuse, then the
/// label and confidence are drawn from the matching band.
pub fn classify_emotion<R: Rng + ?Sized>(
    truth: EmotionLabel,
    misclassify_prob: f64,
    sim_time: f64,
    rng: &mut R,
) -> EmotionEvent {
    let confuse = rng.gen::<f64>() < misclassify_prob;
    let (label, confidence) = if confuse {
        let other = truth.others().choose(rng).expect("seven other labels");
        (other, rng.gen_range(0.4..0.7))
    } else {
        (truth, rng.gen_range(0.7..=1.0))
    };
    EmotionEvent {
        sim_time,
        label,
        confidence,
    }
}

/// Stateful perception task: owns the classifier rng.
#[derive(Debug, Clone)]
pub struct PerceptionNode {
    method: CenterMethod,
    misclassify_prob: f64,
    classify_every: u32,
    rng: ChaCha8Rng,
    detections: u64,
}

impl PerceptionNode {
    pub fn new(method: CenterMethod, noise: NoiseConfig, classify_every: u32) -> Self {
        Self {
            method,
            misclassify_prob: noise.misclassify_prob,
            classify_every: classify_every.max(1),
            rng: noise.rng(),
            detections: 0,
        }
    }

    /// Emotion events only accompany a detection, on every Nth detection.
    pub fn process(&mut self, frame: &LandmarkFrame) -> (Option<FacePose>, Option<EmotionEvent>) {
        let Some(pose) = detect(frame, self.method) else {
            return (None, None);
        };
        let classify = self.detections.is_multiple_of(u64::from(self.classify_every));
        self.detections += 1;
        let event = classify.then(|| {
            classify_emotion(frame.expression, self.misclassify_prob, frame.sim_time, &mut self.rng)
        });
        (Some(pose), event)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::actuation::HeadState;
    use crate::interlocutor::{synthesize_landmarks, InterlocutorState};

    fn frame(yaw: f64) -> LandmarkFrame {
        let mut s = InterlocutorState::facing_at(0.6);
        s.face_yaw = yaw;
        synthesize_landmarks(&s, &CameraModel::default(), &HeadState::default(), 0.0)
    }

    #[test]
    fn degenerate_box() {
        let pts = vec![[0.4, 0.6]; 68];
        assert_eq!(face_center(&pts, CenterMethod::BoundingBox).unwrap(), [0.4, 0.6]);
    }

    #[test]
    fn box_midpoint() {
        let mut pts = vec![[0.3, 0.4]; 68];
        pts[0] = [0.2, 0.3];
        pts[1] = [0.6, 0.5];
        let c = face_center(&pts, CenterMethod::BoundingBox).unwrap();
        assert!((c[0] - 0.4).abs() < 1e-15 && (c[1] - 0.4).abs() < 1e-15);
        assert!(matches!(
            face_center(&pts[..67], CenterMethod::BoundingBox),
            Err(PerceptionError::PointCount(67))
        ));
    }

    #[test]
    fn frontal_face_detected_at_centre() {
        let pose = detect(&frame(0.0), CenterMethod::BoundingBox).unwrap();
        assert!((pose.center[0] - 0.5).abs() < 1e-12 && (pose.center[1] - 0.5).abs() < 1e-12);
        assert_eq!(pose.confidence, 1.0);
    }

    #[test]
    fn profile_and_occlusion_gate() {
        assert!(detect(&frame(120.0), CenterMethod::BoundingBox).is_none());
        assert!(detect(&frame(90.0), CenterMethod::BoundingBox).is_some());
        let mut f = frame(0.0);
        f.occluded = true;
        assert!(detect(&f, CenterMethod::BoundingBox).is_none());
    }

    #[test]
    fn classifier_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let e = classify_emotion(EmotionLabel::Anger, 0.0, 0.0, &mut rng);
            assert_eq!(e.label, EmotionLabel::Anger);
            assert!((0.7..=1.0).contains(&e.confidence));
            let e = classify_emotion(EmotionLabel::Anger, 1.0, 0.0, &mut rng);
            assert_ne!(e.label, EmotionLabel::Anger);
            assert!((0.4..0.7).contains(&e.confidence));
        }
    }

    #[test]
    fn classifier_is_reproducible() {
        let draw = || {
            let mut rng = NoiseConfig::new(0.3, 9).rng();
            (0..100)
                .map(|_| classify_emotion(EmotionLabel::Fear, 0.3, 0.0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn node_classifies_every_nth_detection() {
        let mut node = PerceptionNode::new(CenterMethod::BoundingBox, NoiseConfig::new(0.0, 0), 3);
        let f = frame(0.0);
        let events: Vec<bool> = (0..6).map(|_| node.process(&f).1.is_some()).collect();
        assert_eq!(events, [true, false, false, true, false, false]);
        let mut hidden = f.clone();
        hidden.occluded = true;
        assert_eq!(node.process(&hidden), (None, None));
    }

    fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec(prop::array::uniform2(0.0f64..1.0), 68)
    }

    proptest! {
        #[test]
        fn center_lies_inside_the_box(pts in points(), centroid: bool) {
            let method = if centroid { CenterMethod::Centroid } else { CenterMethod::BoundingBox };
            let c = face_center(&pts, method).unwrap();
            for a in 0..2 {
                let lo = pts.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= c[a] && c[a] <= hi);
            }
        }
    }
}
