//! One TOML document with a section per module. Every field has a default,
//! so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actuation::{EcaClamp, HeadLimits, LatencyConfig};
use crate::mimicry::{
    AuTable, ControllerConfig, EmotionHoldConfig, IntermittentSchedule, MimicryMode,
};
use crate::perception::{CameraModel, CenterMethod, NoiseConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub bridge_port: u16,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { bridge_port: 9090 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterlocutorConfig {
    /// Distance from the head to the face, metres.
    pub depth: f64,
    /// Furthest lateral excursion of the walk in the combined experiment.
    pub walk_reach: f64,
}

impl Default for InterlocutorConfig {
    fn default() -> Self {
        Self {
            depth: 0.6,
            walk_reach: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub camera: CameraModel,
    pub misclassify_prob: f64,
    /// Classifier seed; derived from the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub classify_every: u32,
    pub center: CenterMethod,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            misclassify_prob: 0.1,
            noise_seed: None,
            classify_every: 1,
            center: CenterMethod::BoundingBox,
        }
    }
}

impl PerceptionConfig {
    pub fn noise(&self, run_seed: u64) -> NoiseConfig {
        let seed = self
            .noise_seed
            .unwrap_or(run_seed ^ 0x9e37_79b9_7f4a_7c15);
        NoiseConfig::new(self.misclassify_prob, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MimicryConfig {
    pub alpha: f64,
    pub intermittent: IntermittentSchedule,
    pub emotion: EmotionHoldConfig,
    pub au_table: AuTable,
    /// Mode used by `serve` until a client changes it.
    pub initial_mode: MimicryMode,
}

impl Default for MimicryConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            intermittent: IntermittentSchedule::default(),
            emotion: EmotionHoldConfig::default(),
            au_table: AuTable::default(),
            initial_mode: MimicryMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationConfig {
    pub limits: HeadLimits,
    pub latency: LatencyConfig,
    pub eca_clamp: EcaClamp,
}

/// Per-condition durations and scenario shape, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub exp1_duration: f64,
    pub exp2_duration: f64,
    pub exp3_duration: f64,
    /// How long each expression is portrayed in the emotion experiment.
    pub exp2_segment: f64,
    pub exp3_change_min: f64,
    pub exp3_change_max: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            exp1_duration: 15.0,
            exp2_duration: 20.0,
            exp3_duration: 30.0,
            exp2_segment: 10.0,
            exp3_change_min: 5.0,
            exp3_change_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bus: BusConfig,
    pub interlocutor: InterlocutorConfig,
    pub perception: PerceptionConfig,
    pub mimicry: MimicryConfig,
    pub actuation: ActuationConfig,
    pub harness: HarnessConfig,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn unit(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let interlocutor = &self.interlocutor;
        positive("interlocutor.depth", interlocutor.depth)?;
        if !(interlocutor.walk_reach.is_finite() && interlocutor.walk_reach >= 0.0) {
            return Err(invalid("interlocutor.walk_reach must be non-negative"));
        }

        let p = &self.perception;
        if !p.camera.is_valid() {
            return Err(invalid("perception.camera: fov must be in (0, 180) and rate positive"));
        }
        unit("perception.misclassify_prob", p.misclassify_prob)?;
        if p.classify_every == 0 {
            return Err(invalid("perception.classify_every must be at least 1"));
        }

        let m = &self.mimicry;
        if !(m.alpha > 0.0 && m.alpha <= 1.0) {
            return Err(invalid(format!("mimicry.alpha must be in (0, 1], got {}", m.alpha)));
        }
        if !m.intermittent.is_valid() {
            return Err(invalid("mimicry.intermittent windows must be positive"));
        }
        if m.emotion.k_debounce == 0 {
            return Err(invalid("mimicry.emotion.k_debounce must be at least 1"));
        }
        if !(m.emotion.min_hold.is_finite() && m.emotion.min_hold >= 0.0) {
            return Err(invalid("mimicry.emotion.min_hold must be non-negative"));
        }
        unit("mimicry.emotion.conf_threshold", m.emotion.conf_threshold)?;
        m.au_table
            .validate()
            .map_err(|e| invalid(format!("mimicry.au_table: {e}")))?;

        let a = &self.actuation;
        if !a.limits.is_valid() {
            return Err(invalid("actuation.limits must all be positive"));
        }
        if !(a.latency.delay.is_finite() && a.latency.delay >= 0.0) {
            return Err(invalid("actuation.latency.delay must be non-negative"));
        }
        if a.latency.delay >= p.camera.period() {
            return Err(invalid("actuation.latency.delay must be shorter than one camera frame"));
        }
        positive("actuation.eca_clamp.pan", a.eca_clamp.pan)?;
        positive("actuation.eca_clamp.tilt", a.eca_clamp.tilt)?;

        let h = &self.harness;
        positive("harness.exp1_duration", h.exp1_duration)?;
        positive("harness.exp2_duration", h.exp2_duration)?;
        positive("harness.exp3_duration", h.exp3_duration)?;
        positive("harness.exp2_segment", h.exp2_segment)?;
        positive("harness.exp3_change_min", h.exp3_change_min)?;
        if !(h.exp3_change_max.is_finite() && h.exp3_change_max >= h.exp3_change_min) {
            return Err(invalid("harness.exp3_change_max must be at least exp3_change_min"));
        }
        Ok(())
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            camera: self.perception.camera,
            alpha: self.mimicry.alpha,
            intermittent: self.mimicry.intermittent,
            emotion: self.mimicry.emotion,
            au_table: self.mimicry.au_table.clone(),
            latency: self.actuation.latency,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interlocutor::EmotionLabel;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = Config::default().to_toml_string();
        assert_eq!(Config::from_toml_str(&text).unwrap(), Config::default());
        assert!(text.contains("pan_max = 35.0"));
    }

    #[test]
    fn partial_override() {
        let c = Config::from_toml_str("[perception]\nmisclassify_prob = 0.0\n[actuation.limits]\nrate_max = 90.0\n").unwrap();
        assert_eq!(c.perception.misclassify_prob, 0.0);
        assert_eq!(c.actuation.limits.rate_max, 90.0);
        assert_eq!(c.actuation.limits.pan_max, 35.0);
    }

    #[test]
    fn au_table_from_toml() {
        let mut text = String::from("[mimicry.au_table]\n");
        for label in EmotionLabel::Neutral.others() {
            text.push_str(&format!("{} = {{ AU1 = 0.5 }}\n", label.name()));
        }
        let c = Config::from_toml_str(&text).unwrap();
        assert_eq!(c.mimicry.au_table.0[&EmotionLabel::Happiness].weight(1), 0.5);
        assert!(Config::from_toml_str("[mimicry.au_table]\nhappiness = { AU6 = 0.6 }\n").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "[perception]\nmisclassify_prob = 1.5",
            "[mimicry]\nalpha = 0.0",
            "[actuation.limits]\npan_max = -1.0",
            "[mimicry.intermittent]\non_window = 0.0",
            "[perception.camera]\nfov_h = 200.0",
            "[harness]\nexp1_duration = 0.0",
            "[bus]\nnope = 1",
        ] {
            assert!(Config::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}
