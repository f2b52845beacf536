//! Action-unit blends and the emotion lookup table.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interlocutor::EmotionLabel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlendError {
    #[error("AU{au} weight {weight} is outside [0, 1]")]
    Weight { au: u8, weight: f64 },
    #[error("expression table has no entry for `{0}`")]
    MissingLabel(&'static str),
    #[error("the neutral expression must be empty")]
    NeutralNotEmpty,
}

/// FACS action-unit weights. Absent units are zero and zero weights are never
/// stored. Serialized as `{"AU6":0.6,"AU12":0.8}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpressionBlend {
    weights: BTreeMap<u8, f64>,
}

impl ExpressionBlend {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, f64)>) -> Self {
        Self {
            weights: pairs.into_iter().filter(|(_, w)| *w != 0.0).collect(),
        }
    }

    pub fn weight(&self, au: u8) -> f64 {
        self.weights.get(&au).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_neutral(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<(), BlendError> {
        for (au, weight) in self.iter() {
            if !(0.0..=1.0).contains(&weight) {
                return Err(BlendError::Weight { au, weight });
            }
        }
        Ok(())
    }
}

impl Serialize for ExpressionBlend {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.weights.len()))?;
        for (au, w) in &self.weights {
            map.serialize_entry(&format!("AU{au}"), w)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ExpressionBlend {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct BlendVisitor;

        impl<'de> Visitor<'de> for BlendVisitor {
            type Value = ExpressionBlend;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of AU<n> to weight")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some((key, weight)) = map.next_entry::<String, f64>()? {
                    let au = key
                        .strip_prefix("AU")
                        .and_then(|n| n.parse::<u8>().ok())
                        .ok_or_else(|| de::Error::custom(format!("bad action unit key `{key}`")))?;
                    pairs.push((au, weight));
                }
                Ok(ExpressionBlend::from_pairs(pairs))
            }
        }

        d.deserialize_map(BlendVisitor)
    }
}

/// Emotion label to blend. Neutral is implicit and always empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuTable(pub BTreeMap<EmotionLabel, ExpressionBlend>);

impl Default for AuTable {
    fn default() -> Self {
        use EmotionLabel::*;
        let rows: [(EmotionLabel, &[(u8, f64)]); 7] = [
            (Happiness, &[(6, 0.6), (12, 0.8)]),
            (Anger, &[(4, 0.8), (5, 0.6), (7, 0.5), (23, 0.6)]),
            (Sadness, &[(1, 0.7), (4, 0.4), (15, 0.8)]),
            (Surprise, &[(1, 0.7), (2, 0.7), (5, 0.6), (26, 0.8)]),
            (Fear, &[(1, 0.6), (2, 0.5), (4, 0.5), (5, 0.7), (20, 0.6), (26, 0.4)]),
            (Disgust, &[(9, 0.8), (15, 0.5), (16, 0.4)]),
            (Contempt, &[(12, 0.5), (14, 0.7)]),
        ];
        Self(
            rows.into_iter()
                .map(|(l, w)| (l, ExpressionBlend::from_pairs(w.iter().copied())))
                .collect(),
        )
    }
}

impl AuTable {
    /// Every non-neutral label present, every weight in range.
    pub fn validate(&self) -> Result<(), BlendError> {
        for label in EmotionLabel::Neutral.others() {
            self.0
                .get(&label)
                .ok_or(BlendError::MissingLabel(label.name()))?
                .validate()?;
        }
        if self.0.get(&EmotionLabel::Neutral).is_some_and(|b| !b.is_neutral()) {
            return Err(BlendError::NeutralNotEmpty);
        }
        Ok(())
    }
}

pub fn expression_for(label: EmotionLabel, table: &AuTable) -> ExpressionBlend {
    if label == EmotionLabel::Neutral {
        return ExpressionBlend::default();
    }
    table.0.get(&label).cloned().unwrap_or_default()
}
