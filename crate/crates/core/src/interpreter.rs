//! The interpreter: frame in, perceived (partial) backend model out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::detector::{detect, Detection, TemplateSet};
use crate::model::WarningMode;
use crate::raster::{GlyphClass, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffordanceMapping {
    pub class_to_mode: BTreeMap<GlyphClass, WarningMode>,
    pub absence_mode: WarningMode,
    pub min_score: f64,
}

impl Default for AffordanceMapping {
    fn default() -> Self {
        Self {
            class_to_mode: BTreeMap::from([
                (GlyphClass::Caution, WarningMode::Caution),
                (GlyphClass::Danger, WarningMode::Danger),
            ]),
            absence_mode: WarningMode::Nominal,
            min_score: 0.6,
        }
    }
}

impl AffordanceMapping {
    /// Default mapping whose `min_score` is the detector's threshold.
    pub fn for_templates(ts: &TemplateSet) -> Self {
        Self { min_score: ts.config().score_threshold, ..Default::default() }
    }

    /// Mode of the highest-scoring mapped detection at or above
    /// `min_score` (ties go to the leftmost, then topmost), or the absence
    /// mode when there is none.
    pub fn mode_from_detections(&self, dets: &[Detection]) -> WarningMode {
        dets.iter()
            .filter(|d| d.score >= self.min_score && self.class_to_mode.contains_key(&d.cls))
            .min_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(a.rect.x.cmp(&b.rect.x))
                    .then(a.rect.y.cmp(&b.rect.y))
            })
            .map(|d| self.class_to_mode[&d.cls])
            .unwrap_or(self.absence_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesizedModel {
    /// Only the fields the interpreter can perceive: `{"warningMode": m}`.
    pub tree: Value,
    /// Detections the verdict rests on.
    pub provenance: Vec<Detection>,
}

impl SynthesizedModel {
    pub fn warning_mode(&self) -> Option<WarningMode> {
        self.tree
            .get("warningMode")
            .and_then(Value::as_u64)
            .and_then(|m| WarningMode::try_from(m as u8).ok())
    }
}

pub fn interpret(frame: &Image, ts: &TemplateSet, map: &AffordanceMapping) -> SynthesizedModel {
    let provenance = detect(frame, ts);
    let mode = map.mode_from_detections(&provenance);
    SynthesizedModel { tree: json!({ "warningMode": mode.as_u8() }), provenance }
}

/// Content digest of a frame's pixels and size.
pub fn frame_digest(frame: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(frame.width().to_le_bytes());
    h.update(frame.height().to_le_bytes());
    h.update(frame.pixels());
    h.finalize().into()
}
