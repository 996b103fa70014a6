//! Domain types shared across the crate and box geometry.
//!
//! Boxes are `(x, y, w, h)` with `(x, y)` the top-left corner, in pixels of
//! the full-resolution frame. Running a detector on a downscaled frame does
//! not rescale stored boxes: adapters always report full-resolution
//! coordinates so losses at different scales stay comparable.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let bbox = Self { x, y, w, h };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CullError::InvalidBox {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
            })
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
}

/// Intersection over union of two valid boxes. Symmetric, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u32,
    pub bbox: BoundingBox,
    /// Prediction confidence in `[0, 1]`.
    pub score: f64,
}

impl Detection {
    pub fn new(class_id: u32, bbox: BoundingBox, score: f64) -> Result<Self> {
        let det = Self {
            class_id,
            bbox,
            score,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(CullError::InvalidScore(self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Student,
    Teacher,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Student => f.write_str("student"),
            Source::Teacher => f.write_str("teacher"),
        }
    }
}

/// Every detection one model produced for one frame at one input scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_id: String,
    pub source: Source,
    pub scale: f64,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame_id: impl Into<String>, source: Source, scale: f64) -> Self {
        Self {
            frame_id: frame_id.into(),
            source,
            scale,
            detections: Vec::new(),
        }
    }

    pub fn with_detections(mut self, detections: Vec<Detection>) -> Self {
        self.detections = detections;
        self
    }
}

pub fn validate_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale <= 1.0 {
        Ok(())
    } else {
        Err(CullError::InvalidScale(scale))
    }
}

/// Checks a frame and drops detections scoring below `score_floor`.
/// Surviving detections keep their order.
pub fn validate_frame(mut frame: FrameDetections, score_floor: f64) -> Result<FrameDetections> {
    if frame.frame_id.is_empty() {
        return Err(CullError::EmptyFrameId);
    }
    validate_scale(frame.scale)?;
    for det in &frame.detections {
        det.validate()?;
    }
    frame.detections.retain(|d| d.score >= score_floor);
    Ok(frame)
}

/// Every tunable of the culling pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CullConfig {
    /// Weight of the low-confidence term of the confidence loss.
    pub q_weight: f64,
    /// Constant offset of the confidence loss.
    pub b_offset: f64,
    /// Survivors of the confidence stage; the teacher sees only these.
    pub stage1_keep: usize,
    /// Size of the final culled dataset.
    pub target_n: usize,
    pub iou_threshold: f64,
    /// Multiplicative step of the resolution sweep.
    pub scale_step: f64,
    pub min_scale: f64,
    /// Per-frame MSE tolerance; the sweep compares against `mse_threshold * N`.
    pub mse_threshold: f64,
    /// Detections below this confidence are ignored.
    pub score_floor: f64,
}

/// Stage-2 reduction factor used to derive `stage1_keep` from `target_n`.
pub const DEFAULT_STAGE2_RATIO: usize = 6;

impl Default for CullConfig {
    fn default() -> Self {
        Self::for_target(256)
    }
}

impl CullConfig {
    /// Defaults with `stage1_keep = 6 * target_n`.
    pub fn for_target(target_n: usize) -> Self {
        Self {
            q_weight: 3.0,
            b_offset: 0.5,
            stage1_keep: target_n * DEFAULT_STAGE2_RATIO,
            target_n,
            iou_threshold: 0.5,
            scale_step: 0.9,
            min_scale: 0.3,
            mse_threshold: 0.05,
            score_floor: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CullError::InvalidConfig(msg));
        if !self.q_weight.is_finite() || self.q_weight < 0.0 {
            return bad(format!(
                "q_weight must be finite and >= 0, got {}",
                self.q_weight
            ));
        }
        if !self.b_offset.is_finite() {
            return bad(format!("b_offset must be finite, got {}", self.b_offset));
        }
        if self.target_n == 0 {
            return bad("target_n must be positive".into());
        }
        if self.stage1_keep == 0 {
            return bad("stage1_keep must be positive".into());
        }
        if self.target_n > self.stage1_keep {
            return bad(format!(
                "target_n ({}) must not exceed stage1_keep ({})",
                self.target_n, self.stage1_keep
            ));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!(
                "iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            ));
        }
        if !(self.scale_step > 0.0 && self.scale_step < 1.0) {
            return bad(format!(
                "scale_step must lie in (0, 1), got {}",
                self.scale_step
            ));
        }
        if !(self.min_scale > 0.0 && self.min_scale < 1.0) {
            return bad(format!(
                "min_scale must lie in (0, 1), got {}",
                self.min_scale
            ));
        }
        if !self.mse_threshold.is_finite() || self.mse_threshold < 0.0 {
            return bad(format!(
                "mse_threshold must be >= 0, got {}",
                self.mse_threshold
            ));
        }
        if !(self.score_floor >= 0.0 && self.score_floor < 1.0) {
            return bad(format!(
                "score_floor must lie in [0, 1), got {}",
                self.score_floor
            ));
        }
        Ok(())
    }
}

/// Ranking order: difficulty descending, then frame id ascending.
pub fn rank_cmp(a_id: &str, a_difficulty: f64, b_id: &str, b_difficulty: f64) -> Ordering {
    b_difficulty
        .total_cmp(&a_difficulty)
        .then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_id: String,
    #[serde(serialize_with = "crate::io::serialize_difficulty")]
    pub difficulty: f64,
}

impl ManifestEntry {
    pub fn new(frame_id: impl Into<String>, difficulty: f64) -> Self {
        Self {
            frame_id: frame_id.into(),
            difficulty,
        }
    }
}

/// Which cut of the pipeline a manifest holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestStage {
    /// Confidence-stage survivors, bounded by `stage1_keep`.
    Stage1,
    /// Final culled set, bounded by `target_n`.
    Culled,
}

/// The culled dataset: kept frames in ranking order plus the chosen scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: ManifestStage,
    pub config: CullConfig,
    pub chosen_scale: f64,
    pub source_count: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.frame_id.as_str())
    }

    pub fn capacity(&self) -> usize {
        match self.stage {
            ManifestStage::Stage1 => self.config.stage1_keep,
            ManifestStage::Culled => self.config.target_n,
        }
    }

    /// True when fewer frames survived than the stage asked for.
    pub fn is_underfilled(&self) -> bool {
        self.entries.len() < self.capacity()
    }

    pub fn validate(&self) -> Result<()> {
        let broken = |msg: String| Err(CullError::Invariant(msg));
        if !(self.chosen_scale > 0.0 && self.chosen_scale <= 1.0) {
            return broken(format!("chosen_scale {} outside (0, 1]", self.chosen_scale));
        }
        if self.entries.len() > self.capacity() {
            return broken(format!(
                "{} entries exceed the stage capacity {}",
                self.entries.len(),
                self.capacity()
            ));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for entry in &self.entries {
            if !seen.insert(entry.frame_id.as_str()) {
                return broken(format!("frame `{}` listed twice", entry.frame_id));
            }
        }
        for pair in self.entries.windows(2) {
            let ord = rank_cmp(
                &pair[0].frame_id,
                pair[0].difficulty,
                &pair[1].frame_id,
                pair[1].difficulty,
            );
            if ord != Ordering::Less {
                return broken(format!(
                    "entries `{}` and `{}` out of ranking order",
                    pair[0].frame_id, pair[1].frame_id
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(score: f64) -> Detection {
        Detection {
            class_id: 0,
            bbox: bb(0.0, 0.0, 10.0, 10.0),
            score,
        }
    }

    #[test]
    fn iou_identical_disjoint_and_shifted() {
        assert_eq!(iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(0.0, 0.0, 2.0, 2.0)), 1.0);
        assert_eq!(iou(&bb(0.0, 0.0, 1.0, 1.0), &bb(5.0, 5.0, 1.0, 1.0)), 0.0);
        let v = iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(1.0, 0.0, 2.0, 2.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(iou(&bb(0.0, 0.0, 1.0, 1.0), &bb(1.0, 0.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn box_rejects_degenerate_sizes() {
        assert!(matches!(
            BoundingBox::new(0.0, 0.0, 0.0, 1.0),
            Err(CullError::InvalidBox { .. })
        ));
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn validate_frame_applies_score_floor() {
        let f = FrameDetections::new("a", Source::Student, 1.0)
            .with_detections(vec![det(0.9), det(0.01)]);
        let out = validate_frame(f, 0.05).unwrap();
        let scores: Vec<f64> = out.detections.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![0.9]);
    }

    #[test]
    fn validate_frame_rejects_bad_input() {
        let mut zero_w = det(0.5);
        zero_w.bbox.w = 0.0;
        let f = FrameDetections::new("a", Source::Student, 1.0).with_detections(vec![zero_w]);
        assert!(matches!(
            validate_frame(f, 0.05),
            Err(CullError::InvalidBox { .. })
        ));

        let f = FrameDetections::new("a", Source::Student, 1.0).with_detections(vec![det(1.5)]);
        assert!(matches!(
            validate_frame(f, 0.05),
            Err(CullError::InvalidScore(_))
        ));

        let f = FrameDetections::new("", Source::Student, 1.0);
        assert!(matches!(
            validate_frame(f, 0.05),
            Err(CullError::EmptyFrameId)
        ));

        let f = FrameDetections::new("a", Source::Student, 0.0);
        assert!(matches!(
            validate_frame(f, 0.05),
            Err(CullError::InvalidScale(_))
        ));
    }

    #[test]
    fn validate_frame_keeps_empty_frames() {
        let f = FrameDetections::new("a", Source::Teacher, 1.0);
        assert_eq!(validate_frame(f.clone(), 0.05).unwrap(), f);
    }

    #[test]
    fn config_defaults_are_consistent() {
        let c = CullConfig::default();
        c.validate().unwrap();
        assert_eq!(c.stage1_keep, 1536);
        assert_eq!(c.target_n, 256);

        let mut c = CullConfig::default();
        c.target_n = c.stage1_keep + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn manifest_validation_catches_order_and_duplicates() {
        let mut m = Manifest {
            stage: ManifestStage::Culled,
            config: CullConfig::for_target(3),
            chosen_scale: 1.0,
            source_count: 10,
            entries: vec![
                ManifestEntry::new("b", 2.0),
                ManifestEntry::new("a", 1.0),
                ManifestEntry::new("c", 1.0),
            ],
        };
        m.validate().unwrap();
        assert!(!m.is_underfilled());

        m.entries.swap(1, 2);
        assert!(matches!(m.validate(), Err(CullError::Invariant(_))));

        m.entries[1] = ManifestEntry::new("a", 1.0);
        m.entries[2] = ManifestEntry::new("a", 0.5);
        assert!(m.validate().is_err());

        m.entries.truncate(1);
        assert!(m.is_underfilled());
    }
}
