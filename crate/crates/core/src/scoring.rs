//! Per-detection difficulty scores and per-frame aggregation.
//!
//! The confidence loss rewards mid-confidence detections:
//!
//! ```text
//! L(x) = -Q * x * ln(x) + (1 - x) * e^x / (e^x + 1) + b
//! ```
//!
//! With `Q = 3` and `b = 0.5`, `L(1) = 0.5` and `L(0) = 1.0`, peaking near
//! `x = 0.37`. Because a fully confident detection still costs `b`, the
//! summed frame loss grows with the number of objects, and empty frames
//! score zero.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};
use crate::model::{rank_cmp, FrameDetections};

/// `x * ln(x)`, continuous at 0.
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(CullError::DomainError(x))
    }
}

pub fn confidence_loss(x: f64, q_weight: f64, b_offset: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(confidence_loss_unchecked(x, q_weight, b_offset))
}

fn confidence_loss_unchecked(x: f64, q_weight: f64, b_offset: f64) -> f64 {
    let ex = x.exp();
    -xlnx(x) * q_weight + (1.0 - x) * ex / (ex + 1.0) + b_offset
}

/// Shannon entropy (nats) of a Bernoulli variable with parameter `x`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(-xlnx(x) - xlnx(1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DifficultyScorer {
    ConfidenceLoss { q_weight: f64, b_offset: f64 },
    BinaryEntropy,
}

impl Default for DifficultyScorer {
    fn default() -> Self {
        DifficultyScorer::ConfidenceLoss {
            q_weight: 3.0,
            b_offset: 0.5,
        }
    }
}

impl DifficultyScorer {
    pub fn confidence(q_weight: f64, b_offset: f64) -> Result<Self> {
        if !q_weight.is_finite() || q_weight < 0.0 {
            return Err(CullError::InvalidConfig(format!(
                "q_weight must be finite and >= 0, got {q_weight}"
            )));
        }
        Ok(DifficultyScorer::ConfidenceLoss { q_weight, b_offset })
    }

    pub fn score(&self, x: f64) -> Result<f64> {
        match *self {
            DifficultyScorer::ConfidenceLoss { q_weight, b_offset } => {
                confidence_loss(x, q_weight, b_offset)
            }
            DifficultyScorer::BinaryEntropy => binary_entropy(x),
        }
    }

    // Scores of validated detections are already in [0, 1].
    fn score_validated(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        match *self {
            DifficultyScorer::ConfidenceLoss { q_weight, b_offset } => {
                confidence_loss_unchecked(x, q_weight, b_offset)
            }
            DifficultyScorer::BinaryEntropy => -xlnx(x) - xlnx(1.0 - x),
        }
    }
}

/// Sum of per-detection scores; zero for a frame without detections.
/// Expects a frame that went through [`crate::model::validate_frame`].
pub fn frame_difficulty(frame: &FrameDetections, scorer: &DifficultyScorer) -> f64 {
    frame
        .detections
        .iter()
        .map(|d| scorer.score_validated(d.score))
        .sum()
}

/// Sorts by difficulty descending, ties by frame id ascending.
pub fn rank_frames(mut difficulties: Vec<(String, f64)>) -> Result<Vec<(String, f64)>> {
    let mut seen = HashSet::with_capacity(difficulties.len());
    for (id, _) in &difficulties {
        if !seen.insert(id.as_str()) {
            return Err(CullError::DuplicateFrameId(id.clone()));
        }
    }
    difficulties.sort_by(|a, b| rank_cmp(&a.0, a.1, &b.0, b.1));
    Ok(difficulties)
}
