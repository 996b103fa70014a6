//! Resolution selection for the culled dataset.
//!
//! The student is re-run on the culled frames at scales `1, r, r^2, ...`
//! and the per-frame confidence losses are compared against the
//! full-resolution ones with an unnormalized sum of squared differences.
//! The smallest scale whose error stays within the threshold wins; one scale
//! is chosen for the whole dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};
use crate::model::{validate_frame, validate_scale, CullConfig};
use crate::pipeline::{confidence_scorer, DetectorAdapter};
use crate::scoring::{frame_difficulty, DifficultyScorer};

/// Per-frame loss at a given input scale.
pub trait LossProbe: Sync {
    fn frame_loss(&self, frame_id: &str, scale: f64) -> Result<f64>;
}

/// Confidence loss of a detector adapter's output.
pub struct AdapterLoss<'a> {
    pub adapter: &'a dyn DetectorAdapter,
    pub scorer: DifficultyScorer,
    pub score_floor: f64,
}

impl LossProbe for AdapterLoss<'_> {
    fn frame_loss(&self, frame_id: &str, scale: f64) -> Result<f64> {
        let annotate = |e: CullError| match e {
            e @ CullError::MissingFrame { .. } => e,
            other => CullError::Adapter {
                frame_id: frame_id.to_string(),
                scale,
                reason: other.to_string(),
            },
        };
        let frame = self.adapter.detect(frame_id, scale).map_err(annotate)?;
        let frame = validate_frame(frame, self.score_floor).map_err(annotate)?;
        Ok(frame_difficulty(&frame, &self.scorer))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSweep {
    /// Evaluated scales, descending from 1.0.
    pub scales: Vec<f64>,
    /// Per scale, the loss of every culled frame in manifest order.
    pub loss_vectors: Vec<Vec<f64>>,
    pub mse_per_scale: Vec<f64>,
}

/// `1, step, step^2, ...` down to and including `min_scale`.
pub fn scale_grid(scale_step: f64, min_scale: f64) -> Result<Vec<f64>> {
    if !(scale_step > 0.0 && scale_step < 1.0) {
        return Err(CullError::InvalidConfig(format!(
            "scale_step must lie in (0, 1), got {scale_step}"
        )));
    }
    if !(min_scale > 0.0 && min_scale < 1.0) {
        return Err(CullError::InvalidConfig(format!(
            "min_scale must lie in (0, 1), got {min_scale}"
        )));
    }
    // Tolerance keeps e.g. 0.9^k == 0.729 on the grid when min_scale is 0.729.
    let floor = min_scale * (1.0 - 1e-12);
    let mut grid = Vec::new();
    let mut k = 0i32;
    loop {
        let s = scale_step.powi(k);
        if s < floor {
            break;
        }
        grid.push(s);
        k += 1;
    }
    Ok(grid)
}

/// Sum of squared differences between full-resolution and scaled losses.
pub fn mse_vs_fullres(full: &[f64], scaled: &[f64]) -> Result<f64> {
    if full.len() != scaled.len() {
        return Err(CullError::LengthMismatch {
            left: full.len(),
            right: scaled.len(),
        });
    }
    Ok(full
        .iter()
        .zip(scaled)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Evaluates the grid in descending order. With `stop_above`, the sweep
/// ends at the first scale whose error exceeds it (that scale is kept).
pub fn sweep_scales(
    frame_ids: &[String],
    probe: &dyn LossProbe,
    scale_step: f64,
    min_scale: f64,
    stop_above: Option<f64>,
) -> Result<ScaleSweep> {
    let grid = scale_grid(scale_step, min_scale)?;
    let mut sweep = ScaleSweep {
        scales: Vec::with_capacity(grid.len()),
        loss_vectors: Vec::with_capacity(grid.len()),
        mse_per_scale: Vec::with_capacity(grid.len()),
    };
    for scale in grid {
        validate_scale(scale)?;
        let losses: Vec<f64> = frame_ids
            .par_iter()
            .map(|id| probe.frame_loss(id, scale))
            .collect::<Result<_>>()?;
        let mse = match sweep.loss_vectors.first() {
            Some(full) => mse_vs_fullres(full, &losses)?,
            None => 0.0,
        };
        sweep.scales.push(scale);
        sweep.loss_vectors.push(losses);
        sweep.mse_per_scale.push(mse);
        if stop_above.is_some_and(|limit| mse > limit) {
            break;
        }
    }
    Ok(sweep)
}

/// Smallest evaluated scale with error at most `mse_threshold`.
pub fn choose_scale(sweep: &ScaleSweep, mse_threshold: f64) -> f64 {
    sweep
        .scales
        .iter()
        .zip(&sweep.mse_per_scale)
        .filter(|(_, mse)| **mse <= mse_threshold)
        .map(|(s, _)| *s)
        .fold(1.0, f64::min)
}

/// Absolute threshold for a culled set of `n` frames.
pub fn total_threshold(per_frame_tolerance: f64, n: usize) -> f64 {
    per_frame_tolerance * n as f64
}

/// Early-stopping sweep with the config's grid and per-frame tolerance.
pub fn select_scale(
    frame_ids: &[String],
    student: &dyn DetectorAdapter,
    config: &CullConfig,
) -> Result<(f64, ScaleSweep)> {
    let probe = AdapterLoss {
        adapter: student,
        scorer: confidence_scorer(config),
        score_floor: config.score_floor,
    };
    let threshold = total_threshold(config.mse_threshold, frame_ids.len());
    let sweep = sweep_scales(
        frame_ids,
        &probe,
        config.scale_step,
        config.min_scale,
        Some(threshold),
    )?;
    Ok((choose_scale(&sweep, threshold), sweep))
}
