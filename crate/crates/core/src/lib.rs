//! Hard-example culling for fixed-camera detection datasets.
//!
//! A cheap student detector scores every frame of a long video stream; only
//! the hardest frames are sent to an expensive teacher, whose labels are
//! then used to keep the frames the student gets most wrong. The culled set
//! can optionally be assigned a reduced input resolution, and [`cost`]
//! estimates the GPU time saved.
//!
//! ```no_run
//! use cullforge::{run_pipeline, CullConfig, SynthParams, SyntheticWorld};
//!
//! let world = SyntheticWorld::generate(SynthParams::surveillance_day(7)).unwrap();
//! let config = CullConfig::for_target(256);
//! let (manifest, trace) =
//!     run_pipeline(&config, &world.student, &world.teacher, world.frame_ids(), true).unwrap();
//! println!("kept {} of {} frames at scale {}", manifest.entries.len(), trace.input_count, manifest.chosen_scale);
//! ```

pub mod cli;
pub mod cost;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optres;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use cost::{estimate_culled, estimate_full, speedup, CostParams, CostReport};
pub use error::{CullError, Result};
pub use metrics::{average_precision, frame_precision_difficulty, match_greedy, mean_ap};
pub use model::{
    iou, validate_frame, BoundingBox, CullConfig, Detection, FrameDetections, Manifest,
    ManifestEntry, ManifestStage, Source,
};
pub use optres::{choose_scale, mse_vs_fullres, sweep_scales, ScaleSweep};
pub use pipeline::{
    cull_stage1, cull_stage2, overlap_report, run_pipeline, run_strategy, CountingAdapter,
    DetectorAdapter, StageTrace, Strategy,
};
pub use scoring::{
    binary_entropy, confidence_loss, frame_difficulty, rank_frames, DifficultyScorer,
};
pub use synth::{generate_dataset, oracle_hard_set, SynthParams, SyntheticWorld};
