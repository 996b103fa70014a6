//! Two-stage culling and the alternative selection strategies.
//!
//! Stage 1 scores every student frame with a [`DifficultyScorer`] and keeps
//! the `stage1_keep` hardest in a bounded heap. Stage 2 runs the teacher on
//! those survivors only, scores each frame by `1 - AP` of the student against
//! the teacher, and keeps the `target_n` hardest.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};
use crate::io::round_sig9;
use crate::metrics::frame_precision_difficulty;
use crate::model::{
    rank_cmp, validate_frame, CullConfig, FrameDetections, Manifest, ManifestEntry, ManifestStage,
    Source,
};
use crate::optres;
use crate::scoring::{frame_difficulty, rank_frames, DifficultyScorer};

/// Frames handed to the thread pool at a time during stage 1.
const STAGE1_CHUNK: usize = 2048;

/// Runs a detector on one frame at one input scale.
///
/// Implementations must be deterministic in `(frame_id, scale)` and report
/// boxes in full-resolution coordinates.
pub trait DetectorAdapter: Send + Sync {
    fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections>;
}

impl<A: DetectorAdapter + ?Sized> DetectorAdapter for &A {
    fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections> {
        (**self).detect(frame_id, scale)
    }
}

/// Wraps an adapter and counts calls.
pub struct CountingAdapter<A> {
    inner: A,
    calls: AtomicUsize,
}

impl<A> CountingAdapter<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::Relaxed)
    }

    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A: DetectorAdapter> DetectorAdapter for CountingAdapter<A> {
    fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections> {
        self.calls.fetch_add(1, AtomicOrdering::Relaxed);
        self.inner.detect(frame_id, scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Ranked {
    id: String,
    difficulty: f64,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    /// Greater means ranked earlier (harder, or equally hard with smaller id).
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&other.id, other.difficulty, &self.id, self.difficulty)
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `k` best-ranked frames seen so far.
///
/// Duplicate ids are reported when both copies compete for a retained slot;
/// the retained set never holds an id twice.
struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
    retained: HashSet<String>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
            retained: HashSet::with_capacity(k + 1),
        }
    }

    fn push(&mut self, id: String, difficulty: f64) -> Result<()> {
        if self.retained.contains(&id) {
            return Err(CullError::DuplicateFrameId(id));
        }
        let item = Ranked { id, difficulty };
        if self.heap.len() < self.k {
            self.retained.insert(item.id.clone());
            self.heap.push(Reverse(item));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if item > *worst {
                if let Some(Reverse(evicted)) = self.heap.pop() {
                    self.retained.remove(&evicted.id);
                }
                self.retained.insert(item.id.clone());
                self.heap.push(Reverse(item));
            }
        }
        Ok(())
    }

    fn into_ranked(self) -> Vec<(String, f64)> {
        let mut items: Vec<Ranked> = self.heap.into_iter().map(|Reverse(r)| r).collect();
        items.sort_by(|a, b| b.cmp(a));
        items.into_iter().map(|r| (r.id, r.difficulty)).collect()
    }
}

/// Result of a bounded-memory ranking pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub ranked: Vec<(String, f64)>,
    /// Number of frames consumed from the stream.
    pub input_count: usize,
}

/// Scores a stream in parallel chunks and keeps the `keep_n` hardest items.
/// The output does not depend on chunking or thread count.
pub fn streaming_top_k<T, I, F>(items: I, keep_n: usize, score: F) -> Result<Stage1Output>
where
    I: IntoIterator<Item = T>,
    T: Send,
    F: Fn(T) -> Result<(String, f64)> + Sync,
{
    if keep_n == 0 {
        return Err(CullError::InvalidConfig(
            "keep count must be positive".into(),
        ));
    }
    let mut top = TopK::new(keep_n);
    let mut input_count = 0usize;
    let mut iter = items.into_iter();
    loop {
        let chunk: Vec<T> = iter.by_ref().take(STAGE1_CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        input_count += chunk.len();
        let scored: Vec<Result<(String, f64)>> = chunk.into_par_iter().map(&score).collect();
        for item in scored {
            let (id, difficulty) = item?;
            top.push(id, difficulty)?;
        }
    }
    Ok(Stage1Output {
        ranked: top.into_ranked(),
        input_count,
    })
}

fn require_source(frame: &FrameDetections, expected: Source) -> Result<()> {
    if frame.source == expected {
        Ok(())
    } else {
        Err(CullError::WrongSource {
            frame_id: frame.frame_id.clone(),
            expected,
            found: frame.source,
        })
    }
}

/// Confidence stage over a stream of student frames.
pub fn cull_stage1<I>(
    student_frames: I,
    scorer: &DifficultyScorer,
    keep_n: usize,
    score_floor: f64,
) -> Result<Stage1Output>
where
    I: IntoIterator<Item = Result<FrameDetections>>,
{
    streaming_top_k(student_frames, keep_n, |frame| {
        let frame = validate_frame(frame?, score_floor)?;
        require_source(&frame, Source::Student)?;
        let difficulty = frame_difficulty(&frame, scorer);
        Ok((frame.frame_id, difficulty))
    })
}

/// Confidence stage driven by a student adapter at full resolution.
pub fn cull_stage1_with_adapter<I>(
    frame_ids: I,
    student: &dyn DetectorAdapter,
    scorer: &DifficultyScorer,
    keep_n: usize,
    score_floor: f64,
) -> Result<Stage1Output>
where
    I: IntoIterator<Item = String>,
{
    streaming_top_k(frame_ids, keep_n, |id| {
        let frame = validate_frame(student.detect(&id, 1.0)?, score_floor)?;
        require_source(&frame, Source::Student)?;
        if frame.frame_id != id {
            return Err(CullError::Adapter {
                frame_id: id,
                scale: 1.0,
                reason: format!("adapter answered for frame `{}`", frame.frame_id),
            });
        }
        Ok((id, frame_difficulty(&frame, scorer)))
    })
}

/// `1 - AP` of the student against the teacher for one frame.
pub fn precision_difficulty(
    frame_id: &str,
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
    iou_threshold: f64,
    score_floor: f64,
) -> Result<f64> {
    let student_frame = validate_frame(student.detect(frame_id, 1.0)?, score_floor)?;
    require_source(&student_frame, Source::Student)?;
    let teacher_frame = match teacher.detect(frame_id, 1.0) {
        Ok(frame) => validate_frame(frame, score_floor)?,
        Err(CullError::MissingFrame { .. }) => {
            return Err(CullError::MissingTeacherFrame(frame_id.to_string()))
        }
        Err(e) => return Err(e),
    };
    require_source(&teacher_frame, Source::Teacher)?;
    Ok(frame_precision_difficulty(&student_frame, &teacher_frame, iou_threshold)?.difficulty())
}

/// Precision stage: the `target_n` candidates with the highest `1 - AP`.
/// Returns every candidate, re-ranked, when there are fewer than `target_n`.
pub fn cull_stage2(
    candidates: &[String],
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
    iou_threshold: f64,
    target_n: usize,
    score_floor: f64,
) -> Result<Vec<(String, f64)>> {
    let scored: Vec<(String, f64)> = candidates
        .par_iter()
        .map(|id| {
            precision_difficulty(id, student, teacher, iou_threshold, score_floor)
                .map(|d| (id.clone(), d))
        })
        .collect::<Result<_>>()?;
    let mut ranked = rank_frames(scored)?;
    ranked.truncate(target_n);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub input_count: usize,
    pub stage1_survivors: Vec<String>,
    pub stage2_survivors: Vec<String>,
    /// `(input / stage 1, stage 1 / stage 2)`.
    pub per_stage_reduction: (f64, f64),
}

impl StageTrace {
    pub fn new(input_count: usize, stage1: Vec<String>, stage2: Vec<String>) -> Self {
        let ratio = |a: usize, b: usize| {
            if b == 0 {
                f64::INFINITY
            } else {
                a as f64 / b as f64
            }
        };
        let per_stage_reduction = (
            ratio(input_count, stage1.len()),
            ratio(stage1.len(), stage2.len()),
        );
        Self {
            input_count,
            stage1_survivors: stage1,
            stage2_survivors: stage2,
            per_stage_reduction,
        }
    }

    pub fn total_reduction(&self) -> f64 {
        self.input_count as f64 / self.stage2_survivors.len() as f64
    }
}

/// Builds a manifest with difficulties at their persisted precision. The
/// order is re-established on the rounded values so that it survives a
/// write/read cycle.
pub fn manifest_from_ranked(
    config: &CullConfig,
    stage: ManifestStage,
    ranked: &[(String, f64)],
    source_count: u64,
    chosen_scale: f64,
) -> Manifest {
    let mut entries: Vec<ManifestEntry> = ranked
        .iter()
        .map(|(id, d)| ManifestEntry::new(id.clone(), round_sig9(*d)))
        .collect();
    entries.sort_by(|a, b| rank_cmp(&a.frame_id, a.difficulty, &b.frame_id, b.difficulty));
    Manifest {
        stage,
        config: config.clone(),
        chosen_scale,
        source_count,
        entries,
    }
}

pub fn confidence_scorer(config: &CullConfig) -> DifficultyScorer {
    DifficultyScorer::ConfidenceLoss {
        q_weight: config.q_weight,
        b_offset: config.b_offset,
    }
}

/// Full culling pipeline. The teacher is only queried for stage-1 survivors.
pub fn run_pipeline<I>(
    config: &CullConfig,
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
    frame_ids: I,
    opt_resolution: bool,
) -> Result<(Manifest, StageTrace)>
where
    I: IntoIterator<Item = String>,
{
    config.validate()?;
    let scorer = confidence_scorer(config);
    let stage1 = cull_stage1_with_adapter(
        frame_ids,
        student,
        &scorer,
        config.stage1_keep,
        config.score_floor,
    )?;
    if stage1.input_count == 0 {
        return Err(CullError::EmptyStream);
    }
    let candidates: Vec<String> = stage1.ranked.into_iter().map(|(id, _)| id).collect();
    let ranked = cull_stage2(
        &candidates,
        student,
        teacher,
        config.iou_threshold,
        config.target_n,
        config.score_floor,
    )?;
    let survivors: Vec<String> = ranked.iter().map(|(id, _)| id.clone()).collect();
    let chosen_scale = if opt_resolution {
        optres::select_scale(&survivors, student, config)?.0
    } else {
        1.0
    };
    let manifest = manifest_from_ranked(
        config,
        ManifestStage::Culled,
        &ranked,
        stage1.input_count as u64,
        chosen_scale,
    );
    manifest.validate()?;
    Ok((
        manifest,
        StageTrace::new(stage1.input_count, candidates, survivors),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every `stride`-th frame; `None` picks `floor(len / target_n)`.
    Intermittent(Option<usize>),
    Entropy,
    Confidence,
    Precision,
    ConfidencePlusPrecision,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Intermittent(None),
        Strategy::Entropy,
        Strategy::Confidence,
        Strategy::Precision,
        Strategy::ConfidencePlusPrecision,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Intermittent(_) => "intermittent",
            Strategy::Entropy => "entropy",
            Strategy::Confidence => "confidence",
            Strategy::Precision => "precision",
            Strategy::ConfidencePlusPrecision => "confidence+precision",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = CullError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "intermittent" => Ok(Strategy::Intermittent(None)),
            "entropy" => Ok(Strategy::Entropy),
            "confidence" => Ok(Strategy::Confidence),
            "precision" => Ok(Strategy::Precision),
            "confidence+precision" | "confidence-precision" | "culling" => {
                Ok(Strategy::ConfidencePlusPrecision)
            }
            other => Err(CullError::InvalidConfig(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

/// Selects up to `target_n` frames with the given strategy.
pub fn run_strategy<I>(
    strategy: Strategy,
    config: &CullConfig,
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
    frame_ids: I,
) -> Result<Manifest>
where
    I: IntoIterator<Item = String>,
{
    config.validate()?;
    let single_stage = |scorer: DifficultyScorer, ids: I| -> Result<Manifest> {
        let out =
            cull_stage1_with_adapter(ids, student, &scorer, config.target_n, config.score_floor)?;
        if out.input_count == 0 {
            return Err(CullError::EmptyStream);
        }
        Ok(manifest_from_ranked(
            config,
            ManifestStage::Culled,
            &out.ranked,
            out.input_count as u64,
            1.0,
        ))
    };
    let manifest = match strategy {
        Strategy::Intermittent(stride) => {
            let ids: Vec<String> = frame_ids.into_iter().collect();
            if ids.is_empty() {
                return Err(CullError::EmptyStream);
            }
            let stride = match stride {
                Some(0) => {
                    return Err(CullError::InvalidConfig("stride must be at least 1".into()))
                }
                Some(s) => s,
                None => (ids.len() / config.target_n).max(1),
            };
            let picked: Vec<(String, f64)> = ids
                .iter()
                .step_by(stride)
                .take(config.target_n)
                .map(|id| (id.clone(), 0.0))
                .collect();
            let ranked = rank_frames(picked)?;
            manifest_from_ranked(
                config,
                ManifestStage::Culled,
                &ranked,
                ids.len() as u64,
                1.0,
            )
        }
        Strategy::Entropy => single_stage(DifficultyScorer::BinaryEntropy, frame_ids)?,
        Strategy::Confidence => single_stage(confidence_scorer(config), frame_ids)?,
        Strategy::Precision => {
            let ids: Vec<String> = frame_ids.into_iter().collect();
            if ids.is_empty() {
                return Err(CullError::EmptyStream);
            }
            let ranked = cull_stage2(
                &ids,
                student,
                teacher,
                config.iou_threshold,
                config.target_n,
                config.score_floor,
            )?;
            manifest_from_ranked(
                config,
                ManifestStage::Culled,
                &ranked,
                ids.len() as u64,
                1.0,
            )
        }
        Strategy::ConfidencePlusPrecision => {
            run_pipeline(config, student, teacher, frame_ids, false)?.0
        }
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Fraction of `b`'s frames that `a` also kept. An empty `b` gives 1.0.
pub fn overlap_report(a: &Manifest, b: &Manifest) -> f64 {
    if b.entries.is_empty() {
        return 1.0;
    }
    let kept: HashSet<&str> = a.ids().collect();
    let shared = b.ids().filter(|id| kept.contains(id)).count();
    shared as f64 / b.entries.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Detection};
    use std::collections::HashMap;

    /// Student frames whose confidence loss is a chosen count of `b`.
    struct TableAdapter {
        frames: HashMap<String, FrameDetections>,
    }

    impl DetectorAdapter for TableAdapter {
        fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections> {
            self.frames
                .get(frame_id)
                .cloned()
                .ok_or_else(|| CullError::MissingFrame {
                    frame_id: frame_id.to_string(),
                    origin: Source::Teacher,
                    scale,
                })
        }
    }

    fn boxes(n: usize, source: Source, id: &str) -> FrameDetections {
        let dets = (0..n)
            .map(|i| Detection {
                class_id: 0,
                bbox: BoundingBox::new(i as f64 * 100.0, 0.0, 10.0, 10.0).unwrap(),
                score: 1.0,
            })
            .collect();
        FrameDetections::new(id, source, 1.0).with_detections(dets)
    }

    fn id(i: usize) -> String {
        format!("f{i:03}")
    }

    #[test]
    fn top_k_keeps_hardest() {
        let out = streaming_top_k(1..=10usize, 3, |i| Ok((id(i), i as f64))).unwrap();
        assert_eq!(out.input_count, 10);
        let diffs: Vec<f64> = out.ranked.iter().map(|r| r.1).collect();
        assert_eq!(diffs, vec![10.0, 9.0, 8.0]);

        let out = streaming_top_k(1..=4usize, 10, |i| Ok((id(i), 1.0))).unwrap();
        let ids: Vec<&str> = out.ranked.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(ids, vec!["f001", "f002", "f003", "f004"]);
    }

    #[test]
    fn top_k_reports_retained_duplicates() {
        let err = streaming_top_k(vec![1usize, 1], 5, |i| Ok((id(i), 1.0))).unwrap_err();
        assert!(matches!(err, CullError::DuplicateFrameId(_)));
        assert!(streaming_top_k(vec![1usize], 0, |i| Ok((id(i), 1.0))).is_err());
    }

    #[test]
    fn stage1_rejects_teacher_frames() {
        let frames = vec![Ok(boxes(1, Source::Teacher, "a"))];
        let err = cull_stage1(frames, &DifficultyScorer::default(), 1, 0.05).unwrap_err();
        assert!(matches!(err, CullError::WrongSource { .. }));
    }

    #[test]
    fn stage1_scores_by_object_count() {
        let frames = (0..6).map(|i| Ok(boxes(i, Source::Student, &id(i))));
        let out = cull_stage1(frames, &DifficultyScorer::default(), 2, 0.05).unwrap();
        assert_eq!(out.ranked, vec![(id(5), 2.5), (id(4), 2.0)]);
    }

    #[test]
    fn stage2_prefers_frames_the_student_misses() {
        let mut student = HashMap::new();
        let mut teacher = HashMap::new();
        for i in 0..6 {
            teacher.insert(id(i), boxes(2, Source::Teacher, &id(i)));
            let n = if i == 1 || i == 4 { 0 } else { 2 };
            student.insert(id(i), boxes(n, Source::Student, &id(i)));
        }
        student.insert("nope".into(), boxes(1, Source::Student, "nope"));
        let student = TableAdapter { frames: student };
        let teacher = TableAdapter { frames: teacher };
        let candidates: Vec<String> = (0..6).map(id).collect();
        let out = cull_stage2(&candidates, &student, &teacher, 0.5, 2, 0.05).unwrap();
        assert_eq!(out, vec![(id(1), 1.0), (id(4), 1.0)]);

        let all = cull_stage2(&candidates, &student, &teacher, 0.5, 6, 0.05).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[2], (id(0), 0.0));

        let missing = vec!["nope".to_string()];
        let err = cull_stage2(&missing, &student, &teacher, 0.5, 1, 0.05).unwrap_err();
        assert!(matches!(err, CullError::MissingTeacherFrame(_)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("random".parse::<Strategy>().is_err());
    }

    #[test]
    fn overlap_fraction() {
        let config = CullConfig::for_target(4);
        let make = |ids: &[&str]| {
            let ranked: Vec<(String, f64)> = ids.iter().map(|s| (s.to_string(), 0.0)).collect();
            manifest_from_ranked(&config, ManifestStage::Culled, &ranked, 10, 1.0)
        };
        let m = make(&["a", "b", "c", "d"]);
        assert_eq!(overlap_report(&m, &m), 1.0);
        assert_eq!(overlap_report(&make(&["x", "y"]), &m), 0.0);
        assert_eq!(overlap_report(&make(&["a", "b"]), &m), 0.5);
    }

    #[test]
    fn trace_reductions() {
        let t = StageTrace::new(100, (0..20).map(id).collect(), (0..4).map(id).collect());
        assert_eq!(t.per_stage_reduction, (5.0, 5.0));
        assert_eq!(t.total_reduction(), 25.0);
    }
}
