//! Synthetic scenes with planted difficulty and simulated detectors.
//!
//! Each scene is a list of objects with a known `hardness` and the smallest
//! input scale at which the student can still see them. The simulated
//! student turns hardness into lower confidence, worse localization and
//! occasional false positives; the simulated teacher sees everything. This
//! gives the pipeline a ground truth to be measured against without any
//! real network.
//!
//! All randomness is a pure function of the seed and the frame/object
//! identity, so adapters are deterministic and safe to call concurrently.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CullError, Result};
use crate::model::{validate_scale, BoundingBox, Detection, FrameDetections, Source};
use crate::pipeline::DetectorAdapter;
use crate::scoring::rank_frames;

const CANVAS_W: f64 = 1920.0;
const CANVAS_H: f64 = 1080.0;
const GRID_COLS: usize = 8;
const GRID_ROWS: usize = 5;
const CELL_W: f64 = CANVAS_W / GRID_COLS as f64;
const CELL_H: f64 = CANVAS_H / GRID_ROWS as f64;

/// Hardness range of ordinary objects.
const EASY_HARDNESS: (f64, f64) = (0.0, 0.05);
/// Hardness range of hard objects; strictly above 0.7 and below
/// `1 - detectability_floor`, so hard objects are seen with low confidence
/// rather than missed outright.
const HARD_HARDNESS: (f64, f64) = (0.72, 0.9);
/// Chance that an additional object in a hard frame is hard too.
const EXTRA_HARD_SHARE: f64 = 0.5;

/// Objects narrower than this many pixels after downscaling are invisible.
const MIN_VISIBLE_PIXELS: f64 = 20.0;

const TAG_ROLES: u64 = 0x524f_4c45;
const TAG_FRAME: u64 = 0x4652_414d;
const TAG_NOISE: u64 = 0x4e4f_4953;
const TAG_SHIFT: u64 = 0x5348_4946;
const TAG_FALSE_POSITIVE: u64 = 0x4650_4f53;
const TAG_FP_SCORE: u64 = 0x4650_5343;
const TAG_FP_CELL: u64 = 0x4650_434c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_frames: usize,
    /// Fraction of frames without any object.
    pub empty_frame_fraction: f64,
    /// Fraction of frames with at least one object of hardness above 0.7.
    pub hard_frame_fraction: f64,
    /// Inclusive object-count range for non-empty frames.
    pub objects_per_frame: (usize, usize),
    /// Half-width of the uniform confidence noise.
    pub confidence_noise: f64,
    pub class_count: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 2019,
            n_frames: 1_000,
            empty_frame_fraction: 0.4,
            hard_frame_fraction: 1.0 / 60.0,
            objects_per_frame: (1, 3),
            confidence_noise: 0.03,
            class_count: 2,
        }
    }
}

impl SynthParams {
    /// The fixed-seed dataset used to compare selection strategies: 7,680
    /// frames of which 128 are hard, matching a target size of 128.
    pub fn ablation_fixture() -> Self {
        Self {
            n_frames: 7_680,
            ..Self::default()
        }
    }

    /// One day of 1 fps video.
    pub fn surveillance_day(seed: u64) -> Self {
        Self {
            seed,
            n_frames: 86_400,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CullError::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.empty_frame_fraction) {
            return bad("empty_frame_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.hard_frame_fraction) {
            return bad("hard_frame_fraction must lie in [0, 1]");
        }
        if self.objects_per_frame.0 > self.objects_per_frame.1 {
            return bad("objects_per_frame must satisfy min <= max");
        }
        if !(self.confidence_noise >= 0.0 && self.confidence_noise.is_finite()) {
            return bad("confidence_noise must be finite and >= 0");
        }
        if self.class_count == 0 {
            return bad("class_count must be at least 1");
        }
        Ok(())
    }

    pub fn empty_count(&self) -> usize {
        (self.n_frames as f64 * self.empty_frame_fraction).round() as usize
    }

    pub fn hard_count(&self) -> usize {
        let wanted = (self.n_frames as f64 * self.hard_frame_fraction).round() as usize;
        wanted.min(self.n_frames - self.empty_count().min(self.n_frames))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class_id: u32,
    pub bbox: BoundingBox,
    pub hardness: f64,
    /// Below this input scale the student cannot see the object.
    pub min_visible_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub frame_id: String,
    pub objects: Vec<SceneObject>,
}

impl SyntheticScene {
    pub fn total_hardness(&self) -> f64 {
        self.objects.iter().map(|o| o.hardness).sum()
    }
}

pub fn frame_id(index: usize) -> String {
    format!("frame_{index:06}")
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Uniform draw in `[0, 1)` keyed by identity rather than call order.
fn unit_draw(seed: u64, frame_id: &str, object: usize, tag: u64) -> f64 {
    let mut h = splitmix64(seed ^ fnv1a(frame_id));
    h = splitmix64(h ^ (object as u64).wrapping_mul(0x9e37_79b9));
    h = splitmix64(h ^ tag);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Empty,
    Hard,
    Easy,
}

pub fn generate_dataset(params: &SynthParams) -> Result<Vec<SyntheticScene>> {
    params.validate()?;
    let n_empty = params.empty_count().min(params.n_frames);
    let n_hard = params.hard_count();
    let mut roles = vec![Role::Easy; params.n_frames];
    roles[..n_empty].fill(Role::Empty);
    roles[n_empty..n_empty + n_hard].fill(Role::Hard);
    roles.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(
        params.seed ^ TAG_ROLES,
    )));

    Ok(roles
        .into_iter()
        .enumerate()
        .map(|(index, role)| generate_scene(params, index, role))
        .collect())
}

fn generate_scene(params: &SynthParams, index: usize, role: Role) -> SyntheticScene {
    let frame_id = frame_id(index);
    if role == Role::Empty {
        return SyntheticScene {
            frame_id,
            objects: Vec::new(),
        };
    }
    let seed = splitmix64(splitmix64(params.seed ^ TAG_FRAME) ^ index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = params.objects_per_frame.0.max(1);
    let hi = params.objects_per_frame.1.max(lo);
    let count = rng.gen_range(lo..=hi).min(GRID_COLS * GRID_ROWS);
    let cells = sample(&mut rng, GRID_COLS * GRID_ROWS, count);

    let objects = cells
        .iter()
        .enumerate()
        .map(|(j, cell)| {
            let hard = role == Role::Hard && (j == 0 || rng.gen_bool(EXTRA_HARD_SHARE));
            let hardness = if hard {
                rng.gen_range(HARD_HARDNESS.0..HARD_HARDNESS.1)
            } else {
                rng.gen_range(EASY_HARDNESS.0..EASY_HARDNESS.1)
            };
            let w = rng.gen_range(48.0..200.0);
            let h = rng.gen_range(48.0..190.0);
            let col = (cell % GRID_COLS) as f64;
            let row = (cell / GRID_COLS) as f64;
            let x = col * CELL_W + rng.gen_range(0.0..(CELL_W - w));
            let y = row * CELL_H + rng.gen_range(0.0..(CELL_H - h));
            SceneObject {
                class_id: rng.gen_range(0..params.class_count),
                bbox: BoundingBox { x, y, w, h },
                hardness,
                min_visible_scale: (MIN_VISIBLE_PIXELS / w).clamp(0.05, 0.95),
            }
        })
        .collect();
    SyntheticScene { frame_id, objects }
}

/// Confidence lost to downscaling: zero at or above `onset`, rising
/// linearly to 1 at scale 0.
pub fn visibility_penalty(scale: f64, onset: f64) -> f64 {
    ((onset - scale) / onset).max(0.0)
}

/// How the simulated student reacts to hardness and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModel {
    pub seed: u64,
    pub confidence_noise: f64,
    /// Detections that would score below this are not emitted.
    pub detectability_floor: f64,
    /// Horizontal box shift as a fraction of width, per unit hardness.
    pub localization_error: f64,
    /// Per-object false-positive probability, per unit hardness.
    pub false_positive_rate: f64,
}

impl StudentModel {
    pub fn from_params(params: &SynthParams) -> Self {
        Self {
            seed: params.seed,
            confidence_noise: params.confidence_noise,
            detectability_floor: 0.1,
            localization_error: 0.6,
            false_positive_rate: 0.5,
        }
    }

    /// Noise-free variant, mostly for tests.
    pub fn exact(seed: u64) -> Self {
        Self {
            seed,
            confidence_noise: 0.0,
            detectability_floor: 0.1,
            localization_error: 0.6,
            false_positive_rate: 0.0,
        }
    }

    /// Student confidence for object `index` of `scene`, or `None` when the
    /// object is not visible at `scale`.
    pub fn object_score(&self, scene: &SyntheticScene, index: usize, scale: f64) -> Option<f64> {
        let obj = &scene.objects[index];
        if scale < obj.min_visible_scale {
            return None;
        }
        // Blur starts at twice the vanishing scale.
        let onset = (2.0 * obj.min_visible_scale).min(1.0);
        let noise = self.confidence_noise
            * (2.0 * unit_draw(self.seed, &scene.frame_id, index, TAG_NOISE) - 1.0);
        let score = (1.0 - obj.hardness - visibility_penalty(scale, onset) + noise).clamp(0.0, 1.0);
        (score >= self.detectability_floor).then_some(score)
    }
}

fn cell_of(bbox: &BoundingBox) -> usize {
    let col = ((bbox.x / CELL_W).floor() as usize).min(GRID_COLS - 1);
    let row = ((bbox.y / CELL_H).floor() as usize).min(GRID_ROWS - 1);
    row * GRID_COLS + col
}

/// A box in a grid cell no object occupies, or below the canvas if none.
fn free_box(scene: &SyntheticScene, like: &BoundingBox, pick: f64) -> BoundingBox {
    let cells = GRID_COLS * GRID_ROWS;
    let used: Vec<usize> = scene.objects.iter().map(|o| cell_of(&o.bbox)).collect();
    let start = (pick * cells as f64) as usize;
    let free = (0..cells)
        .map(|k| (start + k) % cells)
        .find(|c| !used.contains(c));
    let (w, h) = (like.w.min(CELL_W - 10.0), like.h.min(CELL_H - 10.0));
    match free {
        Some(c) => BoundingBox {
            x: (c % GRID_COLS) as f64 * CELL_W + 5.0,
            y: (c / GRID_COLS) as f64 * CELL_H + 5.0,
            w,
            h,
        },
        None => BoundingBox {
            x: like.x,
            y: like.y + CANVAS_H,
            w,
            h,
        },
    }
}

pub fn simulate_student(
    scene: &SyntheticScene,
    scale: f64,
    model: &StudentModel,
) -> FrameDetections {
    let mut detections = Vec::with_capacity(scene.objects.len());
    let mut false_positives = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        let Some(score) = model.object_score(scene, i, scale) else {
            continue;
        };
        let direction = if unit_draw(model.seed, &scene.frame_id, i, TAG_SHIFT) < 0.5 {
            -1.0
        } else {
            1.0
        };
        let mut bbox = obj.bbox;
        bbox.x += direction * model.localization_error * obj.hardness * obj.bbox.w;
        detections.push(Detection {
            class_id: obj.class_id,
            bbox,
            score,
        });

        let fp_draw = unit_draw(model.seed, &scene.frame_id, i, TAG_FALSE_POSITIVE);
        if fp_draw < obj.hardness * model.false_positive_rate {
            let u = unit_draw(model.seed, &scene.frame_id, i, TAG_FP_SCORE);
            let pick = unit_draw(model.seed, &scene.frame_id, i, TAG_FP_CELL);
            false_positives.push(Detection {
                class_id: obj.class_id,
                bbox: free_box(scene, &obj.bbox, pick),
                score: (obj.hardness * (0.3 + 0.5 * u)).clamp(0.0, 1.0),
            });
        }
    }
    detections.extend(false_positives);
    FrameDetections::new(scene.frame_id.clone(), Source::Student, scale).with_detections(detections)
}

/// Every object with its exact box and a confidence of at least 0.95.
pub fn simulate_teacher(scene: &SyntheticScene) -> FrameDetections {
    let detections = scene
        .objects
        .iter()
        .map(|o| Detection {
            class_id: o.class_id,
            bbox: o.bbox,
            score: 1.0 - 0.05 * o.hardness,
        })
        .collect();
    FrameDetections::new(scene.frame_id.clone(), Source::Teacher, 1.0).with_detections(detections)
}

/// The planted objects as ground truth with unit confidence.
pub fn planted_truth(scene: &SyntheticScene) -> FrameDetections {
    let detections = scene
        .objects
        .iter()
        .map(|o| Detection {
            class_id: o.class_id,
            bbox: o.bbox,
            score: 1.0,
        })
        .collect();
    FrameDetections::new(scene.frame_id.clone(), Source::Teacher, 1.0).with_detections(detections)
}

/// Scenes indexed by frame id.
#[derive(Debug, Clone)]
pub struct SceneStore {
    scenes: Vec<SyntheticScene>,
    index: HashMap<String, usize>,
}

impl SceneStore {
    pub fn new(scenes: Vec<SyntheticScene>) -> Result<Self> {
        let mut index = HashMap::with_capacity(scenes.len());
        for (i, scene) in scenes.iter().enumerate() {
            if index.insert(scene.frame_id.clone(), i).is_some() {
                return Err(CullError::DuplicateFrameId(scene.frame_id.clone()));
            }
        }
        Ok(Self { scenes, index })
    }

    pub fn get(&self, frame_id: &str) -> Option<&SyntheticScene> {
        self.index.get(frame_id).map(|&i| &self.scenes[i])
    }

    pub fn scenes(&self) -> &[SyntheticScene] {
        &self.scenes
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = String> + '_ {
        self.scenes.iter().map(|s| s.frame_id.clone())
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn lookup(&self, frame_id: &str, origin: Source, scale: f64) -> Result<&SyntheticScene> {
        self.get(frame_id).ok_or_else(|| CullError::MissingFrame {
            frame_id: frame_id.to_string(),
            origin,
            scale,
        })
    }
}

pub struct SimulatedStudent {
    store: Arc<SceneStore>,
    model: StudentModel,
}

impl SimulatedStudent {
    pub fn new(store: Arc<SceneStore>, model: StudentModel) -> Self {
        Self { store, model }
    }
}

impl DetectorAdapter for SimulatedStudent {
    fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections> {
        validate_scale(scale)?;
        let scene = self.store.lookup(frame_id, Source::Student, scale)?;
        Ok(simulate_student(scene, scale, &self.model))
    }
}

pub struct SimulatedTeacher {
    store: Arc<SceneStore>,
}

impl SimulatedTeacher {
    pub fn new(store: Arc<SceneStore>) -> Self {
        Self { store }
    }
}

impl DetectorAdapter for SimulatedTeacher {
    /// The teacher always runs at full resolution.
    fn detect(&self, frame_id: &str, _scale: f64) -> Result<FrameDetections> {
        Ok(simulate_teacher(self.store.lookup(
            frame_id,
            Source::Teacher,
            1.0,
        )?))
    }
}

/// A generated dataset with both simulated detectors attached.
pub struct SyntheticWorld {
    pub params: SynthParams,
    pub store: Arc<SceneStore>,
    pub student: SimulatedStudent,
    pub teacher: SimulatedTeacher,
}

impl SyntheticWorld {
    pub fn generate(params: SynthParams) -> Result<Self> {
        let store = Arc::new(SceneStore::new(generate_dataset(&params)?)?);
        Ok(Self {
            student: SimulatedStudent::new(store.clone(), StudentModel::from_params(&params)),
            teacher: SimulatedTeacher::new(store.clone()),
            store,
            params,
        })
    }

    pub fn frame_ids(&self) -> Vec<String> {
        self.store.frame_ids().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSet {
    /// Selected frames, hardest first.
    pub ids: Vec<String>,
    /// Set when some selected frame carries no planted hardness at all.
    pub degenerate: bool,
}

impl HardSet {
    /// Fraction of the hard set present in `selected`.
    pub fn recall<'a>(&self, selected: impl IntoIterator<Item = &'a str>) -> f64 {
        if self.ids.is_empty() {
            return 1.0;
        }
        let wanted: std::collections::HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        let hit = selected
            .into_iter()
            .filter(|id| wanted.contains(id))
            .count();
        hit as f64 / self.ids.len() as f64
    }
}

/// The `n` frames with the largest total planted hardness, ties by id.
pub fn oracle_hard_set(scenes: &[SyntheticScene], n: usize) -> Result<HardSet> {
    if n > scenes.len() {
        return Err(CullError::TooFewFrames {
            requested: n,
            available: scenes.len(),
        });
    }
    let totals = scenes
        .iter()
        .map(|s| (s.frame_id.clone(), s.total_hardness()))
        .collect();
    let mut ranked = rank_frames(totals)?;
    ranked.truncate(n);
    Ok(HardSet {
        degenerate: ranked.iter().any(|(_, h)| *h == 0.0),
        ids: ranked.into_iter().map(|(id, _)| id).collect(),
    })
}
