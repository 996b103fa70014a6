//! File formats: detection JSONL, COCO result arrays, manifests, config
//! files and the CSV outputs.
//!
//! One detection line looks like
//!
//! ```json
//! {"frame_id":"frame_000042","source":"student","scale":1.0,
//!  "detections":[{"class":0,"bbox":[10.0,20.0,64.0,48.0],"score":0.83}]}
//! ```
//!
//! Unknown fields are ignored. Difficulty values are written with nine
//! significant digits so that reading and re-writing a manifest is
//! byte-stable.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::cost::{CostParams, CostReport};
use crate::error::{CullError, Result};
use crate::model::{
    validate_frame, BoundingBox, CullConfig, Detection, FrameDetections, Manifest, Source,
};
use crate::pipeline::DetectorAdapter;
use crate::synth::SyntheticScene;

pub const MANIFEST_VERSION: u32 = 1;

/// Environment variable naming a fallback config file.
pub const CONFIG_ENV: &str = "CULLFORGE_CONFIG";

/// Rounds to nine significant digits.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

pub fn serialize_difficulty<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*v))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionRecord {
    class: u32,
    bbox: [f64; 4],
    score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionLine {
    frame_id: String,
    source: Source,
    scale: f64,
    #[serde(default)]
    detections: Vec<DetectionRecord>,
}

impl DetectionLine {
    fn into_frame(self) -> Result<FrameDetections> {
        let detections = self
            .detections
            .into_iter()
            .map(|d| {
                let [x, y, w, h] = d.bbox;
                Detection::new(d.class, BoundingBox::new(x, y, w, h)?, d.score)
            })
            .collect::<Result<Vec<_>>>()?;
        // Floor 0.0: only structural checks here; callers apply the real floor.
        validate_frame(
            FrameDetections::new(self.frame_id, self.source, self.scale)
                .with_detections(detections),
            0.0,
        )
    }

    fn from_frame(frame: &FrameDetections) -> Self {
        Self {
            frame_id: frame.frame_id.clone(),
            source: frame.source,
            scale: frame.scale,
            detections: frame
                .detections
                .iter()
                .map(|d| DetectionRecord {
                    class: d.class_id,
                    bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                    score: d.score,
                })
                .collect(),
        }
    }
}

/// Streams frames out of detection JSONL, one line at a time.
pub struct DetectionReader<R> {
    reader: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> DetectionReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for DetectionReader<R> {
    type Item = Result<FrameDetections>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(CullError::Parse {
                        line: self.line,
                        reason: e.to_string(),
                    }))
                }
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let line = self.line;
            let parsed = serde_json::from_str::<DetectionLine>(text)
                .map_err(|e| e.to_string())
                .and_then(|l| l.into_frame().map_err(|e| e.to_string()));
            return Some(parsed.map_err(|reason| CullError::Parse { line, reason }));
        }
    }
}

pub fn parse_detections_jsonl<R: BufRead>(reader: R) -> DetectionReader<R> {
    DetectionReader::new(reader)
}

pub fn open_detections(path: &Path) -> Result<DetectionReader<BufReader<File>>> {
    Ok(DetectionReader::new(BufReader::new(File::open(path)?)))
}

pub fn write_detection_line<W: Write>(writer: &mut W, frame: &FrameDetections) -> Result<()> {
    serde_json::to_writer(&mut *writer, &DetectionLine::from_frame(frame))?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CocoResult {
    image_id: serde_json::Value,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

fn image_key(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Groups a COCO detection-results array by image. Frames come out in order
/// of first appearance, at scale 1.0.
pub fn parse_coco_results<R: Read>(
    reader: R,
    frame_ids: &HashMap<String, String>,
    source: Source,
) -> Result<Vec<FrameDetections>> {
    let results: Vec<CocoResult> =
        serde_json::from_reader(reader).map_err(|e| CullError::Parse {
            line: e.line(),
            reason: e.to_string(),
        })?;
    let mut order: Vec<FrameDetections> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for r in results {
        let key = image_key(&r.image_id);
        let frame_id = frame_ids
            .get(&key)
            .ok_or_else(|| CullError::UnknownImageId(key.clone()))?;
        let [x, y, w, h] = r.bbox;
        let det = Detection::new(r.category_id, BoundingBox::new(x, y, w, h)?, r.score)?;
        let i = *slot.entry(key).or_insert_with(|| {
            order.push(FrameDetections::new(frame_id.clone(), source, 1.0));
            order.len() - 1
        });
        order[i].detections.push(det);
    }
    Ok(order)
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    #[serde(flatten)]
    manifest: Manifest,
}

pub fn manifest_to_string(manifest: &Manifest) -> Result<String> {
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(&ManifestFile {
        version: MANIFEST_VERSION,
        manifest: manifest.clone(),
    })?;
    text.push('\n');
    Ok(text)
}

pub fn write_manifest<W: Write>(writer: &mut W, manifest: &Manifest) -> Result<()> {
    writer.write_all(manifest_to_string(manifest)?.as_bytes())?;
    Ok(())
}

pub fn read_manifest<R: Read>(reader: R) -> Result<Manifest> {
    let file: ManifestFile =
        serde_json::from_reader(reader).map_err(|e| CullError::InvalidManifest(e.to_string()))?;
    if file.version != MANIFEST_VERSION {
        return Err(CullError::InvalidManifest(format!(
            "unsupported version {}",
            file.version
        )));
    }
    file.manifest
        .validate()
        .map_err(|e| CullError::InvalidManifest(e.to_string()))?;
    Ok(file.manifest)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, manifest_to_string(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    read_manifest(BufReader::new(File::open(path)?))
}

/// Optional overrides as found in a JSON config file. Field names mirror
/// [`CullConfig`]; an optional `cost_profile` holds [`CostParams`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub q_weight: Option<f64>,
    pub b_offset: Option<f64>,
    pub stage1_keep: Option<usize>,
    pub target_n: Option<usize>,
    pub iou_threshold: Option<f64>,
    pub scale_step: Option<f64>,
    pub min_scale: Option<f64>,
    pub mse_threshold: Option<f64>,
    pub score_floor: Option<f64>,
    pub cost_profile: Option<CostParams>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CullError::Parse {
            line: e.line(),
            reason: format!("{}: {e}", path.display()),
        })
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            q_weight: other.q_weight.or(self.q_weight),
            b_offset: other.b_offset.or(self.b_offset),
            stage1_keep: other.stage1_keep.or(self.stage1_keep),
            target_n: other.target_n.or(self.target_n),
            iou_threshold: other.iou_threshold.or(self.iou_threshold),
            scale_step: other.scale_step.or(self.scale_step),
            min_scale: other.min_scale.or(self.min_scale),
            mse_threshold: other.mse_threshold.or(self.mse_threshold),
            score_floor: other.score_floor.or(self.score_floor),
            cost_profile: other.cost_profile.or(self.cost_profile),
        }
    }

    /// Fills gaps with defaults. Without an explicit `stage1_keep`, it is
    /// six times the target size.
    pub fn resolve(&self) -> Result<CullConfig> {
        let base = CullConfig::for_target(self.target_n.unwrap_or(256));
        let config = CullConfig {
            q_weight: self.q_weight.unwrap_or(base.q_weight),
            b_offset: self.b_offset.unwrap_or(base.b_offset),
            stage1_keep: self.stage1_keep.unwrap_or(base.stage1_keep),
            target_n: base.target_n,
            iou_threshold: self.iou_threshold.unwrap_or(base.iou_threshold),
            scale_step: self.scale_step.unwrap_or(base.scale_step),
            min_scale: self.min_scale.unwrap_or(base.min_scale),
            mse_threshold: self.mse_threshold.unwrap_or(base.mse_threshold),
            score_floor: self.score_floor.unwrap_or(base.score_floor),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Config precedence: `explicit` file, else the `CULLFORGE_CONFIG` file,
/// else nothing.
pub fn load_config_chain(explicit: Option<&Path>) -> Result<ConfigFile> {
    if let Some(path) = explicit {
        return ConfigFile::load(path);
    }
    match std::env::var_os(CONFIG_ENV) {
        Some(p) if !p.is_empty() => ConfigFile::load(&PathBuf::from(p)),
        _ => Ok(ConfigFile::default()),
    }
}

pub fn write_difficulty_csv<W: Write>(writer: W, rows: &[(String, f64)]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "frame_id,difficulty")?;
    for (id, d) in rows {
        writeln!(w, "{},{}", csv_field(id), round_sig9(*d))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mse_csv<W: Write>(writer: W, scales: &[f64], mse: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "scale,mse")?;
    for (s, m) in scales.iter().zip(mse) {
        writeln!(w, "{s},{}", round_sig9(*m))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn write_cost_report<W: Write>(writer: &mut W, report: &CostReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *writer, report)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_scene_line<W: Write>(writer: &mut W, scene: &SyntheticScene) -> Result<()> {
    serde_json::to_writer(&mut *writer, scene)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_scenes<R: BufRead>(reader: R) -> Result<Vec<SyntheticScene>> {
    let mut scenes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        scenes.push(serde_json::from_str(&line).map_err(|e| CullError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(scenes)
}

/// Key for exact scale lookup; scales compare equal within 1e-9.
fn scale_key(scale: f64) -> i64 {
    (scale * 1e9).round() as i64
}

/// Detector adapter backed by detection records held in memory.
#[derive(Debug, Default)]
pub struct FrameStore {
    frames: HashMap<(String, Source, i64), FrameDetections>,
}

impl FrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: FrameDetections) -> Result<()> {
        let key = (frame.frame_id.clone(), frame.source, scale_key(frame.scale));
        if self.frames.contains_key(&key) {
            return Err(CullError::DuplicateFrameId(format!(
                "{} ({} at scale {})",
                frame.frame_id, frame.source, frame.scale
            )));
        }
        self.frames.insert(key, frame);
        Ok(())
    }

    /// Loads records from JSONL files, keeping only frames in `keep`.
    pub fn load_filtered(paths: &[PathBuf], keep: &HashSet<String>) -> Result<Self> {
        let mut store = Self::new();
        let mut seen_paths = HashSet::new();
        for path in paths {
            if !seen_paths.insert(path.clone()) {
                continue;
            }
            for frame in open_detections(path)? {
                let frame = frame?;
                if keep.contains(&frame.frame_id) {
                    store.insert(frame)?;
                }
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// A view answering for one source only.
    pub fn source(&self, source: Source) -> StoreAdapter<'_> {
        StoreAdapter {
            store: self,
            source,
        }
    }
}

pub struct StoreAdapter<'a> {
    store: &'a FrameStore,
    source: Source,
}

impl DetectorAdapter for StoreAdapter<'_> {
    fn detect(&self, frame_id: &str, scale: f64) -> Result<FrameDetections> {
        // Teacher records exist at full resolution only.
        let scale = if self.source == Source::Teacher {
            1.0
        } else {
            scale
        };
        self.store
            .frames
            .get(&(frame_id.to_string(), self.source, scale_key(scale)))
            .cloned()
            .ok_or_else(|| CullError::MissingFrame {
                frame_id: frame_id.to_string(),
                origin: self.source,
                scale,
            })
    }
}
