//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
//! invariant violation.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cost::{estimate_culled, estimate_full, CostParams};
use crate::error::{CullError, Result};
use crate::io::{
    load_config_chain, load_manifest, open_detections, read_scenes, round_sig9, save_manifest,
    write_cost_report, write_detection_line, write_difficulty_csv, write_mse_csv, write_scene_line,
    ConfigFile, FrameStore,
};
use crate::model::{validate_frame, CullConfig, FrameDetections, Manifest, ManifestStage, Source};
use crate::optres::{scale_grid, select_scale};
use crate::pipeline::{
    confidence_scorer, cull_stage1, cull_stage2, manifest_from_ranked, overlap_report,
    run_pipeline, run_strategy, CountingAdapter, DetectorAdapter, StageTrace, Strategy,
};
use crate::scoring::{frame_difficulty, DifficultyScorer};
use crate::synth::{
    oracle_hard_set, simulate_student, simulate_teacher, HardSet, StudentModel, SynthParams,
    SyntheticWorld,
};

#[derive(Debug, Parser)]
#[command(
    name = "cullforge",
    version,
    about = "Cull video-frame datasets down to hard examples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-frame confidence-loss difficulties as CSV.
    Score(ScoreArgs),
    /// Confidence-stage cull to a stage-1 manifest.
    Stage1(Stage1Args),
    /// Precision-stage cull of a stage-1 manifest using teacher detections.
    Stage2(Stage2Args),
    /// Full pipeline: confidence stage, precision stage, optional resolution search.
    Run(RunArgs),
    /// Resolution sweep over a manifest.
    Optres(OptresArgs),
    /// Compare the five selection strategies against planted difficulty.
    Ablate(AblateArgs),
    /// Cost report for a manifest.
    Report(ReportArgs),
    /// Write a synthetic dataset (scenes, student and teacher detections).
    Synth(SynthArgs),
}

/// Flags shared by every subcommand. They override config-file values.
#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    /// JSON config file; falls back to $CULLFORGE_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long = "target-size", global = true)]
    pub target_size: Option<usize>,
    #[arg(long = "stage1-keep", global = true)]
    pub stage1_keep: Option<usize>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub iou: Option<f64>,
    #[arg(long = "scale-step", global = true)]
    pub scale_step: Option<f64>,
    #[arg(long = "min-scale", global = true)]
    pub min_scale: Option<f64>,
    #[arg(long = "mse-threshold", global = true)]
    pub mse_threshold: Option<f64>,
    #[arg(long = "score-floor", global = true)]
    pub score_floor: Option<f64>,
    /// intermittent | entropy | confidence | precision | confidence+precision
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

impl CommonArgs {
    fn flag_overrides(&self) -> ConfigFile {
        ConfigFile {
            q_weight: self.q,
            b_offset: self.b,
            stage1_keep: self.stage1_keep,
            target_n: self.target_size,
            iou_threshold: self.iou,
            scale_step: self.scale_step,
            min_scale: self.min_scale,
            mse_threshold: self.mse_threshold,
            score_floor: self.score_floor,
            cost_profile: None,
        }
    }

    fn config_file(&self) -> Result<ConfigFile> {
        Ok(load_config_chain(self.config.as_deref())?.overlay(self.flag_overrides()))
    }

    /// Defaults, then config file, then flags.
    fn resolve(&self) -> Result<CullConfig> {
        self.config_file()?.resolve()
    }

    /// Like [`Self::resolve`], with an existing manifest's snapshot in place
    /// of the built-in defaults.
    fn resolve_over(&self, base: &CullConfig) -> Result<CullConfig> {
        let layered = ConfigFile {
            q_weight: Some(base.q_weight),
            b_offset: Some(base.b_offset),
            stage1_keep: Some(base.stage1_keep),
            target_n: Some(base.target_n),
            iou_threshold: Some(base.iou_threshold),
            scale_step: Some(base.scale_step),
            min_scale: Some(base.min_scale),
            mse_threshold: Some(base.mse_threshold),
            score_floor: Some(base.score_floor),
            cost_profile: None,
        }
        .overlay(self.config_file()?);
        layered.resolve()
    }

    fn synth_seed(&self) -> u64 {
        self.seed.unwrap_or(SynthParams::default().seed)
    }
}

/// Where detections come from: JSONL files or the built-in simulator.
#[derive(Debug, Clone, Args, Default)]
pub struct InputArgs {
    /// Student detections (JSONL).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Teacher detections (JSONL); defaults to --detections.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Simulate this many frames instead of reading files.
    #[arg(long, conflicts_with = "detections")]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
pub enum ScorerKind {
    #[default]
    Confidence,
    Entropy,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Confidence)]
    pub scorer: ScorerKind,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct Stage1Args {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct Stage2Args {
    /// Stage-1 manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Also search for the smallest faithful input resolution.
    #[arg(long = "opt-resolution")]
    pub opt_resolution: bool,
    /// Write the stage trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct OptresArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Write the MSE curve (CSV: scale,mse); stdout when absent.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Planted scenes (JSONL) for file input.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cost profile JSON; defaults to the config file's `cost_profile`,
    /// then to the surveillance calibration.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7_680)]
    pub frames: usize,
    #[arg(long = "empty-fraction")]
    pub empty_fraction: Option<f64>,
    #[arg(long = "hard-fraction")]
    pub hard_fraction: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub classes: Option<u32>,
    /// Also write student detections at every swept scale.
    #[arg(long = "with-scales")]
    pub with_scales: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn common(command: &Command) -> &CommonArgs {
    match command {
        Command::Score(a) => &a.common,
        Command::Stage1(a) => &a.common,
        Command::Stage2(a) => &a.common,
        Command::Run(a) => &a.common,
        Command::Optres(a) => &a.common,
        Command::Ablate(a) => &a.common,
        Command::Report(a) => &a.common,
        Command::Synth(a) => &a.common,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let threads = common(&cli.command).threads;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CullError::Invariant(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Stage1(a) => cmd_stage1(a),
        Command::Stage2(a) => cmd_stage2(a),
        Command::Run(a) => cmd_run(a),
        Command::Optres(a) => cmd_optres(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_manifest(manifest: &Manifest, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => save_manifest(p, manifest),
        None => {
            let mut out = output_writer(None)?;
            crate::io::write_manifest(&mut out, manifest)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Student frames at full resolution from a JSONL file; other records skipped.
fn full_res_student(path: &Path) -> Result<impl Iterator<Item = Result<FrameDetections>>> {
    Ok(open_detections(path)?.filter(|r| match r {
        Ok(f) => f.source == Source::Student && f.scale == 1.0,
        Err(_) => true,
    }))
}

fn file_paths(input: &InputArgs) -> Result<(PathBuf, PathBuf)> {
    let student = input.detections.clone().ok_or_else(|| {
        CullError::InvalidConfig("provide --detections PATH or --synthetic N".into())
    })?;
    let teacher = input.teacher.clone().unwrap_or_else(|| student.clone());
    Ok((student, teacher))
}

fn synthetic_world(n_frames: usize, common: &CommonArgs) -> Result<SyntheticWorld> {
    SyntheticWorld::generate(SynthParams {
        seed: common.synth_seed(),
        n_frames,
        ..SynthParams::default()
    })
}

fn load_store(paths: &[PathBuf], ids: &[String]) -> Result<FrameStore> {
    let keep: HashSet<String> = ids.iter().cloned().collect();
    FrameStore::load_filtered(paths, &keep)
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let scorer = match args.scorer {
        ScorerKind::Confidence => confidence_scorer(&config),
        ScorerKind::Entropy => DifficultyScorer::BinaryEntropy,
    };
    let mut rows = Vec::new();
    for frame in full_res_student(&args.detections)? {
        let frame = validate_frame(frame?, config.score_floor)?;
        let d = frame_difficulty(&frame, &scorer);
        rows.push((frame.frame_id, d));
    }
    let mut out = output_writer(args.common.output.as_deref())?;
    write_difficulty_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

fn stage1_manifest(
    config: &CullConfig,
    input: &InputArgs,
    common: &CommonArgs,
) -> Result<Manifest> {
    let scorer = confidence_scorer(config);
    let out = match input.synthetic {
        Some(n) => {
            let world = synthetic_world(n, common)?;
            crate::pipeline::cull_stage1_with_adapter(
                world.frame_ids(),
                &world.student,
                &scorer,
                config.stage1_keep,
                config.score_floor,
            )?
        }
        None => {
            let (student, _) = file_paths(input)?;
            cull_stage1(
                full_res_student(&student)?,
                &scorer,
                config.stage1_keep,
                config.score_floor,
            )?
        }
    };
    if out.input_count == 0 {
        return Err(CullError::EmptyStream);
    }
    let manifest = manifest_from_ranked(
        config,
        ManifestStage::Stage1,
        &out.ranked,
        out.input_count as u64,
        1.0,
    );
    manifest.validate()?;
    Ok(manifest)
}

fn cmd_stage1(args: Stage1Args) -> Result<()> {
    let config = args.common.resolve()?;
    let manifest = stage1_manifest(&config, &args.input, &args.common)?;
    emit_manifest(&manifest, args.common.output.as_deref())
}

/// Runs stage 2 on `candidates`; returns the culled manifest and the number
/// of teacher queries.
fn stage2_manifest(
    config: &CullConfig,
    candidates: &[String],
    source_count: u64,
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
) -> Result<(Manifest, usize)> {
    let teacher = CountingAdapter::new(teacher);
    let ranked = cull_stage2(
        candidates,
        student,
        &teacher,
        config.iou_threshold,
        config.target_n,
        config.score_floor,
    )?;
    let manifest = manifest_from_ranked(config, ManifestStage::Culled, &ranked, source_count, 1.0);
    manifest.validate()?;
    Ok((manifest, teacher.calls()))
}

fn cmd_stage2(args: Stage2Args) -> Result<()> {
    let input = load_manifest(&args.manifest)?;
    let config = args.common.resolve_over(&input.config)?;
    let candidates: Vec<String> = input.ids().map(str::to_string).collect();
    let (manifest, _) = match args.input.synthetic {
        Some(n) => {
            let world = synthetic_world(n, &args.common)?;
            stage2_manifest(
                &config,
                &candidates,
                input.source_count,
                &world.student,
                &world.teacher,
            )?
        }
        None => {
            let (student, teacher) = file_paths(&args.input)?;
            let store = load_store(&[student, teacher], &candidates)?;
            stage2_manifest(
                &config,
                &candidates,
                input.source_count,
                &store.source(Source::Student),
                &store.source(Source::Teacher),
            )?
        }
    };
    emit_manifest(&manifest, args.common.output.as_deref())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let strategy: Strategy = args
        .common
        .strategy
        .as_deref()
        .unwrap_or("confidence+precision")
        .parse()?;
    if strategy != Strategy::ConfidencePlusPrecision {
        let manifest = match args.input.synthetic {
            Some(n) => {
                let world = synthetic_world(n, &args.common)?;
                run_strategy(
                    strategy,
                    &config,
                    &world.student,
                    &world.teacher,
                    world.frame_ids(),
                )?
            }
            None => {
                let (student, teacher) = file_paths(&args.input)?;
                let ids = full_res_ids(&student)?;
                let store = load_store(&[student, teacher], &ids)?;
                run_strategy(
                    strategy,
                    &config,
                    &store.source(Source::Student),
                    &store.source(Source::Teacher),
                    ids,
                )?
            }
        };
        return emit_manifest(&manifest, args.common.output.as_deref());
    }

    let (manifest, trace) = match args.input.synthetic {
        Some(n) => {
            let world = synthetic_world(n, &args.common)?;
            run_pipeline(
                &config,
                &world.student,
                &world.teacher,
                world.frame_ids(),
                args.opt_resolution,
            )?
        }
        None => {
            let stage1 = stage1_manifest(&config, &args.input, &args.common)?;
            let candidates: Vec<String> = stage1.ids().map(str::to_string).collect();
            let (student, teacher) = file_paths(&args.input)?;
            let store = load_store(&[student, teacher], &candidates)?;
            let student = store.source(Source::Student);
            let (mut manifest, _) = stage2_manifest(
                &config,
                &candidates,
                stage1.source_count,
                &student,
                &store.source(Source::Teacher),
            )?;
            let survivors: Vec<String> = manifest.ids().map(str::to_string).collect();
            if args.opt_resolution {
                manifest.chosen_scale = select_scale(&survivors, &student, &config)?.0;
            }
            let trace = StageTrace::new(stage1.source_count as usize, candidates, survivors);
            (manifest, trace)
        }
    };
    if let Some(path) = &args.trace {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &trace)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    emit_manifest(&manifest, args.common.output.as_deref())
}

fn full_res_ids(student: &Path) -> Result<Vec<String>> {
    full_res_student(student)?
        .map(|f| f.map(|f| f.frame_id))
        .collect()
}

fn cmd_optres(args: OptresArgs) -> Result<()> {
    let mut manifest = load_manifest(&args.manifest)?;
    let config = args.common.resolve_over(&manifest.config)?;
    let ids: Vec<String> = manifest.ids().map(str::to_string).collect();
    let (scale, sweep) = match args.input.synthetic {
        Some(n) => {
            let world = synthetic_world(n, &args.common)?;
            select_scale(&ids, &world.student, &config)?
        }
        None => {
            let (student, _) = file_paths(&args.input)?;
            let store = load_store(&[student], &ids)?;
            select_scale(&ids, &store.source(Source::Student), &config)?
        }
    };
    manifest.chosen_scale = scale;
    manifest.config = config;
    match &args.curve {
        Some(path) => write_mse_csv(File::create(path)?, &sweep.scales, &sweep.mse_per_scale)?,
        None => write_mse_csv(io::stdout().lock(), &sweep.scales, &sweep.mse_per_scale)?,
    }
    if let Some(path) = &args.common.output {
        save_manifest(path, &manifest)?;
    }
    eprintln!("chosen scale: {}", manifest.chosen_scale);
    Ok(())
}

/// One row of the strategy comparison.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AblationRow {
    pub strategy: String,
    pub selected: usize,
    pub teacher_calls: usize,
    pub recall: f64,
    /// Fraction of the precision strategy's picks this strategy also kept.
    pub overlap_with_precision: f64,
}

/// Runs every strategy and scores it against `hard`.
pub fn ablate(
    config: &CullConfig,
    student: &dyn DetectorAdapter,
    teacher: &dyn DetectorAdapter,
    frame_ids: &[String],
    hard: &HardSet,
) -> Result<Vec<AblationRow>> {
    let mut runs = Vec::new();
    for strategy in Strategy::ALL {
        let counted = CountingAdapter::new(teacher);
        let manifest = run_strategy(
            strategy,
            config,
            student,
            &counted,
            frame_ids.iter().cloned(),
        )?;
        runs.push((strategy, manifest, counted.calls()));
    }
    let precision = runs
        .iter()
        .find(|(s, _, _)| *s == Strategy::Precision)
        .map(|(_, m, _)| m.clone())
        .ok_or_else(|| CullError::Invariant("precision strategy missing".into()))?;
    Ok(runs
        .into_iter()
        .map(|(strategy, manifest, calls)| AblationRow {
            strategy: strategy.name().to_string(),
            selected: manifest.entries.len(),
            teacher_calls: calls,
            recall: hard.recall(manifest.ids()),
            overlap_with_precision: overlap_report(&manifest, &precision),
        })
        .collect())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let rows = if args.input.detections.is_some() {
        let (student, teacher) = file_paths(&args.input)?;
        let scenes_path = args.scenes.as_ref().ok_or_else(|| {
            CullError::InvalidConfig("--scenes PATH is required with file input".into())
        })?;
        let scenes = read_scenes(io::BufReader::new(File::open(scenes_path)?))?;
        let hard = oracle_hard_set(&scenes, config.target_n)?;
        let ids = full_res_ids(&student)?;
        let store = load_store(&[student, teacher], &ids)?;
        ablate(
            &config,
            &store.source(Source::Student),
            &store.source(Source::Teacher),
            &ids,
            &hard,
        )?
    } else {
        let n = args
            .input
            .synthetic
            .unwrap_or(SynthParams::ablation_fixture().n_frames);
        let world = synthetic_world(n, &args.common)?;
        let hard = oracle_hard_set(world.store.scenes(), config.target_n)?;
        ablate(
            &config,
            &world.student,
            &world.teacher,
            &world.frame_ids(),
            &hard,
        )?
    };
    let mut out = output_writer(args.common.output.as_deref())?;
    writeln!(
        out,
        "strategy,selected,teacher_calls,recall,overlap_with_precision"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.strategy,
            r.selected,
            r.teacher_calls,
            round_sig9(r.recall),
            round_sig9(r.overlap_with_precision)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let profile =
        match &args.profile {
            Some(path) => serde_json::from_str::<CostParams>(&std::fs::read_to_string(path)?)
                .map_err(|e| CullError::Parse {
                    line: e.line(),
                    reason: format!("{}: {e}", path.display()),
                })?,
            None => args
                .common
                .config_file()?
                .cost_profile
                .unwrap_or_else(CostParams::surveillance_profile),
        };
    let n = manifest.source_count;
    let stage1_n = (manifest.config.stage1_keep as u64).min(n);
    let target_n = (manifest.entries.len() as u64).min(stage1_n);
    let full = estimate_full(&profile, n)?;
    let culled = estimate_culled(&profile, n, stage1_n, target_n, manifest.chosen_scale)?;
    let mut out = output_writer(args.common.output.as_deref())?;
    write_cost_report(&mut out, &culled)?;
    out.flush()?;
    eprintln!("full: {:.3} h, culled: {:.3} h", full.total, culled.total);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let defaults = SynthParams::default();
    let params = SynthParams {
        seed: args.common.synth_seed(),
        n_frames: args.frames,
        empty_frame_fraction: args.empty_fraction.unwrap_or(defaults.empty_frame_fraction),
        hard_frame_fraction: args.hard_fraction.unwrap_or(defaults.hard_frame_fraction),
        confidence_noise: args.noise.unwrap_or(defaults.confidence_noise),
        class_count: args.classes.unwrap_or(defaults.class_count),
        ..defaults
    };
    let config = args.common.resolve()?;
    let dir = args
        .common
        .output
        .clone()
        .ok_or_else(|| CullError::InvalidConfig("synth needs --output DIR".into()))?;
    std::fs::create_dir_all(&dir)?;
    let scenes = crate::synth::generate_dataset(&params)?;
    let model = StudentModel::from_params(&params);
    let scales = if args.with_scales {
        scale_grid(config.scale_step, config.min_scale)?
    } else {
        vec![1.0]
    };

    let mut scene_out = BufWriter::new(File::create(dir.join("scenes.jsonl"))?);
    let mut student_out = BufWriter::new(File::create(dir.join("student.jsonl"))?);
    let mut teacher_out = BufWriter::new(File::create(dir.join("teacher.jsonl"))?);
    for scene in &scenes {
        write_scene_line(&mut scene_out, scene)?;
        for &s in &scales {
            write_detection_line(&mut student_out, &simulate_student(scene, s, &model))?;
        }
        write_detection_line(&mut teacher_out, &simulate_teacher(scene))?;
    }
    scene_out.flush()?;
    student_out.flush()?;
    teacher_out.flush()?;
    Ok(())
}
