//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cullforge::cli::ablate;
use cullforge::cost::SURVEILLANCE_STAGE1_FRAMES;
use cullforge::optres::{choose_scale, sweep_scales, LossProbe};
use cullforge::{
    average_precision, confidence_loss, estimate_culled, estimate_full, iou, oracle_hard_set,
    run_pipeline, BoundingBox, CostParams, CountingAdapter, CullConfig, Detection, Result,
    SynthParams, SyntheticWorld,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool")
        .install(f)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// Written from the formula, sharing no code with the library.
fn reference_loss(x: f64) -> f64 {
    let entropy_term = if x > 0.0 { -3.0 * x * x.ln() } else { 0.0 };
    let sigmoid = 1.0 / (1.0 + (-x).exp());
    entropy_term + (1.0 - x) * sigmoid + 0.5
}

fn confidence_loss_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..=10_000 {
        let x = i as f64 / 10_000.0;
        let got = confidence_loss(x, 3.0, 0.5).expect("in domain");
        worst = worst.max((got - reference_loss(x)).abs());
    }
    let at_one = confidence_loss(1.0, 3.0, 0.5).unwrap();
    let at_zero = confidence_loss(0.0, 3.0, 0.5).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && at_one == 0.5 && at_zero == 1.0 && elapsed < Duration::from_secs(1),
        format!(
            "max |err| {worst:.2e} over 10001 points, L(1)={at_one}, L(0)={at_zero}, {}",
            secs(elapsed)
        ),
    )
}

/// Score-descending order, ties by index, by selection rather than sorting.
fn oracle_order(preds: &[Detection]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..preds.len()).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if preds[left[k]].score > preds[left[best]].score {
                best = k;
            }
        }
        order.push(left.remove(best));
    }
    order
}

/// Explicit PR curve, then for every recall level `k / n` the best
/// precision at any rank reaching it.
fn oracle_ap(preds: &[Detection], gts: &[Detection], thr: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut taken = vec![false; gts.len()];
    let mut curve = Vec::new();
    let mut tp = 0usize;
    for (rank, p) in oracle_order(preds).into_iter().enumerate() {
        let mut best: Option<usize> = None;
        for g in 0..gts.len() {
            if taken[g] || gts[g].class_id != preds[p].class_id {
                continue;
            }
            let o = iou(&preds[p].bbox, &gts[g].bbox);
            if o >= thr && best.is_none_or(|b| o > iou(&preds[p].bbox, &gts[b].bbox)) {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            taken[g] = true;
            tp += 1;
        }
        curve.push((tp, tp as f64 / (rank + 1) as f64));
    }
    let mut sum = 0.0;
    for level in 1..=gts.len() {
        let best = curve
            .iter()
            .filter(|(hits, _)| *hits >= level)
            .map(|(_, precision)| *precision)
            .fold(0.0, f64::max);
        sum += best;
    }
    sum / gts.len() as f64
}

fn random_detection(rng: &mut ChaCha8Rng) -> Detection {
    let x = rng.gen_range(0..6) as f64 * 10.0;
    let y = rng.gen_range(0..3) as f64 * 10.0;
    let w = rng.gen_range(1..5) as f64 * 10.0;
    let h = rng.gen_range(1..5) as f64 * 10.0;
    Detection {
        class_id: rng.gen_range(0..2),
        bbox: BoundingBox::new(x, y, w, h).unwrap(),
        score: rng.gen_range(0..=10) as f64 / 10.0,
    }
}

fn ap_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa9);
    let mut mismatches = 0;
    let mut first = String::new();
    for case in 0..10_000 {
        let preds: Vec<Detection> = (0..rng.gen_range(0..=6))
            .map(|_| random_detection(&mut rng))
            .collect();
        let gts: Vec<Detection> = (0..rng.gen_range(0..=4))
            .map(|_| random_detection(&mut rng))
            .collect();
        let thr = [0.3, 0.5, 0.7][case % 3];
        let got = average_precision(&preds, &gts, thr);
        let want = oracle_ap(&preds, &gts, thr);
        if got != want {
            mismatches += 1;
            if first.is_empty() {
                first = format!(" (case {case}: {got} vs {want})");
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{mismatches} mismatches in 10000 instances{first}, {}",
            secs(elapsed)
        ),
    )
}

fn surveillance_world() -> SyntheticWorld {
    SyntheticWorld::generate(SynthParams::surveillance_day(SynthParams::default().seed))
        .expect("surveillance fixture")
}

fn cull_300x(world: &SyntheticWorld) -> Outcome {
    let mut config = CullConfig::for_target(256);
    config.stage1_keep = 1_536;
    let teacher = CountingAdapter::new(&world.teacher);
    let start = Instant::now();
    let result = single_threaded(|| {
        run_pipeline(&config, &world.student, &teacher, world.frame_ids(), false)
    });
    let elapsed = start.elapsed();
    match result {
        Ok((manifest, trace)) => {
            let factor = trace.total_reduction();
            outcome(
                manifest.entries.len() == 256
                    && factor == 337.5
                    && teacher.calls() == 1_536
                    && elapsed < Duration::from_secs(60),
                format!(
                    "{} -> {} frames, reduction {factor}x, {} teacher calls, {} single-threaded",
                    trace.input_count,
                    manifest.entries.len(),
                    teacher.calls(),
                    secs(elapsed)
                ),
            )
        }
        Err(e) => outcome(false, format!("pipeline error: {e}")),
    }
}

fn stage_reductions(world: &SyntheticWorld) -> Outcome {
    let n = world.store.len();
    let mut config = CullConfig::for_target(n / 50 / 6);
    config.stage1_keep = n / 50;
    match run_pipeline(
        &config,
        &world.student,
        &world.teacher,
        world.frame_ids(),
        false,
    ) {
        Ok((_, trace)) => outcome(
            trace.per_stage_reduction == (50.0, 6.0),
            format!(
                "{n} -> {} -> {}: per-stage reductions {:?}",
                trace.stage1_survivors.len(),
                trace.stage2_survivors.len(),
                trace.per_stage_reduction
            ),
        ),
        Err(e) => outcome(false, format!("pipeline error: {e}")),
    }
}

fn table2(ordering: bool) -> Outcome {
    let world = SyntheticWorld::generate(SynthParams::ablation_fixture()).expect("fixture");
    let mut config = CullConfig::for_target(128);
    config.stage1_keep = 768;
    let hard = oracle_hard_set(world.store.scenes(), 128).expect("hard set");
    let rows = match ablate(
        &config,
        &world.student,
        &world.teacher,
        &world.frame_ids(),
        &hard,
    ) {
        Ok(rows) => rows,
        Err(e) => return outcome(false, format!("ablation error: {e}")),
    };
    let row = |name: &str| {
        rows.iter()
            .find(|r| r.strategy == name)
            .expect("strategy row")
    };
    let (inter, ent, conf, prec, cp) = (
        row("intermittent"),
        row("entropy"),
        row("confidence"),
        row("precision"),
        row("confidence+precision"),
    );
    if ordering {
        outcome(
            cp.recall >= conf.recall
                && conf.recall >= ent.recall
                && ent.recall >= inter.recall
                && cp.recall >= 0.8
                && !hard.degenerate,
            format!(
                "recall confidence+precision {:.4} >= confidence {:.4} >= entropy {:.4} >= intermittent {:.4} (precision {:.4})",
                cp.recall, conf.recall, ent.recall, inter.recall, prec.recall
            ),
        )
    } else {
        let n = world.store.len();
        outcome(
            prec.teacher_calls == n
                && cp.teacher_calls == config.stage1_keep
                && cp.teacher_calls < prec.teacher_calls,
            format!(
                "teacher calls: precision {} (stream {n}), confidence+precision {} (stage1_keep {})",
                prec.teacher_calls, cp.teacher_calls, config.stage1_keep
            ),
        )
    }
}

struct Drift {
    base: Vec<f64>,
    rate: Vec<f64>,
    power: f64,
}

impl LossProbe for Drift {
    fn frame_loss(&self, frame_id: &str, scale: f64) -> Result<f64> {
        let i: usize = frame_id.parse().unwrap();
        Ok(self.base[i] + self.rate[i] * (1.0 - scale).powf(self.power))
    }
}

fn optres_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e5);
    let mut mismatches = 0;
    for _ in 0..1_000 {
        let n = rng.gen_range(1..=12);
        let probe = Drift {
            base: (0..n).map(|_| rng.gen_range(0.0..4.0)).collect(),
            rate: (0..n).map(|_| rng.gen_range(0.0..3.0)).collect(),
            power: rng.gen_range(0.5..2.5),
        };
        let step: f64 = rng.gen_range(0.5..0.95);
        let min_scale = rng.gen_range(0.1..0.6);
        let threshold = rng.gen_range(0.0..2.0) * n as f64 * 0.1;
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();

        let mut exhaustive = 1.0f64;
        let mut k = 0;
        loop {
            let s = step.powi(k);
            if s < min_scale * (1.0 - 1e-12) {
                break;
            }
            let mse: f64 = ids
                .iter()
                .map(|id| {
                    let d = probe.frame_loss(id, 1.0).unwrap() - probe.frame_loss(id, s).unwrap();
                    d * d
                })
                .sum();
            if mse <= threshold {
                exhaustive = exhaustive.min(s);
            }
            k += 1;
        }

        let sweep = sweep_scales(&ids, &probe, step, min_scale, Some(threshold)).unwrap();
        if choose_scale(&sweep, threshold) != exhaustive {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches vs exhaustive grid search in 1000 cases"),
    )
}

fn resolution_cost_scaling() -> Outcome {
    let p = CostParams::surveillance_profile();
    let half = estimate_culled(&p, 86_400, 1_536, 256, 0.5).unwrap();
    let most = estimate_culled(&p, 86_400, 1_536, 256, 0.8).unwrap();
    outcome(
        (half.compute_factor_from_scale - 4.0).abs() <= 1e-12
            && (most.compute_factor_from_scale - 1.5625).abs() <= 1e-12,
        format!(
            "compute factor {} at scale 0.5, {} at scale 0.8",
            half.compute_factor_from_scale, most.compute_factor_from_scale
        ),
    )
}

fn table1_cost() -> Outcome {
    let p = CostParams::surveillance_profile();
    let n = 86_400;
    let full = estimate_full(&p, n).unwrap();
    let c256 = estimate_culled(&p, n, SURVEILLANCE_STAGE1_FRAMES, 256, 1.0).unwrap();
    let c64 = estimate_culled(&p, n, SURVEILLANCE_STAGE1_FRAMES, 64, 1.0).unwrap();
    outcome(
        (full.total - 104.0).abs() <= 1.0
            && (c256.total - 2.2).abs() <= 0.1
            && (c256.speedup_vs_full - 47.0).abs() <= 3.0
            && (c64.speedup_vs_full - 54.0).abs() <= 3.0,
        format!(
            "full {:.3} h; target 256: {:.3} h ({:.1}x); target 64: {:.3} h ({:.1}x)",
            full.total, c256.total, c256.speedup_vs_full, c64.total, c64.speedup_vs_full
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let frames = SynthParams::ablation_fixture().n_frames.to_string();
    let run = |name: &str, threads: &str| -> std::result::Result<Vec<u8>, String> {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cullforge"))
            .args([
                "run",
                "--synthetic",
                &frames,
                "--opt-resolution",
                "--threads",
                threads,
                "--output",
            ])
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run exited with {status}"));
        }
        std::fs::read(&path).map_err(|e| e.to_string())
    };
    let runs = [run("a.json", "0"), run("b.json", "0"), run("c.json", "1")];
    match runs {
        [Ok(a), Ok(b), Ok(c)] => outcome(
            a == b && b == c && !a.is_empty(),
            format!(
                "two parallel runs and one single-threaded run: {} bytes each, identical: {}",
                a.len(),
                a == b && b == c
            ),
        ),
        [a, b, c] => outcome(false, format!("{:?}", [a.err(), b.err(), c.err()])),
    }
}

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn main() {
    let world = surveillance_world();
    let checks: Vec<(&str, Check)> = vec![
        (
            "confidence-loss exactness",
            Box::new(confidence_loss_exactness),
        ),
        ("AP oracle equivalence", Box::new(ap_oracle_equivalence)),
        ("300x cull", Box::new(|| cull_300x(&world))),
        (
            "stage reductions 50x then 6x",
            Box::new(|| stage_reductions(&world)),
        ),
        ("strategy recall ordering", Box::new(|| table2(true))),
        ("teacher-cost gap", Box::new(|| table2(false))),
        (
            "resolution search correctness",
            Box::new(optres_correctness),
        ),
        ("resolution cost scaling", Box::new(resolution_cost_scaling)),
        ("GPU-hour cost arithmetic", Box::new(table1_cost)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
