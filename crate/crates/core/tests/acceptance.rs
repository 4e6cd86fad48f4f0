//! Acceptance criteria A1–A10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Tolerances and time budgets are pinned here.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use iris_core::calibration::{fit_radius_model, optimal_interval, resolution_sweep, DistanceInterval, IntervalOutcome};
use iris_core::codec::{
    encode, generate_fallback_filters, normalize, BitCode, SHEET_COLS, SHEET_ROWS, FILTER_COUNT,
};
use iris_core::data::synth::{generate_corpus, CorpusParams, SyntheticScene};
use iris_core::data::{EyeSide, Manifest, ManifestRow};
use iris_core::eval::{self, benchmark, d_prime, eer, enumerate_comparisons, iou, snr, Guarded, ScoreSet};
use iris_core::localize::{hough_circle, lms_circle_fit, Circle};
use iris_core::par::{self, Execution};
use iris_core::pipeline::{evaluate_images, scene_samples, Pipeline, PipelineConfig};
use iris_core::unet::{self, mean_iou, Sample, Task, TrainOptions, UnetXxs, UnetXxsConfig};
use iris_core::{GrayImage, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Id, name, time budget in seconds, check.
type Criterion = (&'static str, &'static str, u64, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1", "metric exactness", 10, a1_metric_exactness),
        ("A2", "comparison enumeration", 5, a2_comparison_enumeration),
        ("A3", "gradient correctness", 120, a3_gradient_correctness),
        ("A4", "geometry", 60, a4_geometry),
        ("A5", "codec", 60, a5_codec),
        // Timed before training so the measurement runs on a quiet heap.
        ("A9", "relative speed", 10 * 60, a9_relative_speed),
        ("A10", "calibration algebra", 1, a10_calibration),
        ("A8", "training", 15 * 60, a8_training),
        ("A6", "end-to-end separation", 20 * 60, a6_separation),
        ("A7", "monotonic degradation", 30 * 60, a7_monotonic_degradation),
    ];
    // `cargo test --test acceptance -- A6 A9` runs a subset.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut results = Vec::new();
    for (id, name, budget_s, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = t.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(budget_s) => Err(format!("{d}; over the {budget_s} s budget")),
            o => o,
        };
        results.push((id, name, outcome, elapsed));
    }
    results.sort_by_key(|(id, ..)| id[1..].parse::<u32>().unwrap_or(0));
    let mut failed = 0;
    println!();
    for (id, name, outcome, elapsed) in &results {
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{id} {name}: {verdict} ({detail}) [{:.1} s]", elapsed.as_secs_f64());
    }
    println!("\n{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- A1

fn bits_from(code: &str, mask: &str) -> BitCode {
    let mut b = BitCode::new(1, 1, code.len());
    for (j, (c, m)) in code.chars().zip(mask.chars()).enumerate() {
        b.set_code_bit(0, 0, j, c == '1');
        b.set_mask_bit(0, j, m == '1');
    }
    b
}

/// ROC points by direct counting at every distinct score, plus reject-all.
fn brute_roc(mated: &[f64], non: &[f64]) -> Vec<(i128, i128)> {
    let mut pts = vec![(0i128, mated.len() as i128)];
    for &t in mated.iter().chain(non) {
        let fm = non.iter().filter(|&&s| s <= t).count() as i128;
        let fnm = mated.iter().filter(|&&s| s > t).count() as i128;
        pts.push((fm, fnm));
    }
    pts
}

/// Lowest point where any segment between two ROC points meets FMR = FNMR,
/// as an unreduced fraction of the FMR axis.
fn brute_eer(mated: &[f64], non: &[f64]) -> (i128, i128) {
    let (n, m) = (non.len() as i128, mated.len() as i128);
    let pts = brute_roc(mated, non);
    let above = |p: (i128, i128)| p.1 * n - p.0 * m;
    let mut best: Option<(i128, i128)> = None;
    for &p in &pts {
        for &q in &pts {
            let (u1, u2) = (above(p), above(q));
            if u1 < 0 || u2 > 0 {
                continue;
            }
            let cand = if u1 == u2 { (p.0, n) } else { (q.0 * u1 - p.0 * u2, n * (u1 - u2)) };
            if best.is_none_or(|b| cand.0 * b.1 < b.0 * cand.1) {
                best = Some(cand);
            }
        }
    }
    best.expect("reject-all and accept-all bracket the diagonal")
}

fn a1_metric_exactness() -> Check {
    let mut failures = Vec::new();
    let full = "1111";
    let hd = |a: &str, b: &str, m: &str| bits_from(a, m).hamming_distance(&bits_from(b, m), 0).unwrap();
    if hd("1010", "1001", full) != 0.5 || hd("1010", "1001", "1100") != 0.0 || hd("1010", "1010", full) != 0.0 {
        failures.push("HD toy cases".to_string());
    }
    if hd("1010", "0101", full) != 1.0 {
        failures.push("HD complement".to_string());
    }
    let d = d_prime(&ScoreSet::new(vec![0.25, 0.30, 0.35], vec![0.40, 0.45, 0.50])).unwrap();
    if !matches!(d, Guarded::Finite(v) if (v - 3.0).abs() < 1e-12) {
        failures.push(format!("d' = {d}, want 3.0"));
    }
    // Iris pixels all 80; sclera 160, 180, 200 (sample σ = 20).
    let img = GrayImage::from_fn(3, 2, |x, y| if y == 0 { 80 } else { [160, 180, 200][x] });
    let s = snr(&img, &Mask::from_fn(3, 2, |_, y| y == 0), &Mask::from_fn(3, 2, |_, y| y == 1)).unwrap();
    if !matches!(s, Guarded::Finite(v) if (v - 5.0).abs() < 1e-12) {
        failures.push(format!("SNR = {s}, want 5.0"));
    }
    let outer = Mask::from_fn(8, 8, |_, _| true);
    let inner = Mask::from_fn(8, 8, |x, y| (2..6).contains(&x) && (2..6).contains(&y));
    let i = iou(&outer, &inner).unwrap();
    if (i - 0.25).abs() > 1e-8 {
        failures.push(format!("IoU = {i}, want 0.25"));
    }
    if eer(&ScoreSet::new(vec![0.1, 0.3], vec![0.2, 0.4])).unwrap().eer != 0.25 {
        failures.push("EER example".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut mismatches = 0;
    for k in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
            if k % 2 == 0 {
                (0..len).map(|_| rng.random_range(0..12) as f64 / 12.0).collect()
            } else {
                (0..len).map(|_| rng.random::<f64>()).collect()
            }
        };
        let (nm, nn) = (rng.random_range(1..30), rng.random_range(1..60));
        let mated = draw(&mut rng, nm);
        let non = draw(&mut rng, nn);
        let (num, den) = brute_eer(&mated, &non);
        if eer(&ScoreSet::new(mated, non)).unwrap().eer != num as f64 / den as f64 {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        failures.push(format!("EER disagrees with brute force on {mismatches}/1000 sets"));
    }
    ensure(failures.is_empty(), if failures.is_empty() { "unit examples exact; EER = brute force on 1000/1000 sets".into() } else { failures.join("; ") })
}

// ---------------------------------------------------------------- A2

fn right_eye_manifest(subjects: usize, per: usize) -> Manifest {
    let rows = (0..subjects)
        .flat_map(|s| {
            (0..per).map(move |k| ManifestRow {
                path: format!("s{s:03}_{k}.pgm"),
                subject_id: format!("s{s:03}"),
                eye_side: EyeSide::Right,
                distance_cm: None,
                session: None,
            })
        })
        .collect();
    Manifest::from_rows(rows, ".").unwrap()
}

fn a2_comparison_enumeration() -> Check {
    let pairs = enumerate_comparisons(&right_eye_manifest(96, 5)).unwrap();
    let mated = pairs.iter().filter(|c| c.mated).count();
    let non = pairs.len() - mated;
    ensure(mated == 960 && non == 114_000, format!("{mated} mated, {non} non-mated; want 960 / 114000"))
}

// ---------------------------------------------------------------- A3

fn a3_gradient_correctness() -> Check {
    use common::gradcheck::{check, ALL, TOL};
    let mut worst = 0.0f64;
    let mut fewest = usize::MAX;
    let mut bad = Vec::new();
    for kind in ALL {
        let r = check(kind, 0xA3);
        worst = worst.max(r.max_rel_err);
        fewest = fewest.min(r.checked);
        if r.max_rel_err > TOL || r.checked < 100 {
            bad.push(format!("{kind:?}: rel err {:.2e} over {}", r.max_rel_err, r.checked));
        }
    }
    let summary = format!("{} layer kinds, worst rel err {worst:.2e} ≤ {TOL:.0e}, ≥ {fewest} values each", ALL.len());
    ensure(bad.is_empty(), if bad.is_empty() { summary } else { bad.join("; ") })
}

// ---------------------------------------------------------------- A4

fn circle_points(c: &Circle, n: usize, arc: f64, rng: Option<(&mut ChaCha8Rng, f64)>) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let t = arc * k as f64 / n as f64;
            (c.x + c.r * t.cos(), c.y - c.r * t.sin())
        })
        .collect();
    if let Some((rng, amp)) = rng {
        for p in &mut pts {
            p.0 += rng.random_range(-amp..=amp);
            p.1 += rng.random_range(-amp..=amp);
        }
    }
    pts
}

fn circle_error(a: &Circle, b: &Circle) -> f64 {
    a.center_distance(b).max((a.r - b.r).abs())
}

fn a4_geometry() -> Check {
    use std::f64::consts::TAU;
    let truth = Circle::new(63.25, 48.5, 31.75);
    let exact = circle_error(&lms_circle_fit(&circle_points(&truth, 72, TAU, None)).unwrap(), &truth);
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let mut noisy = 0.0f64;
    for _ in 0..100 {
        let c = Circle::new(rng.random_range(40.0..90.0), rng.random_range(30.0..70.0), rng.random_range(15.0..45.0));
        let pts = circle_points(&c, 120, TAU, Some((&mut rng, 1.0)));
        noisy = noisy.max(circle_error(&lms_circle_fit(&pts).unwrap(), &c));
    }
    let mut hough = 0.0f64;
    for _ in 0..20 {
        let c = Circle::new(rng.random_range(50.0..80.0), rng.random_range(40.0..60.0), rng.random_range(20.0..35.0));
        // 60 % of the circumference, rasterised to pixel centres.
        let pts: Vec<(f64, f64)> =
            circle_points(&c, 400, 0.6 * TAU, None).into_iter().map(|(x, y)| (x.round(), y.round())).collect();
        let h = hough_circle(&pts, 0.7 * c.r, 1.3 * c.r, 1.0).unwrap();
        hough = hough.max(circle_error(&h.circle, &c));
    }
    ensure(
        exact <= 1e-6 && noisy <= 0.5 && hough <= 2.0,
        format!("noiseless LMS err {exact:.1e} ≤ 1e-6 px; ±1 px noise worst {noisy:.3} ≤ 0.5 px; 40 %-occluded Hough worst {hough:.2} ≤ 2 px"),
    )
}

// ---------------------------------------------------------------- A5

fn random_full_code(rng: &mut ChaCha8Rng, mask_p: f64) -> BitCode {
    let mut c = BitCode::new(FILTER_COUNT, SHEET_ROWS, SHEET_COLS);
    for i in 0..SHEET_ROWS {
        for j in 0..SHEET_COLS {
            c.set_mask_bit(i, j, rng.random_bool(mask_p));
            for p in 0..FILTER_COUNT {
                c.set_code_bit(p, i, j, rng.random_bool(0.5));
            }
        }
    }
    c
}

fn unpacked_hd(a: &BitCode, b: &BitCode) -> Option<f64> {
    let (planes, rows, cols) = a.dims();
    let (mut diff, mut valid) = (0usize, 0usize);
    for i in 0..rows {
        for j in 0..cols {
            if a.mask_bit(i, j) && b.mask_bit(i, j) {
                valid += 1;
                diff += (0..planes).filter(|&p| a.code_bit(p, i, j) != b.code_bit(p, i, j)).count();
            }
        }
    }
    (valid * 100 >= rows * cols).then(|| diff as f64 / (planes * valid) as f64)
}

fn a5_codec() -> Check {
    let mut failures = Vec::new();
    let bank = generate_fallback_filters(42);
    let (pupil, iris) = (Circle::new(64.0, 48.0, 14.0), Circle::new(64.5, 47.5, 40.0));
    let img = GrayImage::from_fn(128, 96, |x, y| {
        let d = ((x as f64 - 64.0).powi(2) + (y as f64 - 48.0).powi(2)).sqrt();
        if d < 44.0 { 120 } else { 200 }
    });
    let sheet = normalize(&img, &pupil, &iris).unwrap();
    if sheet.values.len() != 64 * 512 || (SHEET_ROWS, SHEET_COLS) != (64, 512) || sheet.to_image().width() != 512 {
        failures.push(format!("sheet has {} cells", sheet.values.len()));
    }
    if sheet.values.iter().any(|&v| v != sheet.values[0]) {
        failures.push("constant annulus gave a non-constant sheet".into());
    }
    let t = encode(&sheet, &bank, "c", EyeSide::Left);
    let ones = (0..FILTER_COUNT)
        .flat_map(|p| (0..SHEET_ROWS).flat_map(move |i| (0..SHEET_COLS).map(move |j| (p, i, j))))
        .filter(|&(p, i, j)| t.bits.code_bit(p, i, j))
        .count();
    if ones != 0 {
        failures.push(format!("constant annulus encoded {ones} one-bits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let a = random_full_code(&mut rng, 1.0);
    for k in [1i64, 3, 8, 17, 64, 100] {
        let hd = a.hamming_distance(&a.rotate(k), k as usize).unwrap();
        if hd != 0.0 {
            failures.push(format!("HD(A, rotate(A, {k})) = {hd}"));
        }
    }
    let mut mismatches = 0;
    for _ in 0..1000 {
        let p = rng.random_range(0.02..1.0);
        let (x, y) = (random_full_code(&mut rng, p), random_full_code(&mut rng, p));
        if x.hamming_distance(&y, 0).ok() != unpacked_hd(&x, &y) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        failures.push(format!("packed HD disagrees with the unpacked oracle on {mismatches}/1000 pairs"));
    }
    ensure(
        failures.is_empty(),
        if failures.is_empty() {
            "64×512 sheet; constant annulus → constant sheet, zero bits; rotation recovered; packed = unpacked on 1000/1000 pairs".into()
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- A6 / A7 / A8

/// Identities 100.. (training) and 500.. (validation) never overlap the
/// evaluation corpus, which uses identities 0..20.
const TRAIN_CORPUS: CorpusParams =
    CorpusParams { identities: 20, samples: 5, noise_sigma: 10.0, occlusion_max: 0.2, iris_radius: 60.0, seed: 99, first_identity: 100 };
const VAL_CORPUS: CorpusParams =
    CorpusParams { identities: 6, samples: 5, noise_sigma: 10.0, occlusion_max: 0.2, iris_radius: 60.0, seed: 98, first_identity: 500 };
const IRIS_EPOCHS: usize = 8;
const EYES_EPOCHS: usize = 10;

struct Trained {
    find_eyes: UnetXxs,
    segment_iris: UnetXxs,
    iris_train: usize,
    iris_val_iou: f64,
    eyes_val_iou: f64,
    iris_train_time: Duration,
    total_time: Duration,
}

fn samples(task: Task, scenes: &[(iris_core::data::synth::SceneSpec, SyntheticScene)]) -> Vec<Sample> {
    scenes.iter().flat_map(|(_, s)| scene_samples(task, s).unwrap()).collect()
}

fn train_task(task: Task, train: &[Sample], val: &[Sample], epochs: usize) -> (UnetXxs, f64) {
    let mut model = UnetXxs::new(&UnetXxsConfig::for_task(task)).unwrap();
    let opts = TrainOptions { epochs, ..TrainOptions::default() };
    let log = unet::train(&mut model, train, val, &opts, |e| {
        eprintln!("  {} epoch {:>2}: loss {:.4}, val IoU {:.4}", task.name(), e.epoch, e.loss, e.val_iou.unwrap_or(f64::NAN));
    })
    .unwrap();
    let last = log.last().and_then(|e| e.val_iou).unwrap_or(0.0);
    (model, last)
}

fn trained() -> &'static Trained {
    static MODELS: OnceLock<Trained> = OnceLock::new();
    MODELS.get_or_init(|| {
        let t0 = Instant::now();
        let train = generate_corpus(&TRAIN_CORPUS, Execution::Parallel).unwrap();
        let val = generate_corpus(&VAL_CORPUS, Execution::Parallel).unwrap();
        let (iris_train, iris_val) = (samples(Task::SegmentIris, &train), samples(Task::SegmentIris, &val));
        let t_iris = Instant::now();
        let (segment_iris, iris_val_iou) = train_task(Task::SegmentIris, &iris_train, &iris_val, IRIS_EPOCHS);
        let iris_train_time = t_iris.elapsed();
        let (find_eyes, eyes_val_iou) =
            train_task(Task::FindEyes, &samples(Task::FindEyes, &train), &samples(Task::FindEyes, &val), EYES_EPOCHS);
        Trained {
            find_eyes,
            segment_iris,
            iris_train: iris_train.len(),
            iris_val_iou,
            eyes_val_iou,
            iris_train_time,
            total_time: t0.elapsed(),
        }
    })
}

fn pipeline(min_iris_radius: Option<f64>) -> Pipeline {
    let m = trained();
    let mut config = PipelineConfig::default();
    if let Some(r) = min_iris_radius {
        config.min_iris_radius = r;
    }
    let filters = config.load_filters().unwrap();
    Pipeline::new(m.find_eyes.clone(), m.segment_iris.clone(), filters, config)
}

/// The 20 × 5 evaluation corpus (σ = 10, occlusion ≤ 0.2) with one
/// right-eye row per scene.
fn evaluation_corpus() -> &'static (Manifest, Vec<GrayImage>) {
    static CORPUS: OnceLock<(Manifest, Vec<GrayImage>)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let scenes = generate_corpus(&CorpusParams::default(), Execution::Parallel).unwrap();
        let rows = scenes
            .iter()
            .map(|(s, _)| ManifestRow {
                path: s.name.clone(),
                subject_id: s.subject_id.clone(),
                eye_side: EyeSide::Right,
                distance_cm: None,
                session: None,
            })
            .collect();
        (Manifest::from_rows(rows, ".").unwrap(), scenes.into_iter().map(|(_, s)| s.image).collect())
    })
}

fn a8_training() -> Check {
    let m = trained();
    let params = m.segment_iris.model_info().total_params;
    let eyes_params = m.find_eyes.model_info().total_params;
    // Re-measure on the validation crops with the shipped inference path.
    let val = generate_corpus(&VAL_CORPUS, Execution::Parallel).unwrap();
    let iou_again = mean_iou(&m.segment_iris, &samples(Task::SegmentIris, &val), Execution::Parallel).unwrap();
    eprintln!("  find_eyes val IoU {:.4}", m.eyes_val_iou);
    ensure(
        m.iris_train == 200
            && m.iris_val_iou >= 0.85
            && (iou_again - m.iris_val_iou).abs() < 1e-9
            && (25_000..=31_000).contains(&params)
            && params == eyes_params
            && m.iris_train_time <= Duration::from_secs(15 * 60),
        format!(
            "{} training crops, val IoU {:.4} ≥ 0.85 after {IRIS_EPOCHS} epochs in {:.0} s; {params} parameters in [25000, 31000]",
            m.iris_train,
            m.iris_val_iou,
            m.iris_train_time.as_secs_f64()
        ),
    )
}

fn a6_separation() -> Check {
    let (manifest, images) = evaluation_corpus();
    let ev = evaluate_images(&pipeline(None), manifest, images.clone(), Execution::Parallel).unwrap();
    let e = eval::eer(&ev.scores).unwrap().eer;
    let d = d_prime(&ev.scores).unwrap().value();
    let (mu_m, _) = eval::mean_std(&ev.scores.mated);
    let (mu_n, _) = eval::mean_std(&ev.scores.non_mated);
    let max_mated = ev.scores.mated.iter().copied().fold(f64::MIN, f64::max);
    ensure(
        e <= 0.05 && d >= 2.0 && max_mated < mu_n,
        format!(
            "EER {:.2} % ≤ 5 %, d' {d:.2} ≥ 2.0, mated HD ≤ {max_mated:.3} < non-mated mean {mu_n:.3} (mated mean {mu_m:.3}); {} acquisition failures; models trained in {:.0} s",
            100.0 * e,
            ev.failures,
            trained().total_time.as_secs_f64()
        ),
    )
}

fn a7_monotonic_degradation() -> Check {
    const BAND: f64 = 0.01;
    let (manifest, images) = evaluation_corpus();
    let rows = resolution_sweep(&pipeline(Some(0.0)), manifest, images, &[640, 320, 160, 80], Execution::Parallel).unwrap();
    let mut steps: Vec<(f64, f64, f64, usize)> = rows
        .iter()
        .map(|(r, _)| (r.mean_iris_radius_px.unwrap_or(0.0), r.eer, r.d_prime.value(), r.width_px))
        .collect();
    let table = steps
        .iter()
        .map(|(r, e, d, w)| format!("{w}px r={r:.1} EER={:.1}% d'={d:.2}", 100.0 * e))
        .collect::<Vec<_>>()
        .join(", ");
    // Widths descend, so radii must too; then compare neighbours by radius.
    let radii_descend = steps.windows(2).all(|w| w[0].0 > w[1].0);
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = steps.windows(2).all(|w| w[1].1 <= w[0].1 + BAND && w[1].2 >= w[0].2);
    ensure(radii_descend && monotone, format!("{table}; EER non-increasing within ±1 pp and d' non-decreasing with radius"))
}

// ---------------------------------------------------------------- A9

fn a9_relative_speed() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for task in [Task::FindEyes, Task::SegmentIris] {
        let cfg = UnetXxsConfig::for_task(task);
        let xxs = UnetXxs::<f32>::new(&cfg).unwrap();
        let control = UnetXxs::<f32>::new(&cfg.control()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xA9);
        let inputs: Vec<GrayImage> = (0..4)
            .map(|_| GrayImage::from_fn(cfg.input_width, cfg.input_height, |_, _| rng.random()))
            .collect();
        let run = |m: &UnetXxs| {
            let prepared: Vec<_> = inputs.iter().map(|i| m.prepare_input(i).unwrap()).collect();
            benchmark(task.name(), &prepared, 3, 20, |x| {
                m.predict(x.clone()).unwrap();
            })
            .unwrap()
        };
        // Interleave three rounds and compare medians so a noisy neighbour
        // during one round cannot decide the outcome.
        let (mut a, mut b) = (Vec::new(), Vec::new());
        par::with_workers(Some(1), || {
            for _ in 0..3 {
                a.push(run(&xxs).mean_seconds);
                b.push(run(&control).mean_seconds);
            }
        });
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ratio = b[1] / a[1];
        ok &= ratio >= 2.0;
        lines.push(format!(
            "{}: {:.1} ms vs control {:.1} ms ({} vs {} params) = {ratio:.2}×",
            task.name(),
            1e3 * a[1],
            1e3 * b[1],
            xxs.model_info().total_params,
            control.model_info().total_params
        ));
    }
    ensure(ok, format!("{}; need ≥ 2× single-threaded", lines.join("; ")))
}

// ---------------------------------------------------------------- A10

fn a10_calibration() -> Check {
    let m = fit_radius_model(&[(30.0, 45.0)]).unwrap();
    let criteria = [
        DistanceInterval::at_most(35.0, "radius").unwrap(),
        DistanceInterval::at_most(40.0, "gaze").unwrap(),
        DistanceInterval::at_least(25.0, "snr").unwrap(),
    ];
    let interval = optimal_interval(&criteria).unwrap();
    let shown = match &interval {
        IntervalOutcome::Feasible(i) => i.to_string(),
        IntervalOutcome::Infeasible => "infeasible".into(),
    };
    ensure(
        (m.k - 1350.0).abs() < 1e-9 && (m.invert(45.0) - 30.0).abs() < 1e-9 && shown == "[25, 35] cm",
        format!("k = {}, invert(45) = {} cm, optimal interval {shown}", m.k, m.invert(45.0)),
    )
}
