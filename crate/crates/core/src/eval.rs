//! Score-distribution and segmentation metrics.
//!
//! Scores are Hamming distances: a comparison is a match iff
//! `score <= threshold`. FMR(t) is the fraction of non-mated scores `<= t`,
//! FNMR(t) the fraction of mated scores `> t`.

use std::fmt::{self, Write as _};
use std::time::Instant;

use thiserror::Error;

use crate::data::{EyeSide, Manifest};
use crate::raster::{GrayImage, Mask};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("mask dimensions differ: {0}×{1} vs {2}×{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("{0} score list is empty")]
    EmptyScores(&'static str),
    #[error("{what} needs at least {need} values, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(String),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Value that may be undefined because a denominator vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guarded {
    Finite(f64),
    /// Zero spread with a non-zero mean difference.
    Infinite,
}

impl Guarded {
    pub fn finite(self) -> Option<f64> {
        match self {
            Guarded::Finite(v) => Some(v),
            Guarded::Infinite => None,
        }
    }

    /// Finite value, or `+∞`.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Guarded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guarded::Finite(v) => write!(f, "{v:.6}"),
            Guarded::Infinite => f.write_str("inf"),
        }
    }
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mated and non-mated comparison scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub mated: Vec<f64>,
    pub non_mated: Vec<f64>,
}

impl ScoreSet {
    pub fn new(mated: Vec<f64>, non_mated: Vec<f64>) -> Self {
        Self { mated, non_mated }
    }

    fn check(&self) -> Result<()> {
        if self.mated.is_empty() {
            return Err(EvalError::EmptyScores("mated"));
        }
        if self.non_mated.is_empty() {
            return Err(EvalError::EmptyScores("non-mated"));
        }
        if let Some(&bad) = self.mated.iter().chain(&self.non_mated).find(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteScore(bad));
        }
        Ok(())
    }
}

/// One candidate comparison between two manifest rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub a: usize,
    pub b: usize,
    pub mated: bool,
}

/// All unordered pairs of rows sharing an eye side; mated iff the subject
/// also matches. Indices refer to `manifest.rows()`.
pub fn enumerate_comparisons(manifest: &Manifest) -> Result<Vec<Comparison>> {
    let rows = manifest.rows();
    let mut seen = std::collections::HashSet::with_capacity(rows.len());
    for r in rows {
        if !seen.insert(r.path.as_str()) {
            return Err(EvalError::DuplicatePath(r.path.clone()));
        }
    }
    let mut out = Vec::new();
    for side in [EyeSide::Left, EyeSide::Right] {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].eye_side == side).collect();
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                out.push(Comparison { a: i, b: j, mated: rows[i].subject_id == rows[j].subject_id });
            }
        }
    }
    Ok(out)
}

/// Decidability index `|μ₁ − μ₂| / sqrt((σ₁² + σ₂²) / 2)` with sample
/// standard deviations.
pub fn d_prime(scores: &ScoreSet) -> Result<Guarded> {
    scores.check()?;
    for (what, list) in [("mated scores", &scores.mated), ("non-mated scores", &scores.non_mated)] {
        if list.len() < 2 {
            return Err(EvalError::TooFew { what, need: 2, got: list.len() });
        }
    }
    let (m1, s1) = mean_std(&scores.mated);
    let (m2, s2) = mean_std(&scores.non_mated);
    let spread = (0.5 * (s1 * s1 + s2 * s2)).sqrt();
    let diff = (m1 - m2).abs();
    Ok(if spread > 0.0 {
        Guarded::Finite(diff / spread)
    } else if diff == 0.0 {
        Guarded::Finite(0.0)
    } else {
        Guarded::Infinite
    })
}

/// Error rates at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

/// Operating points at every distinct score, thresholds ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fmr,fnmr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fmr, p.fnmr);
        }
        s
    }
}

/// Counts of non-mated `<= t` and mated `<= t` at each distinct score.
struct Sweep {
    thresholds: Vec<f64>,
    /// Non-mated at or below the threshold.
    false_matches: Vec<u64>,
    /// Mated strictly above the threshold.
    false_non_matches: Vec<u64>,
    n_non: u64,
    n_mated: u64,
}

fn sweep(scores: &ScoreSet) -> Sweep {
    let mut mated = scores.mated.clone();
    let mut non = scores.non_mated.clone();
    mated.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = mated.iter().chain(&non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let (mut i, mut j) = (0, 0);
    let mut fm = Vec::with_capacity(all.len());
    let mut fnm = Vec::with_capacity(all.len());
    for &t in &all {
        while i < non.len() && non[i] <= t {
            i += 1;
        }
        while j < mated.len() && mated[j] <= t {
            j += 1;
        }
        fm.push(i as u64);
        fnm.push((mated.len() - j) as u64);
    }
    Sweep { thresholds: all, false_matches: fm, false_non_matches: fnm, n_non: non.len() as u64, n_mated: mated.len() as u64 }
}

pub fn det_curve(scores: &ScoreSet) -> Result<DetCurve> {
    scores.check()?;
    let s = sweep(scores);
    let points = (0..s.thresholds.len())
        .map(|k| DetPoint {
            threshold: s.thresholds[k],
            fmr: s.false_matches[k] as f64 / s.n_non as f64,
            fnmr: s.false_non_matches[k] as f64 / s.n_mated as f64,
        })
        .collect();
    Ok(DetCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Where the segment between ROC points `(a1/n, b1/m)` and `(a2/n, b2/m)`
/// meets FMR = FNMR, as an exact fraction `(num, den)` of the FMR axis, and
/// the interpolation weight of the second point. `p` must lie on or above
/// the diagonal and `q` on or below it.
pub fn diagonal_crossing(p: (u64, u64), q: (u64, u64), n: u64, m: u64) -> ((i128, i128), f64) {
    let (a1, b1, a2, b2) = (p.0 as i128, p.1 as i128, q.0 as i128, q.1 as i128);
    let (n, m) = (n as i128, m as i128);
    let u1 = b1 * n - a1 * m;
    let u2 = b2 * n - a2 * m;
    if u1 == u2 {
        let g = gcd(a1, n).max(1);
        return ((a1 / g, n / g), 0.0);
    }
    let num = a2 * u1 - a1 * u2;
    let den = n * (u1 - u2);
    let g = gcd(num, den).max(1);
    ((num / g, den / g), u1 as f64 / (u1 - u2) as f64)
}

/// Equal error rate on the convex hull of the ROC.
///
/// ROC points are the error-count pairs at every distinct score plus the
/// reject-all point (FMR 0, FNMR 1). The rate returned is where the lower
/// convex hull of those points crosses FMR = FNMR; the threshold is
/// interpolated along the same hull segment. Hull construction runs on
/// integer counts, so the result is exact up to one final division.
pub fn eer(scores: &ScoreSet) -> Result<Eer> {
    scores.check()?;
    let s = sweep(scores);
    let (n, m) = (s.n_non, s.n_mated);
    // (false matches, false non-matches, threshold), FMR ascending.
    let mut pts: Vec<(u64, u64, f64)> = Vec::with_capacity(s.thresholds.len() + 1);
    pts.push((0, m, s.thresholds[0]));
    for k in 0..s.thresholds.len() {
        pts.push((s.false_matches[k], s.false_non_matches[k], s.thresholds[k]));
    }
    let cross = |o: &(u64, u64, f64), a: &(u64, u64, f64), b: &(u64, u64, f64)| -> i128 {
        let (ox, oy) = (o.0 as i128, o.1 as i128);
        (a.0 as i128 - ox) * (b.1 as i128 - oy) - (a.1 as i128 - oy) * (b.0 as i128 - ox)
    };
    let mut hull: Vec<(u64, u64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    // Signed distance above the diagonal, scaled by n·m.
    let above = |p: &(u64, u64, f64)| p.1 as i128 * n as i128 - p.0 as i128 * m as i128;
    for w in hull.windows(2) {
        let (p, q) = (&w[0], &w[1]);
        if above(p) >= 0 && above(q) <= 0 {
            let ((num, den), frac) = diagonal_crossing((p.0, p.1), (q.0, q.1), n, m);
            return Ok(Eer { eer: num as f64 / den as f64, threshold: p.2 + frac * (q.2 - p.2) });
        }
    }
    // The final point (FMR 1, FNMR 0) is always below the diagonal.
    unreachable!("ROC hull always crosses the diagonal")
}

/// How trustworthy an FNMR@FMR operating point is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingPoint {
    Ok,
    /// Only one non-mated score may fall under the threshold.
    Borderline,
    /// Fewer non-mated scores than `1 / target`; no false match is allowed.
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnmrAtFmr {
    pub target: f64,
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
    pub status: OperatingPoint,
}

/// Default operating points: FMR of 10 %, 1 % and 0.1 %.
pub const DEFAULT_FMR_TARGETS: [f64; 3] = [0.1, 0.01, 0.001];

/// FNMR at the largest non-mated score whose FMR stays within each target.
///
/// When no non-mated score qualifies the threshold sits at the lowest
/// non-mated score with strict comparison (FMR 0).
pub fn fnmr_at_fmr(scores: &ScoreSet, targets: &[f64]) -> Result<Vec<FnmrAtFmr>> {
    scores.check()?;
    if let Some(&t) = targets.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(EvalError::InvalidArgument(format!("FMR target {t} outside (0, 1)")));
    }
    let mut non = scores.non_mated.clone();
    non.sort_by(f64::total_cmp);
    let n = non.len();
    let mated_above = |t: f64, strict: bool| {
        scores.mated.iter().filter(|&&v| if strict { v >= t } else { v > t }).count() as f64 / scores.mated.len() as f64
    };
    Ok(targets
        .iter()
        .map(|&target| {
            let allowed = (target * n as f64 + 1e-9).floor() as usize;
            let status = match allowed {
                0 => OperatingPoint::InsufficientData,
                1 => OperatingPoint::Borderline,
                _ => OperatingPoint::Ok,
            };
            // Largest k with non[k-1] admitted and no tie pushing FMR over.
            let mut k = allowed.min(n);
            while k > 0 && k < n && non[k] == non[k - 1] {
                k -= 1;
            }
            if k == 0 {
                FnmrAtFmr { target, threshold: non[0], fmr: 0.0, fnmr: mated_above(non[0], true), status }
            } else {
                let t = non[k - 1];
                FnmrAtFmr { target, threshold: t, fmr: k as f64 / n as f64, fnmr: mated_above(t, false), status }
            }
        })
        .collect())
}

/// Intersection over union with ε = 1e-7 in the denominator.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(EvalError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(inter as f64 / (union as f64 + 1e-7))
}

fn masked_values(image: &GrayImage, mask: &Mask) -> Vec<f64> {
    image.as_raw().iter().zip(mask.bits()).filter(|(_, &m)| m).map(|(&v, _)| v as f64).collect()
}

/// Iris-to-sclera contrast over sclera standard deviation.
pub fn snr(image: &GrayImage, iris: &Mask, sclera: &Mask) -> Result<Guarded> {
    for m in [iris, sclera] {
        if m.width() != image.width() || m.height() != image.height() {
            return Err(EvalError::DimensionMismatch(m.width(), m.height(), image.width(), image.height()));
        }
    }
    let iv = masked_values(image, iris);
    let sv = masked_values(image, sclera);
    if iv.is_empty() {
        return Err(EvalError::TooFew { what: "iris pixels", need: 1, got: 0 });
    }
    if sv.len() < 2 {
        return Err(EvalError::TooFew { what: "sclera pixels", need: 2, got: sv.len() });
    }
    let (mi, _) = mean_std(&iv);
    let (ms, ss) = mean_std(&sv);
    Ok(if ss > 0.0 { Guarded::Finite((mi - ms).abs() / ss) } else { Guarded::Infinite })
}

/// Summary of an identification-performance run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mated: usize,
    pub non_mated: usize,
    /// Comparisons skipped for insufficient joint mask or failed acquisition.
    pub unusable: usize,
    pub d_prime: Guarded,
    pub eer: Eer,
    pub fnmr: Vec<FnmrAtFmr>,
    pub mated_mean: f64,
    pub non_mated_mean: f64,
}

impl EvalReport {
    pub fn from_scores(scores: &ScoreSet, unusable: usize) -> Result<Self> {
        Ok(Self {
            mated: scores.mated.len(),
            non_mated: scores.non_mated.len(),
            unusable,
            d_prime: d_prime(scores)?,
            eer: eer(scores)?,
            fnmr: fnmr_at_fmr(scores, &DEFAULT_FMR_TARGETS)?,
            mated_mean: mean_std(&scores.mated).0,
            non_mated_mean: mean_std(&scores.non_mated).0,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "mated,{}", self.mated);
        let _ = writeln!(s, "non_mated,{}", self.non_mated);
        let _ = writeln!(s, "unusable,{}", self.unusable);
        let _ = writeln!(s, "mated_mean_hd,{}", self.mated_mean);
        let _ = writeln!(s, "non_mated_mean_hd,{}", self.non_mated_mean);
        let _ = writeln!(s, "d_prime,{}", self.d_prime);
        let _ = writeln!(s, "eer,{}", self.eer.eer);
        let _ = writeln!(s, "eer_threshold,{}", self.eer.threshold);
        for f in &self.fnmr {
            let _ = writeln!(s, "fnmr_at_fmr_{},{}", f.target, f.fnmr);
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mated comparisons:     {}", self.mated)?;
        writeln!(f, "non-mated comparisons: {}", self.non_mated)?;
        writeln!(f, "unusable comparisons:  {}", self.unusable)?;
        writeln!(f, "mean HD mated / non-mated: {:.4} / {:.4}", self.mated_mean, self.non_mated_mean)?;
        writeln!(f, "d': {}", self.d_prime)?;
        writeln!(f, "EER: {:.4}% at HD {:.4}", 100.0 * self.eer.eer, self.eer.threshold)?;
        for p in &self.fnmr {
            let flag = match p.status {
                OperatingPoint::Ok => "",
                OperatingPoint::Borderline => " (borderline)",
                OperatingPoint::InsufficientData => " (insufficient data)",
            };
            writeln!(f, "FNMR @ FMR={}%: {:.4}%{}", 100.0 * p.target, 100.0 * p.fnmr, flag)?;
        }
        Ok(())
    }
}

/// Per-frame timing of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub stage: String,
    pub iterations: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub fps: f64,
    pub hardware: String,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage: {}", self.stage)?;
        writeln!(f, "hardware: {}", self.hardware)?;
        writeln!(f, "iterations: {}", self.iterations)?;
        writeln!(f, "mean ms/frame: {:.3}", 1e3 * self.mean_seconds)?;
        writeln!(f, "std ms/frame: {:.3}", 1e3 * self.std_seconds)?;
        write!(f, "fps: {:.2}", self.fps)
    }
}

/// CPU model and architecture of this machine.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|m| m.trim().to_string()));
    format!("{} ({}), single thread", model.unwrap_or_else(|| "unknown cpu".into()), std::env::consts::ARCH)
}

/// Times `run` once per frame on the calling thread, cycling through
/// `inputs`; the first `warmup` frames are discarded.
pub fn benchmark<I>(stage: &str, inputs: &[I], warmup: usize, iterations: usize, mut run: impl FnMut(&I)) -> Result<BenchReport> {
    if iterations < 10 {
        return Err(EvalError::InvalidArgument(format!("iterations must be at least 10, got {iterations}")));
    }
    if warmup < 2 {
        return Err(EvalError::InvalidArgument(format!("warmup must be at least 2, got {warmup}")));
    }
    if inputs.is_empty() {
        return Err(EvalError::InvalidArgument("no benchmark inputs".into()));
    }
    for k in 0..warmup {
        run(&inputs[k % inputs.len()]);
    }
    let mut times = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let t0 = Instant::now();
        run(&inputs[k % inputs.len()]);
        times.push(t0.elapsed().as_secs_f64());
    }
    let (mean, std) = mean_std(&times);
    Ok(BenchReport {
        stage: stage.to_string(),
        iterations,
        mean_seconds: mean,
        std_seconds: std,
        fps: 1.0 / mean,
        hardware: hardware_descriptor(),
    })
}
