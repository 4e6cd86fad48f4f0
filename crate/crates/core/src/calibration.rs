//! Sensor calibration: resolution sweep, radius-vs-distance model, SNR
//! tabulation, gaze aperture ratio and distance-interval intersection.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::data::synth::sidecar;
use crate::data::{load_image, load_mask, DataError, Manifest};
use crate::eval::{self, Guarded};
use crate::par::Execution;
use crate::pipeline::{evaluate_images, Evaluation, Pipeline, PipelineError, DEFAULT_MIN_IRIS_RADIUS};
use crate::raster::GrayImage;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("radius model needs at least one sample")]
    NoSamples,
    #[error("distance {0} cm is not positive")]
    NonPositiveDistance(f64),
    #[error("radius {0} px is not positive")]
    NonPositiveRadius(f64),
    #[error("distance {0} cm appears more than once")]
    DuplicateDistance(f64),
    #[error("eye {eye}: Dx must be positive, got {dx}")]
    ZeroWidth { eye: usize, dx: f64 },
    #[error("interval {label}: lower {lower} exceeds upper {upper}")]
    InvertedInterval { label: String, lower: f64, upper: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("manifest row {0} has no distance_cm")]
    MissingDistance(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T, E = CalibrationError> = std::result::Result<T, E>;

/// Configured minimum usable iris radius in pixels.
pub fn min_radius_threshold(configured: Option<f64>) -> f64 {
    configured.unwrap_or(DEFAULT_MIN_IRIS_RADIUS)
}

/// Inverse-proportional model `r(d) = k / d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusDistanceModel {
    pub k: f64,
    /// `(distance_cm, mean_radius_px)`.
    pub samples: Vec<(f64, f64)>,
    pub residual_rms: f64,
}

impl RadiusDistanceModel {
    pub fn predict(&self, distance_cm: f64) -> f64 {
        self.k / distance_cm
    }

    /// Distance at which the iris radius equals `radius_px`.
    pub fn invert(&self, radius_px: f64) -> f64 {
        self.k / radius_px
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("k_px_cm,{}\nresidual_rms_px,{}\ndistance_cm,radius_px,predicted_px\n", self.k, self.residual_rms);
        for &(d, r) in &self.samples {
            let _ = writeln!(s, "{d},{r},{}", self.predict(d));
        }
        s
    }
}

/// Least-squares `k` in `r = k / d`: `k = Σ(r/d) / Σ(1/d²)`.
///
/// One sample determines `k` exactly and is accepted; more samples must have
/// distinct distances.
pub fn fit_radius_model(samples: &[(f64, f64)]) -> Result<RadiusDistanceModel> {
    if samples.is_empty() {
        return Err(CalibrationError::NoSamples);
    }
    let mut seen = Vec::with_capacity(samples.len());
    for &(d, r) in samples {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CalibrationError::NonPositiveDistance(d));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(CalibrationError::NonPositiveRadius(r));
        }
        if seen.contains(&d) {
            return Err(CalibrationError::DuplicateDistance(d));
        }
        seen.push(d);
    }
    let num: f64 = samples.iter().map(|&(d, r)| r / d).sum();
    let den: f64 = samples.iter().map(|&(d, _)| 1.0 / (d * d)).sum();
    let k = num / den;
    let sq: f64 = samples.iter().map(|&(d, r)| (r - k / d).powi(2)).sum();
    Ok(RadiusDistanceModel { k, samples: samples.to_vec(), residual_rms: (sq / samples.len() as f64).sqrt() })
}

/// Mean `Dy / Dx` over eyes given `(dx, dy)` per eye.
pub fn gaze_aperture_ratio(eyes: &[(f64, f64)]) -> Result<f64> {
    if eyes.is_empty() {
        return Err(CalibrationError::InvalidArgument("no eyes given".into()));
    }
    for (eye, &(dx, _)) in eyes.iter().enumerate() {
        if dx.is_nan() || dx <= 0.0 {
            return Err(CalibrationError::ZeroWidth { eye, dx });
        }
    }
    Ok(eyes.iter().map(|&(dx, dy)| dy / dx).sum::<f64>() / eyes.len() as f64)
}

/// Closed interval of acceptable camera distances; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceInterval {
    pub lower_cm: f64,
    pub upper_cm: f64,
    pub criterion: String,
}

impl DistanceInterval {
    pub fn new(lower_cm: f64, upper_cm: f64, criterion: impl Into<String>) -> Result<Self> {
        let criterion = criterion.into();
        if lower_cm.is_nan() || upper_cm.is_nan() || lower_cm > upper_cm {
            return Err(CalibrationError::InvertedInterval { label: criterion, lower: lower_cm, upper: upper_cm });
        }
        Ok(Self { lower_cm, upper_cm, criterion })
    }

    pub fn at_most(upper_cm: f64, criterion: impl Into<String>) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, upper_cm, criterion)
    }

    pub fn at_least(lower_cm: f64, criterion: impl Into<String>) -> Result<Self> {
        Self::new(lower_cm, f64::INFINITY, criterion)
    }

    /// Parses `lo:hi` with empty sides for unbounded, e.g. `:35`, `25:`.
    pub fn parse(spec: &str, criterion: impl Into<String>) -> Result<Self> {
        let (lo, hi) = spec
            .split_once(':')
            .ok_or_else(|| CalibrationError::InvalidArgument(format!("interval {spec:?} must look like lo:hi")))?;
        let bound = |s: &str, inf: f64| -> Result<f64> {
            let s = s.trim();
            if s.is_empty() {
                Ok(inf)
            } else {
                s.parse().map_err(|_| CalibrationError::InvalidArgument(format!("bad interval bound {s:?}")))
            }
        };
        Self::new(bound(lo, f64::NEG_INFINITY)?, bound(hi, f64::INFINITY)?, criterion)
    }
}

impl fmt::Display for DistanceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = if self.lower_cm == f64::NEG_INFINITY { "(-inf".to_string() } else { format!("[{}", self.lower_cm) };
        let hi = if self.upper_cm == f64::INFINITY { "inf)".to_string() } else { format!("{}]", self.upper_cm) };
        write!(f, "{lo}, {hi} cm")
    }
}

/// Intersection of all criteria.
#[derive(Debug, Clone, PartialEq)]
pub enum IntervalOutcome {
    Feasible(DistanceInterval),
    /// The criteria have no distance in common.
    Infeasible,
}

pub fn optimal_interval(criteria: &[DistanceInterval]) -> Result<IntervalOutcome> {
    if criteria.is_empty() {
        return Err(CalibrationError::InvalidArgument("no criteria given".into()));
    }
    let lower = criteria.iter().map(|c| c.lower_cm).fold(f64::NEG_INFINITY, f64::max);
    let upper = criteria.iter().map(|c| c.upper_cm).fold(f64::INFINITY, f64::min);
    if lower > upper {
        return Ok(IntervalOutcome::Infeasible);
    }
    let label = criteria.iter().map(|c| c.criterion.as_str()).collect::<Vec<_>>().join(" & ");
    Ok(IntervalOutcome::Feasible(DistanceInterval { lower_cm: lower, upper_cm: upper, criterion: label }))
}

/// Plain-text report listing each criterion and the intersection.
pub fn interval_report(criteria: &[DistanceInterval]) -> Result<String> {
    let mut s = String::new();
    for c in criteria {
        let _ = writeln!(s, "{}: {}", c.criterion, c);
    }
    match optimal_interval(criteria)? {
        IntervalOutcome::Feasible(i) => {
            let _ = writeln!(s, "optimal: {i}");
        }
        IntervalOutcome::Infeasible => s.push_str("optimal: infeasible\n"),
    }
    Ok(s)
}

/// One row of a resolution sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub width_px: usize,
    pub mean_iris_radius_px: Option<f64>,
    pub eer: f64,
    pub d_prime: Guarded,
    /// False when localization failed on more than half of the images.
    pub usable: bool,
    pub failures: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("width_px,mean_iris_radius_px,eer,d_prime,usable\n");
    for r in rows {
        let radius = r.mean_iris_radius_px.map(|v| format!("{v:.4}")).unwrap_or_else(|| "nan".into());
        let _ = writeln!(s, "{},{},{:.6},{},{}", r.width_px, radius, r.eer, r.d_prime, r.usable);
    }
    s
}

/// Downscales `image` to `width` preserving aspect ratio; unchanged when the
/// width already matches.
pub fn downscale_to_width(image: &GrayImage, width: usize) -> GrayImage {
    if width == image.width() {
        return image.clone();
    }
    let h = ((image.height() as f64 * width as f64 / image.width() as f64).round() as usize).max(1);
    image.resize_bilinear(width, h)
}

/// Evaluates the pipeline at each width. Widths must be descending.
///
/// The pipeline is used as configured; callers sweeping below the usable
/// radius typically set `min_iris_radius` to zero so that small irises are
/// measured rather than rejected.
pub fn resolution_sweep(
    pipeline: &Pipeline,
    manifest: &Manifest,
    images: &[GrayImage],
    widths: &[usize],
    mode: Execution,
) -> Result<Vec<(SweepRow, Evaluation)>> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(CalibrationError::InvalidArgument("widths must be non-empty and positive".into()));
    }
    if widths.windows(2).any(|w| w[0] <= w[1]) {
        return Err(CalibrationError::InvalidArgument("widths must be strictly descending".into()));
    }
    if images.len() != manifest.len() {
        return Err(CalibrationError::InvalidArgument(format!("{} images for {} manifest rows", images.len(), manifest.len())));
    }
    let mut out = Vec::with_capacity(widths.len());
    for &width in widths {
        let scaled: Vec<GrayImage> = images.iter().map(|im| downscale_to_width(im, width)).collect();
        let ev = evaluate_images(pipeline, manifest, scaled, mode)?;
        log::info!("sweep width {width}: {} failures, eer {:.4}", ev.failures, ev.report.eer.eer);
        let row = SweepRow {
            width_px: width,
            mean_iris_radius_px: ev.mean_iris_radius(),
            eer: ev.report.eer.eer,
            d_prime: ev.report.d_prime,
            usable: ev.failures * 2 <= images.len(),
            failures: ev.failures,
        };
        out.push((row, ev));
    }
    Ok(out)
}

/// SNR statistics at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrRow {
    pub distance_cm: f64,
    pub images: usize,
    pub mean_snr: Option<f64>,
    /// Images whose sclera had zero spread.
    pub infinite: usize,
}

/// Tabulates SNR per distance from `(distance_cm, snr)` pairs.
pub fn tabulate_snr(values: &[(f64, Guarded)]) -> Vec<SnrRow> {
    let mut groups: BTreeMap<u64, Vec<Guarded>> = BTreeMap::new();
    for &(d, s) in values {
        groups.entry(d.to_bits()).or_default().push(s);
    }
    let mut rows: Vec<SnrRow> = groups
        .into_iter()
        .map(|(bits, v)| {
            let finite: Vec<f64> = v.iter().filter_map(|g| g.finite()).collect();
            SnrRow {
                distance_cm: f64::from_bits(bits),
                images: v.len(),
                mean_snr: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
                infinite: v.len() - finite.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.distance_cm.total_cmp(&b.distance_cm));
    rows
}

/// SNR of every manifest image from its `_iris` and `_sclera` mask sidecars,
/// tabulated by distance.
pub fn snr_vs_distance(manifest: &Manifest) -> Result<Vec<SnrRow>> {
    let mut values = Vec::with_capacity(manifest.len());
    for (i, row) in manifest.rows().iter().enumerate() {
        let d = row.distance_cm.ok_or(CalibrationError::MissingDistance(i + 1))?;
        let path = manifest.resolve(row);
        let image = load_image(&path)?;
        let iris = load_mask(sidecar(&path, "iris"))?;
        let sclera = load_mask(sidecar(&path, "sclera"))?;
        values.push((d, eval::snr(&image, &iris, &sclera)?));
    }
    Ok(tabulate_snr(&values))
}

pub fn snr_csv(rows: &[SnrRow]) -> String {
    let mut s = String::from("distance_cm,images,mean_snr,infinite\n");
    for r in rows {
        let m = r.mean_snr.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into());
        let _ = writeln!(s, "{},{},{},{}", r.distance_cm, r.images, m, r.infinite);
    }
    s
}

/// Mean radius per distinct distance from `(distance_cm, radius_px)` pairs,
/// the input shape `fit_radius_model` expects.
pub fn mean_radius_by_distance(values: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut groups: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for &(d, r) in values {
        let e = groups.entry(d.to_bits()).or_default();
        e.0 += r;
        e.1 += 1;
    }
    let mut out: Vec<(f64, f64)> = groups.into_iter().map(|(b, (s, n))| (f64::from_bits(b), s / n as f64)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
