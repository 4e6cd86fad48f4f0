//! End-to-end flow: find eyes, crop, segment the iris, localize, unwrap and
//! encode; plus corpus-level evaluation.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{self, encode, normalize, normalize_mask, CodecError, FilterBank, IrisTemplate, RubberSheet};
use crate::data::synth::{sidecar, SyntheticScene};
use crate::data::{load_image, load_mask, Config, DataError, EyeSide, Manifest};
use crate::eval::{self, enumerate_comparisons, EvalError, EvalReport, ScoreSet};
use crate::eyes::{self, crop_mask, crop_periocular, eye_boxes, find_eye_blobs, EyeBlob, EyeBox, EyeError};
use crate::localize::{localize_mixed, Localization, LocalizeError, MixedConfig, DEFAULT_OCCLUSION_RATIO};
use crate::par::{self, Execution};
use crate::raster::{GrayImage, Mask};
use crate::tensor::{load_weights, TensorError};
use crate::unet::{segment, Sample, Task, UnetError, UnetXxs, UnetXxsConfig};

/// Iris radius below which a capture is rejected as too far away.
pub const DEFAULT_MIN_IRIS_RADIUS: f64 = 45.0;
/// Hamming distance at or below which two templates match.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.35;
pub const DEFAULT_FILTER_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("weights {path}: {source}")]
    Weights { path: PathBuf, source: TensorError },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no eyes: {0}")]
    NoEyes(#[from] EyeError),
    #[error("iris radius {radius:.1} px below minimum {min:.1} px: too far from camera")]
    TooFar { radius: f64, min: f64 },
    #[error("localization failed: {0}")]
    Localization(#[from] LocalizeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Unet(#[from] UnetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Where the encoding filters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSource {
    File(PathBuf),
    Fallback(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub find_eyes_weights: Option<PathBuf>,
    pub segment_iris_weights: Option<PathBuf>,
    pub filters: FilterSource,
    /// Mask binarization threshold for both networks.
    pub threshold: f32,
    pub match_threshold: f64,
    pub max_shift: usize,
    pub occlusion_ratio: f64,
    pub min_iris_radius: f64,
    pub min_blob_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            find_eyes_weights: None,
            segment_iris_weights: None,
            filters: FilterSource::Fallback(DEFAULT_FILTER_SEED),
            threshold: 0.5,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            max_shift: 0,
            occlusion_ratio: DEFAULT_OCCLUSION_RATIO,
            min_iris_radius: DEFAULT_MIN_IRIS_RADIUS,
            min_blob_fraction: eyes::DEFAULT_MIN_AREA_FRACTION,
        }
    }
}

impl PipelineConfig {
    /// Keys: `find_eyes_weights`, `segment_iris_weights`, `filters`,
    /// `filter_seed`, `threshold`, `match_threshold`, `max_shift`,
    /// `occlusion_ratio`, `min_iris_radius`, `min_blob_fraction`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        const KNOWN: [&str; 10] = [
            "find_eyes_weights",
            "segment_iris_weights",
            "filters",
            "filter_seed",
            "threshold",
            "match_threshold",
            "max_shift",
            "occlusion_ratio",
            "min_iris_radius",
            "min_blob_fraction",
        ];
        if let Some(k) = cfg.keys().find(|k| !KNOWN.contains(k)) {
            return Err(PipelineError::Config(format!("unknown key {k}")));
        }
        let d = Self::default();
        let filters = match (cfg.path("filters"), cfg.parse_value::<u64>("filter_seed")?) {
            (Some(_), Some(_)) => return Err(PipelineError::Config("set either filters or filter_seed, not both".into())),
            (Some(p), None) => FilterSource::File(p),
            (None, seed) => FilterSource::Fallback(seed.unwrap_or(DEFAULT_FILTER_SEED)),
        };
        let c = Self {
            find_eyes_weights: cfg.path("find_eyes_weights"),
            segment_iris_weights: cfg.path("segment_iris_weights"),
            filters,
            threshold: cfg.parse_value("threshold")?.unwrap_or(d.threshold),
            match_threshold: cfg.parse_value("match_threshold")?.unwrap_or(d.match_threshold),
            max_shift: cfg.parse_value("max_shift")?.unwrap_or(d.max_shift),
            occlusion_ratio: cfg.parse_value("occlusion_ratio")?.unwrap_or(d.occlusion_ratio),
            min_iris_radius: cfg.parse_value("min_iris_radius")?.unwrap_or(d.min_iris_radius),
            min_blob_fraction: cfg.parse_value("min_blob_fraction")?.unwrap_or(d.min_blob_fraction),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PipelineError::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(PipelineError::Config(format!("match_threshold {} outside [0, 1]", self.match_threshold)));
        }
        let positive = self.occlusion_ratio.is_finite() && self.occlusion_ratio > 0.0;
        let radius_ok = self.min_iris_radius.is_finite() && self.min_iris_radius >= 0.0;
        if !positive || !radius_ok || !(0.0..1.0).contains(&self.min_blob_fraction) {
            return Err(PipelineError::Config("occlusion_ratio, min_iris_radius or min_blob_fraction out of range".into()));
        }
        Ok(())
    }

    /// Loads the filter bank this configuration names.
    pub fn load_filters(&self) -> Result<FilterBank> {
        Ok(match &self.filters {
            FilterSource::File(p) => codec::load_filters(p)?,
            FilterSource::Fallback(seed) => codec::generate_fallback_filters(*seed),
        })
    }
}

/// Builds a task model and fills it from a weight file.
pub fn load_model(task: Task, path: &Path, threshold: f32) -> Result<UnetXxs> {
    let cfg = UnetXxsConfig { threshold, ..UnetXxsConfig::for_task(task) };
    let mut model = UnetXxs::new(&cfg)?;
    let params = load_weights::<f32>(path).map_err(|source| PipelineError::Weights { path: path.to_path_buf(), source })?;
    model.load_params(&params).map_err(|e| match e {
        UnetError::Tensor(source) => PipelineError::Weights { path: path.to_path_buf(), source },
        other => other.into(),
    })?;
    Ok(model)
}

/// Everything produced for one eye.
#[derive(Debug, Clone)]
pub struct EyeResult {
    pub side: EyeSide,
    pub crop: GrayImage,
    pub iris_mask: Mask,
    pub localization: Localization,
    pub sheet: RubberSheet,
    pub template: IrisTemplate,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub eye_mask: Mask,
    pub blobs: [EyeBlob; 2],
    pub boxes: [EyeBox; 2],
    /// Left then right.
    pub eyes: Vec<Result<EyeResult>>,
}

impl PipelineOutput {
    pub fn eye(&self, side: EyeSide) -> &Result<EyeResult> {
        &self.eyes[side.index()]
    }
}

/// Loaded models and filters, ready to process images. Immutable and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub find_eyes: UnetXxs,
    pub segment_iris: UnetXxs,
    pub filters: FilterBank,
    pub config: PipelineConfig,
}

impl Pipeline {
    /// Resolves every resource up front; missing weights fail here.
    pub fn load(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let fe = config
            .find_eyes_weights
            .clone()
            .ok_or_else(|| PipelineError::Config("find_eyes_weights not set".into()))?;
        let si = config
            .segment_iris_weights
            .clone()
            .ok_or_else(|| PipelineError::Config("segment_iris_weights not set".into()))?;
        let find_eyes = load_model(Task::FindEyes, &fe, config.threshold)?;
        let segment_iris = load_model(Task::SegmentIris, &si, config.threshold)?;
        let filters = config.load_filters()?;
        Ok(Self { find_eyes, segment_iris, filters, config })
    }

    pub fn new(find_eyes: UnetXxs, segment_iris: UnetXxs, filters: FilterBank, config: PipelineConfig) -> Self {
        Self { find_eyes, segment_iris, filters, config }
    }

    /// Segment, localize and encode one periocular crop.
    pub fn process_crop(&self, crop: &GrayImage, side: EyeSide, subject_id: &str) -> Result<EyeResult> {
        let iris_mask = segment(&self.segment_iris, crop)?;
        let mixed = MixedConfig { occlusion_ratio: self.config.occlusion_ratio, ..MixedConfig::default() };
        let loc = localize_mixed(&iris_mask, Some(crop), &mixed)?;
        if loc.iris.r < self.config.min_iris_radius {
            return Err(PipelineError::TooFar { radius: loc.iris.r, min: self.config.min_iris_radius });
        }
        let valid = normalize_mask(&iris_mask, &loc.pupil, &loc.iris)?;
        let sheet = normalize(crop, &loc.pupil, &loc.iris)?.restrict(&valid);
        let template = encode(&sheet, &self.filters, subject_id, side);
        Ok(EyeResult { side, crop: crop.clone(), iris_mask, localization: loc, sheet, template })
    }

    /// Full flow on a face image. Fails as a whole only when no eye pair is
    /// found; per-eye failures are reported in `eyes`.
    pub fn process(&self, image: &GrayImage, subject_id: &str) -> Result<PipelineOutput> {
        let eye_mask = segment(&self.find_eyes, image)?;
        let blobs = find_eye_blobs(&eye_mask, self.config.min_blob_fraction)?;
        let boxes = eye_boxes(&blobs, image.width(), image.height())?;
        let eyes = boxes
            .iter()
            .map(|b| {
                let crop = crop_periocular(image, b)?;
                self.process_crop(&crop, b.side, subject_id)
            })
            .collect();
        Ok(PipelineOutput { eye_mask, blobs, boxes, eyes })
    }

    /// Template of one eye of an image.
    pub fn acquire(&self, image: &GrayImage, side: EyeSide, subject_id: &str) -> Result<EyeResult> {
        let mut out = self.process(image, subject_id)?;
        out.eyes.swap_remove(side.index())
    }
}

/// Per-image outcome of a corpus run.
#[derive(Debug)]
pub struct Acquisition {
    pub template: Option<IrisTemplate>,
    pub iris_radius: Option<f64>,
    pub error: Option<String>,
}

/// Scores and summary of a corpus evaluation.
#[derive(Debug)]
pub struct Evaluation {
    pub scores: ScoreSet,
    pub report: EvalReport,
    pub acquisitions: Vec<Acquisition>,
    /// Failed acquisitions among the images.
    pub failures: usize,
}

impl Evaluation {
    /// Mean localized iris radius over successful acquisitions.
    pub fn mean_iris_radius(&self) -> Option<f64> {
        let r: Vec<f64> = self.acquisitions.iter().filter_map(|a| a.iris_radius).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

/// Templates for each `(image, side, subject)`.
pub fn acquire_all(pipeline: &Pipeline, items: &[(GrayImage, EyeSide, String)], mode: Execution) -> Vec<Acquisition> {
    par::map(mode, items, |(img, side, subject)| match pipeline.acquire(img, *side, subject) {
        Ok(r) => Acquisition { iris_radius: Some(r.localization.iris.r), template: Some(r.template), error: None },
        Err(e) => Acquisition { template: None, iris_radius: None, error: Some(e.to_string()) },
    })
}

/// Scores every comparison of `manifest` given one acquisition per row.
///
/// Comparisons involving a failed acquisition, or whose joint mask is too
/// small, score 1.0 and are counted as unusable.
pub fn score_comparisons(
    manifest: &Manifest,
    acquisitions: &[Acquisition],
    max_shift: usize,
    mode: Execution,
) -> Result<(ScoreSet, usize)> {
    let pairs = enumerate_comparisons(manifest)?;
    let scored = par::map(mode, &pairs, |c| {
        match (&acquisitions[c.a].template, &acquisitions[c.b].template) {
            (Some(a), Some(b)) => match a.hamming_distance(b, max_shift) {
                Ok(hd) => (c.mated, hd, false),
                Err(_) => (c.mated, 1.0, true),
            },
            _ => (c.mated, 1.0, true),
        }
    });
    let mut scores = ScoreSet::default();
    let mut unusable = 0;
    for (mated, hd, bad) in scored {
        unusable += bad as usize;
        if mated {
            scores.mated.push(hd);
        } else {
            scores.non_mated.push(hd);
        }
    }
    Ok((scores, unusable))
}

/// Runs the pipeline on in-memory images aligned with `manifest` rows.
pub fn evaluate_images(pipeline: &Pipeline, manifest: &Manifest, images: Vec<GrayImage>, mode: Execution) -> Result<Evaluation> {
    let items: Vec<(GrayImage, EyeSide, String)> = images
        .into_iter()
        .zip(manifest.rows())
        .map(|(img, row)| (img, row.eye_side, row.subject_id.clone()))
        .collect();
    let acquisitions = acquire_all(pipeline, &items, mode);
    let failures = acquisitions.iter().filter(|a| a.template.is_none()).count();
    let (scores, unusable) = score_comparisons(manifest, &acquisitions, pipeline.config.max_shift, mode)?;
    let report = EvalReport::from_scores(&scores, unusable)?;
    Ok(Evaluation { scores, report, acquisitions, failures })
}

/// Loads every manifest image and evaluates.
pub fn evaluate_manifest(pipeline: &Pipeline, manifest: &Manifest, mode: Execution) -> Result<Evaluation> {
    let images = manifest.rows().iter().map(|r| load_image(manifest.resolve(r))).collect::<Result<Vec<_>, _>>()?;
    evaluate_images(pipeline, manifest, images, mode)
}

/// Periocular training pairs cut around the blobs of a ground-truth eye mask.
pub fn iris_crops(image: &GrayImage, eye_mask: &Mask, iris_mask: &Mask) -> Result<Vec<Sample>> {
    let blobs = find_eye_blobs(eye_mask, eyes::DEFAULT_MIN_AREA_FRACTION)?;
    let boxes = eye_boxes(&blobs, image.width(), image.height())?;
    boxes
        .iter()
        .map(|b| Ok(Sample { image: crop_periocular(image, b)?, mask: crop_mask(iris_mask, b)? }))
        .collect()
}

/// Training pairs for `task` from a synthetic scene. Scenes without eyes
/// give one empty-mask sample for eye finding and none for the iris task.
pub fn scene_samples(task: Task, scene: &SyntheticScene) -> Result<Vec<Sample>> {
    match task {
        Task::FindEyes => Ok(vec![Sample { image: scene.image.clone(), mask: scene.eye_mask.clone() }]),
        Task::SegmentIris if scene.eyes.is_empty() => Ok(Vec::new()),
        Task::SegmentIris => iris_crops(&scene.image, &scene.eye_mask, &scene.iris_mask),
    }
}

/// Training pairs for `task` from a manifest whose images carry
/// `<stem>_eyes.pgm` and (for the iris task) `<stem>_iris.pgm` sidecars.
pub fn manifest_samples(task: Task, manifest: &Manifest) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for row in manifest.rows() {
        let path = manifest.resolve(row);
        let image = load_image(&path)?;
        let eyes = load_mask(sidecar(&path, "eyes"))?;
        match task {
            Task::FindEyes => out.push(Sample { image, mask: eyes }),
            Task::SegmentIris => {
                if eyes.is_empty() {
                    continue;
                }
                let iris = load_mask(sidecar(&path, "iris"))?;
                out.extend(iris_crops(&image, &eyes, &iris)?);
            }
        }
    }
    Ok(out)
}

/// Convenience: pure score-set report without a pipeline.
pub fn report_for(scores: &ScoreSet, unusable: usize) -> Result<EvalReport> {
    Ok(eval::EvalReport::from_scores(scores, unusable)?)
}
