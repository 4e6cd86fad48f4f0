//! Synthetic two-eye scenes with exact ground truth.
//!
//! A scene is a face-like textured background with two open eyes: a bright
//! sclera inside an elliptical opening, an iris disc carrying a band-pass
//! texture that depends only on the identity and eye, a dark pupil, and an
//! optional upper-eyelid cap. Nuisances (pupil dilation, gaze, head position,
//! occlusion, sensor noise) vary per sample.
//!
//! Geometry scales with the iris radius `r`: pupils are `7·r` apart and the
//! canvas is at least 640 px wide with a 4:3 aspect.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{save_image, save_mask, DataError, EyeSide, Manifest, ManifestRow, Result};
use crate::eyes::make_gt_eye_circles;
use crate::localize::Circle;
use crate::par::{self, Execution};
use crate::raster::{gaussian_kernel, GrayImage, Mask};

/// Inter-pupil distance in iris radii.
pub const EYE_SPACING: f64 = 7.0;
/// Radial × angular resolution of the identity texture field.
pub const TEXTURE_ROWS: usize = 64;
pub const TEXTURE_COLS: usize = 512;

const SCLERA: f64 = 190.0;
const PUPIL: f64 = 25.0;
const IRIS_MEAN: f64 = 100.0;
const IRIS_CONTRAST: f64 = 35.0;
const SKIN_MEAN: f64 = 150.0;
/// Eye opening semi-axes in iris radii.
const OPENING: (f64, f64) = (1.6, 1.15);
/// Eyelid cap radius in iris radii.
const LID_RADIUS: f64 = 2.5;

/// Nuisance and geometry parameters of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    /// Iris radius in pixels, 20 to 120.
    pub iris_radius: f64,
    /// Standard deviation of additive Gaussian sensor noise, 0 to 30.
    pub noise_sigma: f64,
    /// Fraction of the iris diameter hidden under the upper eyelid, 0 to 0.5.
    pub occlusion: f64,
    /// Pupil radius over iris radius.
    pub pupil_ratio: f64,
    /// Iris offset inside the eye opening, in iris radii.
    pub gaze: (f64, f64),
    /// Head position jitter as a fraction of the canvas size.
    pub head_offset: (f64, f64),
    pub eyes_closed: bool,
    /// Background only, no eyes at all.
    pub no_eyes: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            iris_radius: 60.0,
            noise_sigma: 0.0,
            occlusion: 0.0,
            pupil_ratio: 0.4,
            gaze: (0.0, 0.0),
            head_offset: (0.0, 0.0),
            eyes_closed: false,
            no_eyes: false,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::InvalidParameter(m));
        if !(20.0..=120.0).contains(&self.iris_radius) {
            return bad(format!("iris radius {} outside [20, 120]", self.iris_radius));
        }
        if !(0.0..=30.0).contains(&self.noise_sigma) {
            return bad(format!("noise sigma {} outside [0, 30]", self.noise_sigma));
        }
        if !(0.0..=0.5).contains(&self.occlusion) {
            return bad(format!("occlusion {} outside [0, 0.5]", self.occlusion));
        }
        if !(0.2..=0.6).contains(&self.pupil_ratio) {
            return bad(format!("pupil ratio {} outside [0.2, 0.6]", self.pupil_ratio));
        }
        if self.gaze.0.abs() > 0.25 || self.gaze.1.abs() > 0.1 {
            return bad(format!("gaze {:?} exceeds (±0.25, ±0.1)", self.gaze));
        }
        if self.head_offset.0.abs() > 0.05 || self.head_offset.1.abs() > 0.05 {
            return bad(format!("head offset {:?} exceeds ±0.05", self.head_offset));
        }
        Ok(())
    }

    /// Canvas size for this iris radius.
    pub fn canvas(&self) -> (usize, usize) {
        let w = (1.52 * EYE_SPACING * self.iris_radius).round().max(640.0) as usize;
        (w, (w as f64 * 0.75).round() as usize)
    }
}

/// Ground truth for one rendered eye.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeTruth {
    pub side: EyeSide,
    pub pupil: Circle,
    pub iris: Circle,
    pub occlusion: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: GrayImage,
    /// Left then right; empty when no open eyes were drawn.
    pub eyes: Vec<EyeTruth>,
    /// Discs of radius `0.2·d` at the pupil centres.
    pub eye_mask: Mask,
    /// Visible iris annulus of both eyes.
    pub iris_mask: Mask,
    /// Visible sclera of both eyes.
    pub sclera_mask: Mask,
    pub identity_seed: u64,
    pub sample_seed: u64,
    pub params: SceneParams,
}

/// SplitMix64 step; mixes seeds into independent streams.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Separable blur of a rows×cols field: clamped along rows, periodic along
/// columns.
fn blur_polar(field: &[f64], rows: usize, cols: usize, sigma_r: f64, sigma_c: f64) -> Vec<f64> {
    let kc = gaussian_kernel(sigma_c);
    let hc = (kc.len() / 2) as i64;
    let mut tmp = vec![0.0; field.len()];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, &w) in kc.iter().enumerate() {
                let jj = (j as i64 + t as i64 - hc).rem_euclid(cols as i64) as usize;
                acc += w * field[i * cols + jj];
            }
            tmp[i * cols + j] = acc;
        }
    }
    let kr = gaussian_kernel(sigma_r);
    let hr = (kr.len() / 2) as i64;
    let mut out = vec![0.0; field.len()];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, &w) in kr.iter().enumerate() {
                let ii = (i as i64 + t as i64 - hr).clamp(0, rows as i64 - 1) as usize;
                acc += w * tmp[ii * cols + j];
            }
            out[i * cols + j] = acc;
        }
    }
    out
}

/// Identity texture on the normalised polar grid: difference of two blurred
/// copies of one white-noise field, scaled to zero mean and unit variance.
/// Rows run from the pupil edge outwards; column `j` is angle `2πj/cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrisTexture {
    values: Vec<f64>,
}

impl IrisTexture {
    pub fn new(identity_seed: u64, side: EyeSide) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(identity_seed, 0x1415 + side.index() as u64));
        let n = TEXTURE_ROWS * TEXTURE_COLS;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let white: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        // Angular cells are about half the size of radial ones at mid-iris.
        let fine = blur_polar(&white, TEXTURE_ROWS, TEXTURE_COLS, 1.0, 2.0);
        let coarse = blur_polar(&white, TEXTURE_ROWS, TEXTURE_COLS, 3.0, 6.0);
        let mut values: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f - c).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear lookup at radial fraction `rho ∈ [0, 1]` and angle `phi`.
    pub fn sample(&self, rho: f64, phi: f64) -> f64 {
        let u = (rho * TEXTURE_ROWS as f64 - 0.5).clamp(0.0, (TEXTURE_ROWS - 1) as f64);
        let v = (phi / (2.0 * PI)).rem_euclid(1.0) * TEXTURE_COLS as f64;
        let (i0, j0) = (u.floor() as usize, v.floor() as usize % TEXTURE_COLS);
        let i1 = (i0 + 1).min(TEXTURE_ROWS - 1);
        let j1 = (j0 + 1) % TEXTURE_COLS;
        let (fu, fv) = (u - u.floor(), v - v.floor());
        let at = |i: usize, j: usize| self.values[i * TEXTURE_COLS + j];
        (1.0 - fu) * ((1.0 - fv) * at(i0, j0) + fv * at(i0, j1)) + fu * ((1.0 - fv) * at(i1, j0) + fv * at(i1, j1))
    }
}

/// Smooth random field: Gaussian values on a coarse lattice with spacing
/// `cell` pixels, bilinearly interpolated.
fn smooth_field(w: usize, h: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let grid: Vec<f64> = (0..gw * gh).map(|_| normal.sample(rng)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = y as f64 / cell;
        let (y0, fy) = (gy.floor() as usize, gy - gy.floor());
        for x in 0..w {
            let gx = x as f64 / cell;
            let (x0, fx) = (gx.floor() as usize, gx - gx.floor());
            let at = |i: usize, j: usize| grid[j * gw + i];
            out.push(
                (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
                    + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1)),
            );
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Region {
    Skin,
    Sclera,
    Iris,
    Pupil,
}

struct EyeLayout {
    center: (f64, f64),
    iris: Circle,
    pupil: Circle,
    /// Centre of the eyelid cap circle.
    lid: (f64, f64),
}

impl EyeLayout {
    fn region(&self, x: f64, y: f64, r: f64) -> Region {
        let (ex, ey) = ((x - self.center.0) / (OPENING.0 * r), (y - self.center.1) / (OPENING.1 * r));
        if ex * ex + ey * ey > 1.0 {
            return Region::Skin;
        }
        if (x - self.lid.0).powi(2) + (y - self.lid.1).powi(2) <= (LID_RADIUS * r).powi(2) {
            return Region::Skin;
        }
        let d2 = (x - self.iris.x).powi(2) + (y - self.iris.y).powi(2);
        if d2 <= self.pupil.r * self.pupil.r {
            Region::Pupil
        } else if d2 <= self.iris.r * self.iris.r {
            Region::Iris
        } else {
            Region::Sclera
        }
    }
}

/// Renders one scene. Same `identity_seed` means the same iris textures;
/// `sample_seed` drives background and sensor noise.
pub fn generate_scene(identity_seed: u64, sample_seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let r = params.iris_radius;
    let (w, h) = params.canvas();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sample_seed, 0xB0D1));
    let coarse = smooth_field(w, h, 120.0, &mut rng);
    let mid = smooth_field(w, h, 14.0, &mut rng);
    let skin: Vec<f64> = coarse.iter().zip(&mid).map(|(c, m)| SKIN_MEAN + 15.0 * c + 8.0 * m).collect();

    let face = (w as f64 * (0.5 + params.head_offset.0), h as f64 * (0.5 + params.head_offset.1));
    let layouts: Vec<EyeLayout> = if params.no_eyes {
        Vec::new()
    } else {
        [-0.5, 0.5]
            .iter()
            .map(|&s| {
                let center = (face.0 + s * EYE_SPACING * r, face.1);
                let ic = (center.0 + params.gaze.0 * r, center.1 + params.gaze.1 * r);
                let lowest = ic.1 - r + 2.0 * r * params.occlusion;
                EyeLayout {
                    center,
                    iris: Circle::new(ic.0, ic.1, r),
                    pupil: Circle::new(ic.0, ic.1, params.pupil_ratio * r),
                    lid: (ic.0, lowest - LID_RADIUS * r),
                }
            })
            .collect()
    };
    let textures: Vec<IrisTexture> =
        [EyeSide::Left, EyeSide::Right].iter().take(layouts.len()).map(|&s| IrisTexture::new(identity_seed, s)).collect();

    let mut values = skin;
    let mut iris_mask = Mask::new(w, h);
    let mut sclera_mask = Mask::new(w, h);
    let reach = OPENING.0 * r + 2.0;
    for (k, eye) in layouts.iter().enumerate() {
        let xs = ((eye.center.0 - reach).floor().max(0.0) as usize)..((eye.center.0 + reach).ceil().min(w as f64) as usize);
        let ys = ((eye.center.1 - reach).floor().max(0.0) as usize)..((eye.center.1 + reach).ceil().min(h as f64) as usize);
        for y in ys.clone() {
            for x in xs.clone() {
                let (fx, fy) = (x as f64, y as f64);
                let i = y * w + x;
                if params.eyes_closed {
                    // Lash line along the closed lid.
                    let ex = (fx - eye.center.0) / (OPENING.0 * r);
                    let lid_y = eye.center.1 + 0.25 * r * (1.0 - ex * ex);
                    if ex.abs() <= 1.0 && (fy - lid_y).abs() <= 0.06 * r {
                        values[i] = 60.0;
                    }
                    continue;
                }
                match eye.region(fx, fy, r) {
                    Region::Skin => {}
                    Region::Sclera => {
                        values[i] = SCLERA;
                        sclera_mask.set(x, y, true);
                    }
                    Region::Pupil => values[i] = PUPIL,
                    Region::Iris => {
                        let (dx, dy) = (fx - eye.iris.x, fy - eye.iris.y);
                        let rho = ((dx * dx + dy * dy).sqrt() - eye.pupil.r) / (eye.iris.r - eye.pupil.r);
                        let phi = (-dy).atan2(dx);
                        let t = textures[k].sample(rho.clamp(0.0, 1.0), phi);
                        values[i] = (IRIS_MEAN + IRIS_CONTRAST * t).clamp(45.0, 170.0);
                        iris_mask.set(x, y, true);
                    }
                }
            }
        }
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).expect("positive sigma");
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(sample_seed, 0x5E45));
        values.iter_mut().for_each(|v| *v += normal.sample(&mut noise_rng));
    }
    let image = GrayImage::from_raw(w, h, values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
        .expect("canvas size");

    let (eyes, eye_mask) = if layouts.is_empty() || params.eyes_closed {
        (Vec::new(), Mask::new(w, h))
    } else {
        let centers = [(layouts[0].iris.x, layouts[0].iris.y), (layouts[1].iris.x, layouts[1].iris.y)];
        let eye_mask = make_gt_eye_circles(w, h, centers).expect("distinct eye centres");
        let eyes = layouts
            .iter()
            .zip([EyeSide::Left, EyeSide::Right])
            .map(|(l, side)| EyeTruth { side, pupil: l.pupil, iris: l.iris, occlusion: params.occlusion })
            .collect();
        (eyes, eye_mask)
    };

    Ok(SyntheticScene { image, eyes, eye_mask, iris_mask, sclera_mask, identity_seed, sample_seed, params: params.clone() })
}

/// Parameters of a multi-identity corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub identities: usize,
    pub samples: usize,
    pub noise_sigma: f64,
    /// Per-sample occlusion is drawn uniformly from `[0, occlusion_max]`.
    pub occlusion_max: f64,
    pub iris_radius: f64,
    pub seed: u64,
    /// Identity numbering offset, for building disjoint corpora.
    pub first_identity: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self { identities: 20, samples: 5, noise_sigma: 10.0, occlusion_max: 0.2, iris_radius: 60.0, seed: 7, first_identity: 0 }
    }
}

/// One corpus entry before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub subject_id: String,
    pub identity_seed: u64,
    pub sample_seed: u64,
    pub params: SceneParams,
}

/// Deterministic per-sample nuisances for every scene of the corpus.
pub fn corpus_specs(p: &CorpusParams) -> Result<Vec<SceneSpec>> {
    if p.identities == 0 || p.samples == 0 {
        return Err(DataError::InvalidParameter("identities and samples must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(p.identities * p.samples);
    for i in p.first_identity..p.first_identity + p.identities {
        let identity_seed = mix_seed(p.seed, i as u64);
        for s in 0..p.samples {
            let sample_seed = mix_seed(identity_seed, 1000 + s as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let params = SceneParams {
                iris_radius: (p.iris_radius * rng.random_range(0.96..=1.04)).clamp(20.0, 120.0),
                noise_sigma: p.noise_sigma,
                occlusion: if p.occlusion_max > 0.0 { rng.random_range(0.0..=p.occlusion_max) } else { 0.0 },
                pupil_ratio: rng.random_range(0.35..=0.45),
                gaze: (rng.random_range(-0.1..=0.1), rng.random_range(-0.05..=0.05)),
                head_offset: (rng.random_range(-0.03..=0.03), rng.random_range(-0.03..=0.03)),
                eyes_closed: false,
                no_eyes: false,
            };
            params.validate()?;
            out.push(SceneSpec {
                name: format!("id{i:03}_s{s:02}"),
                subject_id: format!("id{i:03}"),
                identity_seed,
                sample_seed,
                params,
            });
        }
    }
    Ok(out)
}

/// Renders every scene of the corpus, in order.
pub fn generate_corpus(p: &CorpusParams, mode: Execution) -> Result<Vec<(SceneSpec, SyntheticScene)>> {
    let specs = corpus_specs(p)?;
    par::map(mode, &specs, |s| generate_scene(s.identity_seed, s.sample_seed, &s.params).map(|sc| (s.clone(), sc)))
        .into_iter()
        .collect()
}

/// Iris radius to camera distance via `r = k/d`, used to fill the manifest's
/// distance column.
pub const SYNTH_RADIUS_DISTANCE_K: f64 = 1350.0;

/// Writes `<name>.pgm` with `_eyes`, `_iris` and `_sclera` mask sidecars,
/// `manifest.csv` (one right-eye row per scene) and `ground_truth.csv`.
pub fn write_corpus(dir: impl AsRef<Path>, p: &CorpusParams, mode: Execution) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let specs = corpus_specs(p)?;
    let written: Vec<Result<SyntheticScene>> = par::map(mode, &specs, |s| {
        let scene = generate_scene(s.identity_seed, s.sample_seed, &s.params)?;
        save_image(&scene.image, dir.join(format!("{}.pgm", s.name)))?;
        save_mask(&scene.eye_mask, dir.join(format!("{}_eyes.pgm", s.name)))?;
        save_mask(&scene.iris_mask, dir.join(format!("{}_iris.pgm", s.name)))?;
        save_mask(&scene.sclera_mask, dir.join(format!("{}_sclera.pgm", s.name)))?;
        Ok(scene)
    });
    let mut rows = Vec::with_capacity(specs.len());
    let mut gt = format!(
        "# seed={}\npath,eye_side,pupil_x,pupil_y,pupil_r,iris_x,iris_y,iris_r,occlusion,noise_sigma\n",
        p.seed
    );
    for (spec, scene) in specs.iter().zip(written) {
        let scene = scene?;
        let path = format!("{}.pgm", spec.name);
        for e in &scene.eyes {
            gt.push_str(&format!(
                "{path},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}\n",
                e.side, e.pupil.x, e.pupil.y, e.pupil.r, e.iris.x, e.iris.y, e.iris.r, e.occlusion, spec.params.noise_sigma
            ));
        }
        rows.push(ManifestRow {
            path,
            subject_id: spec.subject_id.clone(),
            eye_side: EyeSide::Right,
            distance_cm: Some((SYNTH_RADIUS_DISTANCE_K / spec.params.iris_radius * 100.0).round() / 100.0),
            session: Some(spec.name.rsplit('_').next().unwrap_or("").to_string()),
        });
    }
    let gt_path = dir.join("ground_truth.csv");
    fs::write(&gt_path, gt).map_err(|e| DataError::io(&gt_path, e))?;
    let manifest = Manifest::from_rows(rows, dir)?;
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Mask sidecar path: `<stem>_<suffix>.pgm` next to the image.
pub fn sidecar(image_path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image_path.with_file_name(format!("{stem}_{suffix}.pgm"))
}
