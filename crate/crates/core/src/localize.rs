//! Pupil and iris circles from the iris-segmentation mask.
//!
//! The mask is expected to be an annulus: iris foreground around a pupil
//! hole. Boundary pixels feed either an algebraic least-squares fit or a
//! Hough transform, chosen by how much of the iris the eyelids hide.

use std::fmt;

use thiserror::Error;

use crate::raster::{Connectivity, GrayImage, Mask};

/// `Dy/Dx` of the foreground extents below which the iris counts as occluded.
pub const DEFAULT_OCCLUSION_RATIO: f64 = 0.85;
/// Hough peaks with fewer votes than this fraction of the circumference are
/// low-confidence.
pub const HOUGH_CONFIDENCE_FRACTION: f64 = 0.3;
/// Residual (pixels) always tolerated by [`trimmed_lms_fit`] in the mixed rule.
pub const TRIM_BAND: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum LocalizeError {
    #[error("no foreground to localize")]
    NotFound,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid search range: {0}")]
    InvalidRange(String),
}

pub type Result<T, E = LocalizeError> = std::result::Result<T, E>;

/// A circle `(x, y, r)` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(x: f64, y: f64, r: f64) -> Self {
        Self { x, y, r }
    }

    pub fn center_distance(&self, other: &Circle) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Circle {
        Circle { x: self.x + dx, y: self.y + dy, r: self.r }
    }

    pub fn scaled(&self, s: f64) -> Circle {
        Circle { x: self.x * s, y: self.y * s, r: self.r * s }
    }
}

/// True when `pupil` is a strictly smaller circle centred inside `iris`.
pub fn valid_pair(pupil: &Circle, iris: &Circle) -> bool {
    pupil.r > 0.0 && pupil.r < iris.r && pupil.center_distance(iris) < iris.r
}

/// Boundary pixels of the largest foreground component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryPoints {
    /// Foreground pixels next to the enclosed hole (pupil side).
    pub inner: Vec<(f64, f64)>,
    /// Foreground pixels next to background connected to the border.
    pub outer: Vec<(f64, f64)>,
}

/// Splits the boundary of the largest 8-connected foreground component into
/// the part facing its largest enclosed hole and the part facing the outside.
///
/// Pixels on the raster edge are not boundary points: a region cut by the
/// image border says nothing about the circle there.
pub fn extract_boundaries(mask: &Mask) -> Result<BoundaryPoints> {
    let fg = mask.components(true, Connectivity::Eight);
    let main = fg.largest().ok_or(LocalizeError::NotFound)?;
    let (w, h) = (mask.width(), mask.height());
    let region = fg.mask_of(w, h, main);
    let bg = region.components(false, Connectivity::Four);
    let hole = bg
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.touches_border)
        .max_by(|a, b| a.1.area.cmp(&b.1.area).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1);
    let enclosed: Vec<bool> = bg.labels.iter().map(|&l| l != 0 && !bg.components[l as usize - 1].touches_border).collect();
    let mut pts = BoundaryPoints::default();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !region.get(x, y) {
                continue;
            }
            let (mut near_hole, mut near_out) = (false, false);
            for dy in [-1i64, 0, 1] {
                for dx in [-1i64, 0, 1] {
                    let j = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    let l = bg.labels[j];
                    if l == 0 {
                        continue;
                    }
                    if Some(l) == hole {
                        near_hole = true;
                    } else if !enclosed[j] {
                        near_out = true;
                    }
                }
            }
            if near_hole {
                pts.inner.push((x as f64, y as f64));
            }
            if near_out {
                pts.outer.push((x as f64, y as f64));
            }
        }
    }
    if pts.outer.is_empty() {
        return Err(LocalizeError::NotFound);
    }
    Ok(pts)
}

/// Algebraic (Kåsa) least-squares circle fit.
///
/// Minimises `Σ (x² + y² + D·x + E·y + F)²`; the centre is `(−D/2, −E/2)`
/// and `r = sqrt(D²/4 + E²/4 − F)`. Points are centred first so the normal
/// equations stay well conditioned far from the origin.
pub fn lms_circle_fit(points: &[(f64, f64)]) -> Result<Circle> {
    if points.len() < 3 {
        return Err(LocalizeError::Degenerate(format!("{} points, need 3", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz, mut sz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(px, py) in points {
        let (x, y) = (px - mx, py - my);
        let z = x * x + y * y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
        sz += z;
    }
    // With centred points Σx = Σy = 0, so F decouples from (D, E).
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).powi(2);
    if scale == 0.0 || det <= 1e-12 * scale {
        return Err(LocalizeError::Degenerate("points are collinear".into()));
    }
    let d = -(sxz * syy - syz * sxy) / det;
    let e = -(syz * sxx - sxz * sxy) / det;
    let f = -sz / n;
    let r2 = d * d / 4.0 + e * e / 4.0 - f;
    if r2 <= 0.0 {
        return Err(LocalizeError::Degenerate("negative squared radius".into()));
    }
    Ok(Circle { x: mx - d / 2.0, y: my - e / 2.0, r: r2.sqrt() })
}

/// Outcome of a Hough search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughCircle {
    pub circle: Circle,
    pub votes: u32,
    /// Votes reached [`HOUGH_CONFIDENCE_FRACTION`] of the circumference.
    pub confident: bool,
}

/// Circle Hough transform over an `(x, y, r)` grid with spacing `step`.
///
/// Each point votes once per radius for every grid centre at that distance.
/// Centres are searched over the points' bounding box grown by `r_max`.
/// Among equal vote counts the smallest `r`, then `y`, then `x` wins.
pub fn hough_circle(points: &[(f64, f64)], r_min: f64, r_max: f64, step: f64) -> Result<HoughCircle> {
    if points.is_empty() {
        return Err(LocalizeError::NotFound);
    }
    if !(r_min > 0.0 && r_min < r_max && step > 0.0) {
        return Err(LocalizeError::InvalidRange(format!("r in [{r_min}, {r_max}] with step {step}")));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let gx0 = ((x0 - r_max) / step).floor() * step;
    let gy0 = ((y0 - r_max) / step).floor() * step;
    let nx = ((x1 + r_max - gx0) / step).ceil() as usize + 1;
    let ny = ((y1 + r_max - gy0) / step).ceil() as usize + 1;
    let radii: Vec<f64> = (0..).map(|k| r_min + k as f64 * step).take_while(|&r| r <= r_max + 1e-9).collect();
    let plane = nx * ny;
    let mut acc = vec![0u32; plane * radii.len()];
    let mut stamp = vec![u32::MAX; plane];
    let mut voter = 0u32;
    for (ri, &r) in radii.iter().enumerate() {
        // Two samples per grid cell of arc length covers every cell the circle crosses.
        let samples = ((2.0 * std::f64::consts::PI * r / step) * 2.0).ceil().max(8.0) as usize;
        let dirs: Vec<(f64, f64)> = (0..samples)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let layer = &mut acc[ri * plane..(ri + 1) * plane];
        for &(px, py) in points {
            for &(dx, dy) in &dirs {
                let cx = ((px - dx - gx0) / step).round();
                let cy = ((py - dy - gy0) / step).round();
                if cx < 0.0 || cy < 0.0 || cx as usize >= nx || cy as usize >= ny {
                    continue;
                }
                let cell = cy as usize * nx + cx as usize;
                if stamp[cell] != voter {
                    stamp[cell] = voter;
                    layer[cell] += 1;
                }
            }
            voter = voter.wrapping_add(1);
        }
    }
    let (mut best, mut best_votes) = (0usize, 0u32);
    for (i, &v) in acc.iter().enumerate() {
        if v > best_votes {
            best_votes = v;
            best = i;
        }
    }
    let (ri, cell) = (best / plane, best % plane);
    let r = radii[ri];
    let circle = Circle { x: gx0 + (cell % nx) as f64 * step, y: gy0 + (cell / nx) as f64 * step, r };
    let confident = best_votes as f64 >= HOUGH_CONFIDENCE_FRACTION * 2.0 * std::f64::consts::PI * r / step;
    Ok(HoughCircle { circle, votes: best_votes, confident })
}

/// Refines a Hough circle by an LMS fit over the points within `band` pixels
/// of it; keeps the Hough answer when too few points agree.
pub fn refine_on_inliers(points: &[(f64, f64)], c: &Circle, band: f64) -> Circle {
    let inliers: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y)| (((x - c.x).powi(2) + (y - c.y).powi(2)).sqrt() - c.r).abs() <= band)
        .collect();
    match lms_circle_fit(&inliers) {
        Ok(fit) if fit.center_distance(c) <= band && (fit.r - c.r).abs() <= band => fit,
        _ => *c,
    }
}

/// LMS fit repeated on the points whose residual is within
/// `max(band, 2 × median residual)` until the inlier set stops shrinking.
///
/// Clean circles keep every point and give the plain LMS answer; a partial
/// chord (eyelid edge) is peeled off over a few rounds.
pub fn trimmed_lms_fit(points: &[(f64, f64)], band: f64) -> Result<Circle> {
    let mut c = lms_circle_fit(points)?;
    let mut kept = points.len();
    for _ in 0..20 {
        let res: Vec<f64> = points.iter().map(|&(x, y)| (((x - c.x).powi(2) + (y - c.y).powi(2)).sqrt() - c.r).abs()).collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let limit = band.max(2.0 * sorted[sorted.len() / 2]);
        let inliers: Vec<(f64, f64)> = points.iter().zip(&res).filter(|(_, &r)| r <= limit).map(|(p, _)| *p).collect();
        if inliers.len() < 3 || inliers.len() == kept {
            break;
        }
        kept = inliers.len();
        c = lms_circle_fit(&inliers)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lms,
    Hough,
    /// Pupil from dark interior pixels (mask had no hole).
    DarkHough,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lms => "lms",
            Method::Hough => "hough",
            Method::DarkHough => "dark_hough",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedConfig {
    pub occlusion_ratio: f64,
    pub hough_step: f64,
}

impl Default for MixedConfig {
    fn default() -> Self {
        Self { occlusion_ratio: DEFAULT_OCCLUSION_RATIO, hough_step: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub pupil: Circle,
    pub iris: Circle,
    pub iris_method: Method,
    pub pupil_method: Method,
    /// `Dy/Dx` of the iris foreground extents.
    pub aperture_ratio: f64,
    /// False when a Hough peak fell below the vote floor.
    pub confident: bool,
}

/// Mixed-rule localization.
///
/// An iris whose foreground extents have `Dy/Dx < occlusion_ratio` is taken
/// as eyelid-occluded and both circles come from Hough searches (iris radius
/// within `[0.85, 1.15]·Dx/2`, pupil within `[0.2, 0.8]·r_iris`), each
/// polished by an LMS fit over its inliers. Otherwise both come from
/// [`trimmed_lms_fit`], which equals plain LMS on an unbroken circle. When
/// the mask has no hole the pupil is searched among dark pixels of `image`
/// inside the iris; without an image that is `NotFound`.
pub fn localize_mixed(mask: &Mask, image: Option<&GrayImage>, cfg: &MixedConfig) -> Result<Localization> {
    let fg = mask.components(true, Connectivity::Eight);
    let main = fg.largest().ok_or(LocalizeError::NotFound)?;
    let (ex0, ey0, ex1, ey1) = fg.components[main].extents;
    let dx = (ex1 - ex0 + 1) as f64;
    let dy = (ey1 - ey0 + 1) as f64;
    let ratio = dy / dx;
    let occluded = ratio < cfg.occlusion_ratio;
    let pts = extract_boundaries(mask)?;
    let step = cfg.hough_step;

    let (iris, iris_method, mut confident) = if occluded {
        let h = hough_circle(&pts.outer, 0.85 * dx / 2.0, 1.15 * dx / 2.0, step)?;
        (refine_on_inliers(&pts.outer, &h.circle, 1.5 * step), Method::Hough, h.confident)
    } else {
        (trimmed_lms_fit(&pts.outer, TRIM_BAND)?, Method::Lms, true)
    };

    let (r_lo, r_hi) = (0.2 * iris.r, 0.8 * iris.r);
    let (pupil, pupil_method) = if pts.inner.len() >= 3 {
        if occluded {
            let h = hough_circle(&pts.inner, r_lo, r_hi, step)?;
            confident &= h.confident;
            (refine_on_inliers(&pts.inner, &h.circle, 1.5 * step), Method::Hough)
        } else {
            (trimmed_lms_fit(&pts.inner, TRIM_BAND)?, Method::Lms)
        }
    } else {
        let image = image.ok_or(LocalizeError::NotFound)?;
        let dark = dark_interior_boundary(image, mask, &iris);
        let h = hough_circle(&dark, r_lo, r_hi, step)?;
        confident &= h.confident;
        (refine_on_inliers(&dark, &h.circle, 1.5 * step), Method::DarkHough)
    };
    if !valid_pair(&pupil, &iris) {
        return Err(LocalizeError::Degenerate(format!(
            "pupil ({:.1}, {:.1}, {:.1}) not inside iris ({:.1}, {:.1}, {:.1})",
            pupil.x, pupil.y, pupil.r, iris.x, iris.y, iris.r
        )));
    }
    Ok(Localization { pupil, iris, iris_method, pupil_method, aperture_ratio: ratio, confident })
}

/// Boundary of the largest dark region inside `iris`: pixels darker than
/// the midpoint between the darkest decile and the median there.
fn dark_interior_boundary(image: &GrayImage, mask: &Mask, iris: &Circle) -> Vec<(f64, f64)> {
    let (w, h) = (image.width(), image.height());
    let inside = |x: usize, y: usize| (x as f64 - iris.x).powi(2) + (y as f64 - iris.y).powi(2) <= iris.r * iris.r;
    let mut vals: Vec<u8> = Vec::new();
    for y in 0..h.min(mask.height()) {
        for x in 0..w.min(mask.width()) {
            if inside(x, y) {
                vals.push(image.get(x, y));
            }
        }
    }
    if vals.is_empty() {
        return Vec::new();
    }
    vals.sort_unstable();
    let t = (vals[vals.len() / 10] as f64 + vals[vals.len() / 2] as f64) / 2.0;
    let dark = Mask::from_fn(w, h, |x, y| inside(x, y) && (image.get(x, y) as f64) < t);
    let comps = dark.components(true, Connectivity::Eight);
    let Some(main) = comps.largest() else { return Vec::new() };
    let region = comps.mask_of(w, h, main);
    let mut out = Vec::new();
    for (x, y) in region.points() {
        let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .iter()
            .any(|&(ox, oy)| !region.get_signed(x as i64 + ox, y as i64 + oy));
        if edge {
            out.push((x as f64, y as f64));
        }
    }
    out
}

/// Centroid-and-area estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterOfMass {
    pub circle: Circle,
    /// The mask holds more than one 8-connected component.
    pub low_confidence: bool,
}

/// Centre = foreground centroid, `r = sqrt(area / π)`.
pub fn localize_center_of_mass(mask: &Mask) -> Result<CenterOfMass> {
    let pts = mask.points();
    if pts.is_empty() {
        return Err(LocalizeError::NotFound);
    }
    let n = pts.len() as f64;
    let x = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let y = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let parts = mask.components(true, Connectivity::Eight).components.len();
    Ok(CenterOfMass { circle: Circle { x, y, r: (n / std::f64::consts::PI).sqrt() }, low_confidence: parts > 1 })
}
