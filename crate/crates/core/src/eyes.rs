//! From the eye-finding mask to two periocular crops.
//!
//! The two largest blobs of the mask are taken as the eyes; their centroid
//! distance `d` sets a `0.44·d × 0.33·d` box around each centroid.

use thiserror::Error;

use crate::data::EyeSide;
use crate::raster::{Connectivity, GrayImage, Mask};

/// Box width as a fraction of the inter-centroid distance.
pub const BOX_WIDTH_FACTOR: f64 = 0.44;
/// Box height as a fraction of the inter-centroid distance.
pub const BOX_HEIGHT_FACTOR: f64 = 0.33;
/// Ground-truth eye disc radius as a fraction of the inter-pupil distance.
pub const GT_RADIUS_FACTOR: f64 = 0.2;
/// Components smaller than this fraction of the image are ignored.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.0005;
/// Centroid separations below this are not a pair of eyes.
pub const MIN_EYE_DISTANCE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum EyeError {
    #[error("expected two eye blobs, found {found}")]
    NotFound { found: usize },
    #[error("eye centroids {0:.1} px apart, below the {MIN_EYE_DISTANCE} px floor")]
    ImplausibleDistance(f64),
    #[error("eye box does not overlap the image")]
    NoOverlap,
    #[error("eye centres coincide")]
    CoincidentCenters,
}

pub type Result<T, E = EyeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeBlob {
    pub centroid: (f64, f64),
    pub area: usize,
    /// Positional: `Left` has the smaller x.
    pub side: EyeSide,
}

/// Crop window around one eye.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeBox {
    pub center: (f64, f64),
    pub width: usize,
    pub height: usize,
    /// Top-left corner; may be negative when clipped.
    pub x0: i64,
    pub y0: i64,
    /// The window extends past the image border.
    pub clipped: bool,
    pub side: EyeSide,
}

/// Two largest 8-connected blobs at least `min_area_fraction` of the image,
/// ordered left to right.
pub fn find_eye_blobs(mask: &Mask, min_area_fraction: f64) -> Result<[EyeBlob; 2]> {
    let min_area = min_area_fraction * (mask.width() * mask.height()) as f64;
    let comps = mask.components(true, Connectivity::Eight);
    let mut keep: Vec<_> = comps.components.iter().filter(|c| c.area as f64 >= min_area).collect();
    if keep.len() < 2 {
        return Err(EyeError::NotFound { found: keep.len() });
    }
    // Stable sort keeps raster order among equal areas.
    keep.sort_by_key(|c| std::cmp::Reverse(c.area));
    let (mut a, mut b) = (keep[0], keep[1]);
    if b.centroid.0 < a.centroid.0 {
        std::mem::swap(&mut a, &mut b);
    }
    Ok([
        EyeBlob { centroid: a.centroid, area: a.area, side: EyeSide::Left },
        EyeBlob { centroid: b.centroid, area: b.area, side: EyeSide::Right },
    ])
}

pub fn centroid_distance(blobs: &[EyeBlob; 2]) -> f64 {
    let (a, b) = (blobs[0].centroid, blobs[1].centroid);
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Boxes of `round(0.44·d) × round(0.33·d)` centred on each centroid.
pub fn eye_boxes(blobs: &[EyeBlob; 2], image_width: usize, image_height: usize) -> Result<[EyeBox; 2]> {
    let d = centroid_distance(blobs);
    if d < MIN_EYE_DISTANCE {
        return Err(EyeError::ImplausibleDistance(d));
    }
    let width = (BOX_WIDTH_FACTOR * d).round() as usize;
    let height = (BOX_HEIGHT_FACTOR * d).round() as usize;
    let make = |b: &EyeBlob| {
        let x0 = (b.centroid.0 - width as f64 / 2.0).round() as i64;
        let y0 = (b.centroid.1 - height as f64 / 2.0).round() as i64;
        let clipped =
            x0 < 0 || y0 < 0 || x0 + width as i64 > image_width as i64 || y0 + height as i64 > image_height as i64;
        EyeBox { center: b.centroid, width, height, x0, y0, clipped, side: b.side }
    };
    Ok([make(&blobs[0]), make(&blobs[1])])
}

fn overlaps(b: &EyeBox, w: usize, h: usize) -> bool {
    b.x0 < w as i64 && b.y0 < h as i64 && b.x0 + b.width as i64 > 0 && b.y0 + b.height as i64 > 0
}

/// Pixel-exact window; parts outside the image are zero.
pub fn crop_periocular(image: &GrayImage, b: &EyeBox) -> Result<GrayImage> {
    if !overlaps(b, image.width(), image.height()) {
        return Err(EyeError::NoOverlap);
    }
    Ok(GrayImage::from_fn(b.width, b.height, |x, y| {
        let (sx, sy) = (b.x0 + x as i64, b.y0 + y as i64);
        if sx >= 0 && sy >= 0 && (sx as usize) < image.width() && (sy as usize) < image.height() {
            image.get(sx as usize, sy as usize)
        } else {
            0
        }
    }))
}

/// [`crop_periocular`] for masks; outside pixels are background.
pub fn crop_mask(mask: &Mask, b: &EyeBox) -> Result<Mask> {
    if !overlaps(b, mask.width(), mask.height()) {
        return Err(EyeError::NoOverlap);
    }
    Ok(Mask::from_fn(b.width, b.height, |x, y| mask.get_signed(b.x0 + x as i64, b.y0 + y as i64)))
}

/// Ground truth for eye finding: two filled discs of radius `0.2·d` at the
/// pupil centres, `d` being their distance.
pub fn make_gt_eye_circles(width: usize, height: usize, centers: [(f64, f64); 2]) -> Result<Mask> {
    let d = ((centers[0].0 - centers[1].0).powi(2) + (centers[0].1 - centers[1].1).powi(2)).sqrt();
    if d == 0.0 {
        return Err(EyeError::CoincidentCenters);
    }
    let r2 = (GT_RADIUS_FACTOR * d).powi(2);
    Ok(Mask::from_fn(width, height, |x, y| {
        centers.iter().any(|&(cx, cy)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r2)
    }))
}
