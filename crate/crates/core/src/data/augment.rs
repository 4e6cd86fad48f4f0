use crate::raster::{GrayImage, Mask};

/// Rotates image (bilinear) and mask (nearest) by `angle_deg` about the
/// raster centre, counter-clockwise as displayed. The canvas keeps its size;
/// uncovered corners are zero / background.
pub fn augment_rotate(image: &GrayImage, mask: &Mask, angle_deg: f64) -> (GrayImage, Mask) {
    if angle_deg == 0.0 {
        return (image.clone(), mask.clone());
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    // Inverse map: output pixel → source coordinates. With y pointing down,
    // a visually counter-clockwise turn is a clockwise one in (x, y).
    let source = |w: usize, h: usize, x: usize, y: usize| {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
    };
    let (w, h) = (image.width(), image.height());
    let img = GrayImage::from_fn(w, h, |x, y| {
        let (sx, sy) = source(w, h, x, y);
        image.sample_bilinear(sx, sy).map_or(0, |v| v.round().clamp(0.0, 255.0) as u8)
    });
    let (mw, mh) = (mask.width(), mask.height());
    let m = Mask::from_fn(mw, mh, |x, y| {
        let (sx, sy) = source(mw, mh, x, y);
        mask.get_signed(sx.round() as i64, sy.round() as i64)
    });
    (img, m)
}
