//! 8-bit grayscale rasters and binary masks.
//!
//! Pixel `(x, y)` has its centre at integer coordinates; `x` grows to the
//! right and `y` grows downwards. Both types are row-major.

use std::fmt;

/// 8-bit single-channel image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    /// Wraps a row-major buffer. Returns `None` when the length is wrong.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a real-valued position. `None` outside the convex
    /// hull of the pixel centres.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if self.is_empty() || !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |xx, yy| self.get(xx, yy) as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Resamples to `width`×`height` with bilinear interpolation
    /// (half-pixel-centre convention, borders replicated).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let values = resize_bilinear_f32(&self.to_f32(), self.width, self.height, width, height);
        GrayImage {
            width,
            height,
            data: values.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        }
    }

    /// Bilinear resize straight to real values in `[0, 1]`, skipping the
    /// intermediate 8-bit rounding.
    pub fn resize_normalized(&self, width: usize, height: usize) -> Vec<f32> {
        let mut v = resize_bilinear_f32(&self.to_f32(), self.width, self.height, width, height);
        v.iter_mut().for_each(|x| *x /= 255.0);
        v
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Normalised Gaussian taps over `±ceil(3σ)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-half..=half).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

pub(crate) fn resize_bilinear_f32(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if dw == 0 || dh == 0 || sw == 0 || sh == 0 {
        return vec![0.0; dw * dh];
    }
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let axis = |d: usize, scale: f64, n: usize| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..dw).map(|x| axis(x, sx, sw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sy, sh);
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

/// Binary raster; `true` is foreground.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({}x{}, {} set)", self.width, self.height, self.count())
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Foreground where the image is at least `threshold`.
    pub fn from_image(image: &GrayImage, threshold: u8) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            bits: image.as_raw().iter().map(|&v| v >= threshold).collect(),
        }
    }

    /// 0 for background, 255 for foreground.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    /// Nearest-neighbour resample (half-pixel-centre convention).
    pub fn resize_nearest(&self, width: usize, height: usize) -> Mask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        if self.width == 0 || self.height == 0 {
            return Mask::new(width, height);
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let xs: Vec<usize> =
            (0..width).map(|x| (((x as f64 + 0.5) * sx) as usize).min(self.width - 1)).collect();
        Mask::from_fn(width, height, |x, y| {
            let yy = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(xs[x], yy)
        })
    }

    pub fn flip_horizontal(&self) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    /// Pixel-wise AND; `None` on dimension mismatch.
    pub fn and(&self, other: &Mask) -> Option<Mask> {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Option<Mask> {
        self.zip(other, |a, b| a || b)
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Option<Mask> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Some(Mask { width: self.width, height: self.height, bits })
    }

    /// Inclusive foreground extents `(min_x, min_y, max_x, max_y)`.
    pub fn extents(&self) -> Option<(usize, usize, usize, usize)> {
        let mut ext: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    ext = Some(match ext {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        ext
    }

    /// Foreground pixel coordinates.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let mut pts = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    pts.push((x, y));
                }
            }
        }
        pts
    }
}

/// Pixel adjacency used by component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        }
    }
}

/// Summary of one connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub area: usize,
    /// Mean pixel coordinate.
    pub centroid: (f64, f64),
    /// Inclusive `(min_x, min_y, max_x, max_y)`.
    pub extents: (usize, usize, usize, usize),
    /// True when any pixel lies on the raster border.
    pub touches_border: bool,
}

/// Connected-component labelling of the pixels equal to `value`.
#[derive(Debug, Clone)]
pub struct Components {
    /// 0 for pixels not equal to `value`, otherwise component index + 1.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

impl Components {
    /// Index of the component with the largest area; ties go to the first
    /// in raster order.
    pub fn largest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.components.iter().enumerate() {
            if best.is_none_or(|b| c.area > self.components[b].area) {
                best = Some(i);
            }
        }
        best
    }

    /// Mask holding only component `index`.
    pub fn mask_of(&self, width: usize, height: usize, index: usize) -> Mask {
        let target = index as u32 + 1;
        Mask { width, height, bits: self.labels.iter().map(|&l| l == target).collect() }
    }
}

impl Mask {
    /// Labels connected regions of pixels equal to `value`, numbered in
    /// raster order of their first pixel.
    pub fn components(&self, value: bool, connectivity: Connectivity) -> Components {
        let (w, h) = (self.width, self.height);
        let mut labels = vec![0u32; w * h];
        let mut components = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if self.bits[start] != value || labels[start] != 0 {
                continue;
            }
            let label = components.len() as u32 + 1;
            labels[start] = label;
            stack.push(start);
            let (mut area, mut sx, mut sy) = (0usize, 0f64, 0f64);
            let mut ext = (usize::MAX, usize::MAX, 0, 0);
            let mut border = false;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                area += 1;
                sx += x as f64;
                sy += y as f64;
                ext = (ext.0.min(x), ext.1.min(y), ext.2.max(x), ext.3.max(y));
                border |= x == 0 || y == 0 || x + 1 == w || y + 1 == h;
                for &(dx, dy) in connectivity.offsets() {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if self.bits[j] == value && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
            components.push(Component {
                area,
                centroid: (sx / area as f64, sy / area as f64),
                extents: ext,
                touches_border: border,
            });
        }
        Components { labels, components }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_resize_of_constant_is_constant() {
        let img = GrayImage::filled(37, 23, 91);
        let r = img.resize_bilinear(160, 96);
        assert!(r.as_raw().iter().all(|&v| v == 91));
        let n = img.resize_normalized(16, 8);
        assert!(n.iter().all(|&v| (v - 91.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn bilinear_sample_interpolates() {
        let img = GrayImage::from_fn(2, 2, |x, y| (x * 100 + y * 50) as u8);
        assert_eq!(img.sample_bilinear(0.5, 0.5), Some(75.0));
        assert_eq!(img.sample_bilinear(1.0, 1.0), Some(150.0));
        assert_eq!(img.sample_bilinear(1.01, 0.0), None);
        assert_eq!(img.sample_bilinear(-0.01, 0.0), None);
    }

    #[test]
    fn nearest_resize_roundtrip_on_integer_scale() {
        let m = Mask::from_fn(8, 6, |x, y| (x + y) % 3 == 0);
        let up = m.resize_nearest(16, 12);
        assert_eq!(up.resize_nearest(8, 6), m);
        assert_eq!(up.count(), 4 * m.count());
    }

    #[test]
    fn mask_extents_and_logic() {
        let a = Mask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && y == 2);
        assert_eq!(a.extents(), Some((1, 2, 3, 2)));
        let b = Mask::from_fn(5, 5, |x, _| x == 3);
        assert_eq!(a.and(&b).unwrap().count(), 1);
        assert_eq!(a.or(&b).unwrap().count(), 7);
        assert!(a.and(&Mask::new(4, 5)).is_none());
        assert_eq!(Mask::new(3, 3).extents(), None);
    }

    #[test]
    fn component_labelling_respects_connectivity() {
        // Two diagonal pixels: one component under 8-adjacency, two under 4.
        let m = Mask::from_fn(4, 4, |x, y| (x, y) == (1, 1) || (x, y) == (2, 2));
        assert_eq!(m.components(true, Connectivity::Eight).components.len(), 1);
        let c4 = m.components(true, Connectivity::Four);
        assert_eq!(c4.components.len(), 2);
        assert_eq!(c4.components[0].centroid, (1.0, 1.0));
        let bg = m.components(false, Connectivity::Four);
        assert_eq!(bg.components.len(), 1);
        assert!(bg.components[0].touches_border);
        assert_eq!(bg.largest(), Some(0));
    }
}
