//! Rubber-sheet normalization, binary texture encoding and masked Hamming
//! distance.
//!
//! Angles follow the usual mathematical orientation with the image y axis
//! pointing down: angle `θ` maps to the point `(x + r·cos θ, y − r·sin θ)`,
//! so `θ = π/2` is straight up.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::EyeSide;
use crate::localize::{valid_pair, Circle};
use crate::raster::{GrayImage, Mask};

pub const SHEET_ROWS: usize = 64;
pub const SHEET_COLS: usize = 512;
pub const FILTER_COUNT: usize = 7;
pub const FILTER_SIZE: usize = 15;
pub const FILTER_MAGIC: &[u8; 4] = b"BSF1";
pub const TEMPLATE_MAGIC: &[u8; 4] = b"IRT1";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid circle pair: {0}")]
    InvalidCircles(String),
    #[error("not a filter file")]
    NotFilterFile,
    #[error("expected {FILTER_COUNT} filters, found {0}")]
    FilterCount(usize),
    #[error("expected {FILTER_SIZE}×{FILTER_SIZE} kernels, found {0}×{1}")]
    FilterSize(usize, usize),
    #[error("not a template file")]
    NotTemplateFile,
    #[error("template dimensions {0}×{1}×{2} differ from {FILTER_COUNT}×{SHEET_ROWS}×{SHEET_COLS}")]
    TemplateShape(usize, usize, usize),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("malformed {0}")]
    Malformed(String),
    #[error("template dimensions differ")]
    DimensionMismatch,
    #[error("unusable template: joint mask has {valid} valid cells, need {required}")]
    UnusableTemplate { valid: usize, required: usize },
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

fn io_err(path: &Path, source: std::io::Error) -> CodecError {
    CodecError::Io { path: path.to_path_buf(), source }
}

/// Polar unwrapping of the iris annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct RubberSheet {
    /// Row-major `SHEET_ROWS × SHEET_COLS`, values in `[0, 1]`.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RubberSheet {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * SHEET_COLS + j]
    }

    /// Cells stay valid only where `mask_bits` is also valid.
    pub fn restrict(mut self, mask_bits: &[bool]) -> Self {
        self.valid.iter_mut().zip(mask_bits).for_each(|(v, &m)| *v &= m);
        self
    }

    /// Shifts every row by `k` columns: output column `j` is input column
    /// `j − k` (mod cols).
    pub fn rotate(&self, k: i64) -> Self {
        let mut out = self.clone();
        for i in 0..SHEET_ROWS {
            for j in 0..SHEET_COLS {
                let src = (j as i64 - k).rem_euclid(SHEET_COLS as i64) as usize;
                out.values[i * SHEET_COLS + j] = self.values[i * SHEET_COLS + src];
                out.valid[i * SHEET_COLS + j] = self.valid[i * SHEET_COLS + src];
            }
        }
        out
    }

    /// Sheet as an 8-bit image (rows = radius, columns = angle).
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(SHEET_COLS, SHEET_ROWS, |x, y| (self.at(y, x) * 255.0).round().clamp(0.0, 255.0) as u8)
    }
}

/// Sampling position of sheet cell `(i, j)`.
pub fn sheet_point(pupil: &Circle, iris: &Circle, i: usize, j: usize) -> (f64, f64) {
    let theta = 2.0 * PI * j as f64 / SHEET_COLS as f64;
    let t = (i as f64 + 0.5) / SHEET_ROWS as f64;
    let (s, c) = theta.sin_cos();
    let (px, py) = (pupil.x + pupil.r * c, pupil.y - pupil.r * s);
    let (ix, iy) = (iris.x + iris.r * c, iris.y - iris.r * s);
    ((1.0 - t) * px + t * ix, (1.0 - t) * py + t * iy)
}

fn check_circles(pupil: &Circle, iris: &Circle) -> Result<()> {
    if !valid_pair(pupil, iris) {
        return Err(CodecError::InvalidCircles(format!(
            "pupil ({:.1}, {:.1}, {:.1}) must lie inside iris ({:.1}, {:.1}, {:.1})",
            pupil.x, pupil.y, pupil.r, iris.x, iris.y, iris.r
        )));
    }
    Ok(())
}

/// Homogeneous rubber sheet: cell `(i, j)` samples the point a fraction
/// `(i + 0.5)/64` of the way from the pupil circle to the iris circle along
/// angle `2πj/512`, with bilinear interpolation. Cells outside the image
/// are invalid (value 0).
pub fn normalize(image: &GrayImage, pupil: &Circle, iris: &Circle) -> Result<RubberSheet> {
    check_circles(pupil, iris)?;
    let n = SHEET_ROWS * SHEET_COLS;
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..SHEET_ROWS {
        for j in 0..SHEET_COLS {
            let (x, y) = sheet_point(pupil, iris, i, j);
            match image.sample_bilinear(x, y) {
                Some(v) => {
                    values.push(v / 255.0);
                    valid.push(true);
                }
                None => {
                    values.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    Ok(RubberSheet { values, valid })
}

/// Same geometry as [`normalize`]; a cell is valid iff the nearest mask
/// pixel is inside the mask and foreground.
pub fn normalize_mask(mask: &Mask, pupil: &Circle, iris: &Circle) -> Result<Vec<bool>> {
    check_circles(pupil, iris)?;
    let mut out = Vec::with_capacity(SHEET_ROWS * SHEET_COLS);
    for i in 0..SHEET_ROWS {
        for j in 0..SHEET_COLS {
            let (x, y) = sheet_point(pupil, iris, i, j);
            out.push(mask.get_signed(x.round() as i64, y.round() as i64));
        }
    }
    Ok(out)
}

/// Seven zero-mean 15×15 kernels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernels: Vec<Vec<f64>>,
}

impl FilterBank {
    /// Takes 7 kernels of 225 values; each is re-centred to zero mean.
    pub fn new(kernels: Vec<Vec<f64>>) -> Result<Self> {
        if kernels.len() != FILTER_COUNT {
            return Err(CodecError::FilterCount(kernels.len()));
        }
        let mut out = Vec::with_capacity(FILTER_COUNT);
        for k in kernels {
            if k.len() != FILTER_SIZE * FILTER_SIZE {
                return Err(CodecError::Malformed(format!("kernel with {} values", k.len())));
            }
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            out.push(k.iter().map(|v| v - mean).collect());
        }
        Ok(Self { kernels: out })
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = FILTER_MAGIC.to_vec();
        for v in [FILTER_COUNT, FILTER_SIZE, FILTER_SIZE] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for k in &self.kernels {
            for &v in k {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FILTER_MAGIC {
            return Err(CodecError::NotFilterFile);
        }
        if bytes.len() < 16 {
            return Err(CodecError::Truncated("filter header"));
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let (n, h, w) = (u(4), u(8), u(12));
        if n != FILTER_COUNT {
            return Err(CodecError::FilterCount(n));
        }
        if h != FILTER_SIZE || w != FILTER_SIZE {
            return Err(CodecError::FilterSize(h, w));
        }
        let body = &bytes[16..];
        let need = n * h * w * 4;
        if body.len() < need {
            return Err(CodecError::Truncated("filter values"));
        }
        if body.len() > need {
            return Err(CodecError::Malformed(format!("{} trailing bytes in filter file", body.len() - need)));
        }
        let vals: Vec<f64> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::Malformed("non-finite filter value".into()));
        }
        Self::new(vals.chunks(h * w).map(<[f64]>::to_vec).collect())
    }
}

pub fn load_filters(path: impl AsRef<Path>) -> Result<FilterBank> {
    let path = path.as_ref();
    FilterBank::from_bytes(&fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn save_filters(bank: &FilterBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bank.to_bytes()).map_err(|e| io_err(path, e))
}

/// Seeded stand-in bank: white noise smoothed by a Gaussian (σ = 1.5),
/// then made zero-mean and unit-norm.
pub fn generate_fallback_filters(seed: u64) -> FilterBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = FILTER_SIZE as i64;
    let g: Vec<f64> = (-4..=4).map(|i: i64| (-((i * i) as f64) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let kernels = (0..FILTER_COUNT)
        .map(|_| {
            let white: Vec<f64> = (0..n * n).map(|_| normal.sample(&mut rng)).collect();
            let mut k = vec![0.0; (n * n) as usize];
            for y in 0..n {
                for x in 0..n {
                    let mut acc = 0.0;
                    for (dy, gy) in (-4..=4).zip(&g) {
                        for (dx, gx) in (-4..=4).zip(&g) {
                            let (sx, sy) = (x + dx, y + dy);
                            if (0..n).contains(&sx) && (0..n).contains(&sy) {
                                acc += gx * gy * white[(sy * n + sx) as usize];
                            }
                        }
                    }
                    k[(y * n + x) as usize] = acc;
                }
            }
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            k.iter_mut().for_each(|v| *v /= norm);
            k
        })
        .collect();
    FilterBank::new(kernels).expect("seven kernels of the right size")
}

/// Packed bit planes with a shared validity mask. Bit `(p, i, j)` lives in
/// word `(p·rows + i)·words_per_row + j/64` at position `j % 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCode {
    planes: usize,
    rows: usize,
    cols: usize,
    words_per_row: usize,
    code: Vec<u64>,
    mask: Vec<u64>,
}

impl BitCode {
    pub fn new(planes: usize, rows: usize, cols: usize) -> Self {
        let wpr = cols.div_ceil(64);
        Self { planes, rows, cols, words_per_row: wpr, code: vec![0; planes * rows * wpr], mask: vec![0; rows * wpr] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.planes, self.rows, self.cols)
    }

    pub fn code_bit(&self, p: usize, i: usize, j: usize) -> bool {
        self.code[(p * self.rows + i) * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set_code_bit(&mut self, p: usize, i: usize, j: usize, v: bool) {
        let w = &mut self.code[(p * self.rows + i) * self.words_per_row + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn mask_bit(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set_mask_bit(&mut self, i: usize, j: usize, v: bool) {
        let w = &mut self.mask[i * self.words_per_row + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Every bit flipped, mask unchanged.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for p in 0..self.planes {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    out.set_code_bit(p, i, j, !self.code_bit(p, i, j));
                }
            }
        }
        out
    }

    /// Circular column shift: output column `j` takes input column `j − k`.
    pub fn rotate(&self, k: i64) -> Self {
        let s = k.rem_euclid(self.cols as i64) as usize;
        if s == 0 {
            return self.clone();
        }
        let mut out = self.clone();
        if self.cols.is_multiple_of(64) {
            let n = self.words_per_row;
            let (q, r) = (s / 64, s % 64);
            let rot = |src: &[u64], dst: &mut [u64]| {
                for w in 0..n {
                    let hi = src[(w + n - q) % n];
                    let lo = src[(w + 2 * n - q - 1) % n];
                    dst[w] = if r == 0 { hi } else { (hi << r) | (lo >> (64 - r)) };
                }
            };
            for (src, dst) in self.code.chunks(n).zip(out.code.chunks_mut(n)) {
                rot(src, dst);
            }
            for (src, dst) in self.mask.chunks(n).zip(out.mask.chunks_mut(n)) {
                rot(src, dst);
            }
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let src = (j + self.cols - s) % self.cols;
                    out.set_mask_bit(i, j, self.mask_bit(i, src));
                    for p in 0..self.planes {
                        out.set_code_bit(p, i, j, self.code_bit(p, i, src));
                    }
                }
            }
        }
        out
    }

    /// `(disagreeing bits over the joint mask, joint mask cells)`.
    pub fn masked_disagreement(&self, other: &BitCode) -> Result<(usize, usize)> {
        if self.dims() != other.dims() {
            return Err(CodecError::DimensionMismatch);
        }
        let joint: Vec<u64> = self.mask.iter().zip(&other.mask).map(|(a, b)| a & b).collect();
        let valid = joint.iter().map(|w| w.count_ones() as usize).sum();
        let per_plane = joint.len();
        let mut diff = 0usize;
        for (k, (a, b)) in self.code.iter().zip(&other.code).enumerate() {
            diff += ((a ^ b) & joint[k % per_plane]).count_ones() as usize;
        }
        Ok((diff, valid))
    }

    /// Masked Hamming distance, minimised over circular shifts of `other`
    /// in `[−max_shift, max_shift]`. A shift whose joint mask covers less
    /// than 1 % of the grid does not count; if none qualifies the pair is
    /// unusable.
    pub fn hamming_distance(&self, other: &BitCode, max_shift: usize) -> Result<f64> {
        let required = (self.rows * self.cols).div_ceil(100);
        let mut best: Option<f64> = None;
        let mut best_valid = 0;
        for k in -(max_shift as i64)..=max_shift as i64 {
            let shifted;
            let b = if k == 0 {
                other
            } else {
                shifted = other.rotate(k);
                &shifted
            };
            let (diff, valid) = self.masked_disagreement(b)?;
            best_valid = best_valid.max(valid);
            if valid < required {
                continue;
            }
            let hd = diff as f64 / (self.planes * valid) as f64;
            if best.is_none_or(|h| hd < h) {
                best = Some(hd);
            }
        }
        best.ok_or(CodecError::UnusableTemplate { valid: best_valid, required })
    }

    /// Bits MSB-first, 8 per byte: all code planes, then the mask.
    fn write_packed(&self, out: &mut Vec<u8>) {
        let mut byte = 0u8;
        let mut n = 0;
        let mut push = |bit: bool, out: &mut Vec<u8>| {
            byte = (byte << 1) | bit as u8;
            n += 1;
            if n == 8 {
                out.push(byte);
                byte = 0;
                n = 0;
            }
        };
        for p in 0..self.planes {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    push(self.code_bit(p, i, j), out);
                }
            }
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                push(self.mask_bit(i, j), out);
            }
        }
        if n > 0 {
            out.push(byte << (8 - n));
        }
    }

    fn read_packed(planes: usize, rows: usize, cols: usize, bytes: &[u8]) -> Self {
        let mut out = Self::new(planes, rows, cols);
        let bit = |k: usize| bytes[k / 8] >> (7 - k % 8) & 1 == 1;
        let mut k = 0;
        for p in 0..planes {
            for i in 0..rows {
                for j in 0..cols {
                    out.set_code_bit(p, i, j, bit(k));
                    k += 1;
                }
            }
        }
        for i in 0..rows {
            for j in 0..cols {
                out.set_mask_bit(i, j, bit(k));
                k += 1;
            }
        }
        out
    }
}

/// A binary iris code: 7 planes of 64×512 bits and one shared mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisTemplate {
    pub bits: BitCode,
    pub subject_id: String,
    pub eye_side: EyeSide,
}

impl IrisTemplate {
    pub fn hamming_distance(&self, other: &IrisTemplate, max_shift: usize) -> Result<f64> {
        self.bits.hamming_distance(&other.bits, max_shift)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (p, r, c) = self.bits.dims();
        let mut out = TEMPLATE_MAGIC.to_vec();
        for v in [p, r, c] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        self.bits.write_packed(&mut out);
        out.extend_from_slice(&(self.subject_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.subject_id.as_bytes());
        out.push(self.eye_side.index() as u8);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TEMPLATE_MAGIC {
            return Err(CodecError::NotTemplateFile);
        }
        if bytes.len() < 10 {
            return Err(CodecError::Truncated("template header"));
        }
        let u = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
        let (p, r, c) = (u(4), u(6), u(8));
        if (p, r, c) != (FILTER_COUNT, SHEET_ROWS, SHEET_COLS) {
            return Err(CodecError::TemplateShape(p, r, c));
        }
        let nbytes = ((p + 1) * r * c).div_ceil(8);
        let body = &bytes[10..];
        if body.len() < nbytes + 2 {
            return Err(CodecError::Truncated("template bits"));
        }
        let bits = BitCode::read_packed(p, r, c, &body[..nbytes]);
        let rest = &body[nbytes..];
        let id_len = u16::from_le_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + id_len + 1 {
            return Err(CodecError::Truncated("template metadata"));
        }
        if rest.len() > 2 + id_len + 1 {
            return Err(CodecError::Malformed("trailing bytes after template".into()));
        }
        let subject_id = std::str::from_utf8(&rest[2..2 + id_len])
            .map_err(|_| CodecError::Malformed("subject id is not UTF-8".into()))?
            .to_string();
        let eye_side = match rest[2 + id_len] {
            0 => EyeSide::Left,
            1 => EyeSide::Right,
            v => return Err(CodecError::Malformed(format!("eye side byte {v}"))),
        };
        Ok(Self { bits, subject_id, eye_side })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| io_err(path, e))?)
    }
}

/// Raw filter responses, one `SHEET_ROWS × SHEET_COLS` plane per kernel.
///
/// Correlation with the kernel centred on each cell; columns wrap around,
/// rows outside the sheet repeat the nearest edge row.
pub fn filter_responses(sheet: &RubberSheet, bank: &FilterBank) -> Vec<Vec<f64>> {
    let half = (FILTER_SIZE / 2) as i64;
    // Row-padded copy so the inner loop needs no clamping.
    let padded_rows = SHEET_ROWS + 2 * half as usize;
    let padded_cols = SHEET_COLS + 2 * half as usize;
    // Kernels are zero-mean, so removing an offset leaves responses unchanged
    // and makes a constant sheet give exact zeros.
    let offset = sheet.values[0];
    let mut pad = vec![0.0; padded_rows * padded_cols];
    for pi in 0..padded_rows {
        let si = (pi as i64 - half).clamp(0, SHEET_ROWS as i64 - 1) as usize;
        for pj in 0..padded_cols {
            let sj = (pj as i64 - half).rem_euclid(SHEET_COLS as i64) as usize;
            pad[pi * padded_cols + pj] = sheet.values[si * SHEET_COLS + sj] - offset;
        }
    }
    bank.kernels()
        .iter()
        .map(|k| {
            let mut out = vec![0.0; SHEET_ROWS * SHEET_COLS];
            for a in 0..FILTER_SIZE {
                for b in 0..FILTER_SIZE {
                    let w = k[a * FILTER_SIZE + b];
                    for i in 0..SHEET_ROWS {
                        let src = &pad[(i + a) * padded_cols + b..(i + a) * padded_cols + b + SHEET_COLS];
                        let dst = &mut out[i * SHEET_COLS..(i + 1) * SHEET_COLS];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += w * s);
                    }
                }
            }
            out
        })
        .collect()
}

/// Validity after erosion by the kernel footprint, with the same padding
/// rules as [`filter_responses`].
pub fn erode_mask(valid: &[bool]) -> Vec<bool> {
    let half = (FILTER_SIZE / 2) as i64;
    let mut horiz = vec![false; valid.len()];
    for i in 0..SHEET_ROWS {
        for j in 0..SHEET_COLS {
            horiz[i * SHEET_COLS + j] = (-half..=half)
                .all(|d| valid[i * SHEET_COLS + (j as i64 + d).rem_euclid(SHEET_COLS as i64) as usize]);
        }
    }
    let mut out = vec![false; valid.len()];
    for i in 0..SHEET_ROWS {
        for j in 0..SHEET_COLS {
            out[i * SHEET_COLS + j] = (-half..=half)
                .all(|d| horiz[(i as i64 + d).clamp(0, SHEET_ROWS as i64 - 1) as usize * SHEET_COLS + j]);
        }
    }
    out
}

/// Binary code: bit = response > 0; mask = eroded sheet validity.
pub fn encode(sheet: &RubberSheet, bank: &FilterBank, subject_id: &str, eye_side: EyeSide) -> IrisTemplate {
    let mut bits = BitCode::new(FILTER_COUNT, SHEET_ROWS, SHEET_COLS);
    for (p, resp) in filter_responses(sheet, bank).iter().enumerate() {
        for i in 0..SHEET_ROWS {
            for j in 0..SHEET_COLS {
                if resp[i * SHEET_COLS + j] > 0.0 {
                    bits.set_code_bit(p, i, j, true);
                }
            }
        }
    }
    for (k, v) in erode_mask(&sheet.valid).into_iter().enumerate() {
        if v {
            bits.set_mask_bit(k / SHEET_COLS, k % SHEET_COLS, true);
        }
    }
    IrisTemplate { bits, subject_id: subject_id.to_string(), eye_side }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(code: &[bool], mask: &[bool]) -> BitCode {
        let mut b = BitCode::new(1, 1, code.len());
        for (j, (&c, &m)) in code.iter().zip(mask).enumerate() {
            b.set_code_bit(0, 0, j, c);
            b.set_mask_bit(0, j, m);
        }
        b
    }

    #[test]
    fn toy_hamming_examples() {
        let full = [true; 4];
        let a = toy(&[true, false, true, false], &full);
        let b = toy(&[true, false, false, true], &full);
        assert_eq!(a.hamming_distance(&b, 0).unwrap(), 0.5);
        let half = [true, true, false, false];
        let a = toy(&[true, false, true, false], &half);
        let b = toy(&[true, false, false, true], &half);
        assert_eq!(a.hamming_distance(&b, 0).unwrap(), 0.0);
    }

    #[test]
    fn word_rotation_matches_bitwise() {
        let mut a = BitCode::new(2, 3, 128);
        for p in 0..2 {
            for i in 0..3 {
                for j in 0..128 {
                    a.set_code_bit(p, i, j, (j * 7 + i * 3 + p) % 5 == 0);
                    a.set_mask_bit(i, j, j % 3 != 0);
                }
            }
        }
        for k in [-130i64, -65, -1, 1, 63, 64, 65, 127] {
            let r = a.rotate(k);
            for i in 0..3 {
                for j in 0..128 {
                    let src = (j as i64 - k).rem_euclid(128) as usize;
                    assert_eq!(r.code_bit(1, i, j), a.code_bit(1, i, src));
                    assert_eq!(r.mask_bit(i, j), a.mask_bit(i, src));
                }
            }
        }
    }

    #[test]
    fn constant_sheet_encodes_to_zero_bits() {
        let sheet = RubberSheet { values: vec![0.5; SHEET_ROWS * SHEET_COLS], valid: vec![true; SHEET_ROWS * SHEET_COLS] };
        let t = encode(&sheet, &generate_fallback_filters(42), "s", EyeSide::Left);
        for p in 0..FILTER_COUNT {
            for i in 0..SHEET_ROWS {
                for j in 0..SHEET_COLS {
                    assert!(!t.bits.code_bit(p, i, j));
                }
            }
        }
        assert_eq!(t.bits.mask_count(), SHEET_ROWS * SHEET_COLS);
    }

    #[test]
    fn fallback_bank_properties() {
        let a = generate_fallback_filters(42);
        assert_eq!(a, generate_fallback_filters(42));
        for k in a.kernels() {
            assert!(k.iter().sum::<f64>().abs() < 1e-9);
            assert!((k.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn filter_file_diagnostics() {
        let bank = generate_fallback_filters(1);
        let bytes = bank.to_bytes();
        let back = FilterBank::from_bytes(&bytes).unwrap();
        for (a, b) in bank.kernels().iter().zip(back.kernels()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        let mut six = bytes.clone();
        six[4..8].copy_from_slice(&6u32.to_le_bytes());
        assert_eq!(FilterBank::from_bytes(&six).unwrap_err().to_string(), "expected 7 filters, found 6");
        let mut size = bytes.clone();
        size[8..12].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(FilterBank::from_bytes(&size), Err(CodecError::FilterSize(9, 15))));
        assert!(matches!(FilterBank::from_bytes(b"XXXX"), Err(CodecError::NotFilterFile)));
    }

    #[test]
    fn invalid_circles_rejected() {
        let img = GrayImage::filled(100, 100, 10);
        let err = normalize(&img, &Circle::new(50.0, 50.0, 30.0), &Circle::new(50.0, 50.0, 20.0));
        assert!(matches!(err, Err(CodecError::InvalidCircles(_))));
    }
}
