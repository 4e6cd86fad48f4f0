//! Dense rank-4 tensors, convolution kernels and reverse-mode gradients.
//!
//! Tensors are laid out as `(batch, channel, height, width)`, row-major.
//! Everything here is generic over [`Real`] so that the same code runs in
//! 32-bit for inference/training and in 64-bit for gradient checking.

mod io;
pub mod ops;
mod optim;
mod params;
mod tape;

use std::fmt::{self, Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHT_MAGIC};
pub use optim::{sgd_step, Adam, Sgd};
pub use params::{LayerKind, LayerSpec, ParamEntry, ParamSet};
pub use tape::{GradientTape, Gradients, Var};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch { op: &'static str, left: String, right: String },
    #[error("invalid tensor: {0}")]
    Invalid(String),
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("not a weight file")]
    NotWeightFile,
    #[error("weight file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("shape mismatch at layer {name}: file {file:?}, model {model:?}")]
    LayerShape { name: String, file: Vec<usize>, model: Vec<usize> },
    #[error("layer {0} missing from weight file")]
    MissingLayer(String),
    #[error("unexpected layer {0} in weight file")]
    UnexpectedLayer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Real scalar type a tensor can hold.
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// Tag written to weight files.
    const DTYPE: u8;
    const BYTES: usize;

    /// `c = alpha * a·b + beta * c` for strided row/column layouts.
    ///
    /// # Safety
    /// Strides and extents must address memory inside the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const DTYPE: u8 = 0;
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Real for f64 {
    const DTYPE: u8 = 1;
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(b)
    }
}

/// Rank-4 dense tensor `(batch, channel, height, width)`.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

pub(crate) fn shape_str(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("×")
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: [usize; 4], value: T) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                left: shape_str(&shape),
                right: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform(shape: [usize; 4], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(rng.random_range(lo..hi))).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    /// Same data, different extents.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.check_same("add", other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// `a·self + b·other`, element-wise.
    pub fn lin_comb(&self, a: T, other: &Tensor<T>, b: T) -> Result<Self> {
        self.check_same("lin_comb", other)?;
        let data = self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect();
        Ok(Self { shape: self.shape, data })
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        self.check_same("dot", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&x, &y)| x * y).sum())
    }

    pub(crate) fn check_same(&self, op: &'static str, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: shape_str(&self.shape),
                right: shape_str(&other.shape),
            });
        }
        Ok(())
    }

    /// Converts between precisions.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    /// One image of the batch as its own tensor.
    pub fn batch_item(&self, n: usize) -> Tensor<T> {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 4]).is_ok());
        let err = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("1×1×2×2"));
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::<f64>::from_fn([2, 3, 4, 5], |[n, c, h, w]| (n * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.index(1, 2, 3, 4)], 1234.0);
        assert_eq!(t.batch_item(1).at(0, 2, 3, 4), 1234.0);
    }

    #[test]
    fn real_roundtrip_bytes() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        (-2.25f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.5);
        assert_eq!(f64::read_le(&buf[4..]), -2.25);
    }
}
