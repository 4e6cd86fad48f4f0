//! Forward and backward kernels for the layer kinds UNet_xxs needs.
//!
//! Convolutions lower to GEMM through an im2col buffer; the remaining layers
//! are direct loops. Summation order is fixed, so results are reproducible
//! run to run.

use super::{shape_str, Real, Result, Tensor, TensorError};

/// Spatial padding policy of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k-1)/2`; output keeps the input extent.
    Same,
    /// No padding; output extent shrinks by `k-1`.
    Valid,
}

/// `c (m×n) = a (m×k) · b (k×n)`, optionally accumulating into `c`.
/// `a_t`/`b_t` mark operands stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "matmul operand too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above bound every access made by the strided GEMM.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvGeom {
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, padding: Padding) -> Result<Self> {
        let [batch, in_ch, h, w] = input.shape();
        let [out_ch, w_in, kh, kw] = weights.shape();
        let mismatch = || TensorError::ShapeMismatch {
            op: "conv2d",
            left: format!("input {}", shape_str(&input.shape())),
            right: format!("weights {}", shape_str(&weights.shape())),
        };
        if w_in != in_ch || kh != kw || kh == 0 {
            return Err(mismatch());
        }
        let k = kh;
        let (pad, ho, wo) = match padding {
            Padding::Same => {
                if k % 2 == 0 {
                    return Err(mismatch());
                }
                ((k - 1) / 2, h, w)
            }
            Padding::Valid => {
                if h < k || w < k {
                    return Err(mismatch());
                }
                (0, h - k + 1, w - k + 1)
            }
        };
        Ok(Self { batch, in_ch, out_ch, h, w, k, pad, ho, wo })
    }

    fn direct(&self) -> bool {
        self.k == 1 && self.pad == 0
    }
}

/// Rebuilds `cols` as the `(in_ch·k·k) × (ho·wo)` patch matrix of `x`.
/// Every entry is written exactly once.
fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut Vec<T>) {
    let zero = std::iter::repeat(T::zero());
    cols.clear();
    cols.reserve(g.in_ch * g.k * g.k * g.ho * g.wo);
    for ci in 0..g.in_ch {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                // Output columns whose source ix = ox + shift lies inside the row.
                let shift = kx as isize - g.pad as isize;
                let lo = (-shift).clamp(0, g.wo as isize) as usize;
                let hi = (g.w as isize - shift).clamp(lo as isize, g.wo as isize) as usize;
                let start = (lo as isize + shift) as usize;
                for oy in 0..g.ho {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        cols.extend(zero.clone().take(g.wo));
                        continue;
                    }
                    let srow = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    cols.extend(zero.clone().take(lo));
                    cols.extend_from_slice(&srow[start..start + hi - lo]);
                    cols.extend(zero.clone().take(g.wo - hi));
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let hw = g.ho * g.wo;
    for ci in 0..g.in_ch {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..g.ho {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let shift = kx as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = ox as isize + shift;
                        if ix >= 0 && ix < g.w as isize {
                            drow[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Real>(op: &'static str, bias: Option<&[T]>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(TensorError::ShapeMismatch {
            op,
            left: format!("bias of {} values", b.len()),
            right: format!("{channels} output channels"),
        }),
        _ => Ok(()),
    }
}

/// 2-D convolution (cross-correlation), stride 1.
///
/// `weights` is `(out_ch, in_ch, k, k)`; every output value is the inner
/// product of the kernel with its receptive field plus the channel bias.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input, weights, padding)?;
    check_bias("conv2d", bias, g.out_ch)?;
    let ckk = g.in_ch * g.k * g.k;
    let hw = g.ho * g.wo;
    // Start from the broadcast bias so the GEMM can accumulate onto it.
    let shape = [g.batch, g.out_ch, g.ho, g.wo];
    let mut out = match bias {
        Some(b) => {
            let mut data = Vec::with_capacity(g.batch * g.out_ch * hw);
            for _ in 0..g.batch {
                for &bo in b {
                    data.extend(std::iter::repeat_n(bo, hw));
                }
            }
            Tensor::from_vec(shape, data)?
        }
        None => Tensor::zeros(shape),
    };
    let mut cols = Vec::new();
    let in_per = g.in_ch * g.h * g.w;
    let out_per = g.out_ch * hw;
    for n in 0..g.batch {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        let y = &mut out.data_mut()[n * out_per..(n + 1) * out_per];
        let b_mat: &[T] = if g.direct() {
            x
        } else {
            im2col(x, &g, &mut cols);
            &cols
        };
        matmul(g.out_ch, ckk, hw, weights.data(), false, b_mat, false, y, bias.is_some());
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`]: `(d_input, d_weights, d_bias)`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let g = ConvGeom::new(input, weights, padding)?;
    if grad_out.shape() != [g.batch, g.out_ch, g.ho, g.wo] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            left: shape_str(&grad_out.shape()),
            right: shape_str(&[g.batch, g.out_ch, g.ho, g.wo]),
        });
    }
    let ckk = g.in_ch * g.k * g.k;
    let hw = g.ho * g.wo;
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weights.shape());
    let mut db = vec![T::zero(); g.out_ch];
    let mut cols = Vec::new();
    let mut dcols = vec![T::zero(); ckk * hw];
    let in_per = g.in_ch * g.h * g.w;
    let out_per = g.out_ch * hw;
    for n in 0..g.batch {
        let x = &input.data()[n * in_per..(n + 1) * in_per];
        let dy = &grad_out.data()[n * out_per..(n + 1) * out_per];
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dy[o * hw..(o + 1) * hw].iter().copied().sum();
        }
        let cols_ref: &[T] = if g.direct() {
            x
        } else {
            im2col(x, &g, &mut cols);
            &cols
        };
        // dW (O×CKK) += dY (O×HW) · colsᵀ
        matmul(g.out_ch, hw, ckk, dy, false, cols_ref, true, dw.data_mut(), true);
        let dxn = &mut dx.data_mut()[n * in_per..(n + 1) * in_per];
        if g.direct() {
            // dX (C×HW) = Wᵀ · dY
            matmul(ckk, g.out_ch, hw, weights.data(), true, dy, false, dxn, false);
        } else {
            matmul(ckk, g.out_ch, hw, weights.data(), true, dy, false, &mut dcols, false);
            col2im(&dcols, &g, dxn);
        }
    }
    Ok((dx, dw, db))
}

fn tconv_check<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<()> {
    let ws = weights.shape();
    if ws[0] != input.shape()[1] || ws[2] != 2 || ws[3] != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "conv_transpose2x2",
            left: format!("input {}", shape_str(&input.shape())),
            right: format!("weights {}", shape_str(&ws)),
        });
    }
    Ok(())
}

/// Transposed convolution with a 2×2 kernel and stride 2.
///
/// `weights` is `(in_ch, out_ch, 2, 2)`; output spatial size doubles.
pub fn conv_transpose2x2_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
) -> Result<Tensor<T>> {
    tconv_check(input, weights)?;
    let [batch, cin, h, w] = input.shape();
    let cout = weights.shape()[1];
    check_bias("conv_transpose2x2", bias, cout)?;
    let hw = h * w;
    let mut out = Tensor::zeros([batch, cout, 2 * h, 2 * w]);
    let mut y = vec![T::zero(); cout * 4 * hw];
    for n in 0..batch {
        let x = &input.data()[n * cin * hw..(n + 1) * cin * hw];
        // Y (O·4 × HW) = Wᵀ (O·4 × C) · X (C × HW)
        matmul(cout * 4, cin, hw, weights.data(), true, x, false, &mut y, false);
        for o in 0..cout {
            let bo = bias.map_or(T::zero(), |b| b[o]);
            for a in 0..2 {
                for b in 0..2 {
                    let src = &y[(o * 4 + a * 2 + b) * hw..(o * 4 + a * 2 + b + 1) * hw];
                    for i in 0..h {
                        for j in 0..w {
                            let idx = out.index(n, o, 2 * i + a, 2 * j + b);
                            out.data_mut()[idx] = src[i * w + j] + bo;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2x2_forward`]: `(d_input, d_weights, d_bias)`.
pub fn conv_transpose2x2_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    tconv_check(input, weights)?;
    let [batch, cin, h, w] = input.shape();
    let cout = weights.shape()[1];
    if grad_out.shape() != [batch, cout, 2 * h, 2 * w] {
        return Err(TensorError::ShapeMismatch {
            op: "conv_transpose2x2_backward",
            left: shape_str(&grad_out.shape()),
            right: shape_str(&[batch, cout, 2 * h, 2 * w]),
        });
    }
    let hw = h * w;
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weights.shape());
    let mut db = vec![T::zero(); cout];
    let mut dy = vec![T::zero(); cout * 4 * hw];
    for n in 0..batch {
        for o in 0..cout {
            for a in 0..2 {
                for b in 0..2 {
                    let dst = &mut dy[(o * 4 + a * 2 + b) * hw..(o * 4 + a * 2 + b + 1) * hw];
                    for i in 0..h {
                        for j in 0..w {
                            let v = grad_out.at(n, o, 2 * i + a, 2 * j + b);
                            dst[i * w + j] = v;
                            db[o] += v;
                        }
                    }
                }
            }
        }
        let x = &input.data()[n * cin * hw..(n + 1) * cin * hw];
        // dW (C × O·4) += X (C × HW) · dYᵀ
        matmul(cin, hw, cout * 4, x, false, &dy, true, dw.data_mut(), true);
        // dX (C × HW) = W (C × O·4) · dY (O·4 × HW)
        let dxn = &mut dx.data_mut()[n * cin * hw..(n + 1) * cin * hw];
        matmul(cin, cout * 4, hw, weights.data(), false, &dy, false, dxn, false);
    }
    Ok((dx, dw, db))
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, per output
/// value, the flat input index that won (first maximum in scan order).
pub fn max_pool2x2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let [b, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::Invalid(format!(
            "max_pool2x2 needs even extents, got {}",
            shape_str(&input.shape())
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros([b, c, ho, wo]);
    let mut arg = Vec::with_capacity(b * c * ho * wo);
    for n in 0..b {
        for ch in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = input.index(n, ch, 2 * i, 2 * j);
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = input.index(n, ch, 2 * i + di, 2 * j + dj);
                        if input.data()[idx] > input.data()[best] {
                            best = idx;
                        }
                    }
                    let o = out.index(n, ch, i, j);
                    out.data_mut()[o] = input.data()[best];
                    arg.push(best as u32);
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2x2_backward<T: Real>(input_shape: [usize; 4], argmax: &[u32], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    for (&src, &g) in argmax.iter().zip(grad_out.data()) {
        dx.data_mut()[src as usize] += g;
    }
    dx
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let [b, c, h, w] = input.shape();
    Tensor::from_fn([b, c, 2 * h, 2 * w], |[n, ch, y, x]| input.at(n, ch, y / 2, x / 2))
}

pub fn upsample2x_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let [b, c, h2, w2] = grad_out.shape();
    let mut dx = Tensor::zeros([b, c, h2 / 2, w2 / 2]);
    for n in 0..b {
        for ch in 0..c {
            for y in 0..h2 {
                for x in 0..w2 {
                    let i = dx.index(n, ch, y / 2, x / 2);
                    dx.data_mut()[i] += grad_out.at(n, ch, y, x);
                }
            }
        }
    }
    dx
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor { shape: x.shape(), data }
}

#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Uses the cached forward output `y = σ(x)`: `dx = dy · y · (1 − y)`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = y.data().iter().zip(grad_out.data()).map(|(&s, &g)| g * s * (T::one() - s)).collect();
    Tensor { shape: y.shape(), data }
}

/// Channel-wise concatenation `[a, b]`.
pub fn concat_forward<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if na != nb || ha != hb || wa != wb {
        return Err(TensorError::ShapeMismatch {
            op: "concat",
            left: shape_str(&a.shape()),
            right: shape_str(&b.shape()),
        });
    }
    let plane = ha * wa;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..na {
        data.extend_from_slice(&a.data()[n * ca * plane..(n + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[n * cb * plane..(n + 1) * cb * plane]);
    }
    Ok(Tensor { shape: [na, ca + cb, ha, wa], data })
}

pub fn concat_backward<T: Real>(a_channels: usize, grad_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = grad_out.shape();
    let plane = h * w;
    let cb = c - a_channels;
    let mut da = Vec::with_capacity(n * a_channels * plane);
    let mut db = Vec::with_capacity(n * cb * plane);
    for i in 0..n {
        let base = i * c * plane;
        da.extend_from_slice(&grad_out.data()[base..base + a_channels * plane]);
        db.extend_from_slice(&grad_out.data()[base + a_channels * plane..base + c * plane]);
    }
    (Tensor { shape: [n, a_channels, h, w], data: da }, Tensor { shape: [n, cb, h, w], data: db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Six nested loops, no lowering: the reference the GEMM path must match.
    fn naive_conv(x: &Tensor<f64>, wt: &Tensor<f64>, bias: Option<&[f64]>, pad: usize) -> Tensor<f64> {
        let [b, c, h, w] = x.shape();
        let [o, _, k, _] = wt.shape();
        let ho = h + 2 * pad - k + 1;
        let wo = w + 2 * pad - k + 1;
        Tensor::from_fn([b, o, ho, wo], |[n, oc, oy, ox]| {
            let mut acc = bias.map_or(0.0, |bb| bb[oc]);
            for ic in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = oy as isize + ky as isize - pad as isize;
                        let ix = ox as isize + kx as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += x.at(n, ic, iy as usize, ix as usize) * wt.at(oc, ic, ky, kx);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel_same_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::random_uniform([1, 1, 5, 5], -1.0, 1.0, &mut rng);
        let k = Tensor::from_fn([1, 1, 3, 3], |[_, _, y, x]| if y == 1 && x == 1 { 1.0 } else { 0.0 });
        let y = conv2d_forward(&x, &k, None, Padding::Same).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_valid_sums_to_nine() {
        let x = Tensor::<f32>::filled([1, 1, 3, 3], 1.0);
        let k = Tensor::<f32>::filled([1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, None, Padding::Valid).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.data()[0], 9.0);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::<f32>::random_uniform([1, 2, 8, 8], -1.0, 1.0, &mut rng);
        let w = Tensor::<f32>::random_uniform([4, 2, 3, 3], -1.0, 1.0, &mut rng);
        let b = [0.1f32, -0.2, 0.3, 0.0];
        for (pad, padding) in [(1, Padding::Same), (0, Padding::Valid)] {
            let got = conv2d_forward(&x, &w, Some(&b), padding).unwrap();
            let want = naive_conv(&x.cast(), &w.cast(), Some(&[0.1, -0.2, 0.3, 0.0]), pad);
            assert_eq!(got.shape(), want.shape());
            for (g, e) in got.data().iter().zip(want.data()) {
                let rel = (*g as f64 - e).abs() / e.abs().max(1.0);
                assert!(rel <= 1e-5, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn one_by_one_conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::<f64>::random_uniform([2, 3, 4, 5], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::random_uniform([2, 3, 1, 1], -1.0, 1.0, &mut rng);
        let got = conv2d_forward(&x, &w, None, Padding::Same).unwrap();
        let want = naive_conv(&x, &w, None, 0);
        for (g, e) in got.data().iter().zip(want.data()) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros([1, 3, 8, 8]);
        let w = Tensor::<f32>::zeros([4, 2, 3, 3]);
        let msg = conv2d_forward(&x, &w, None, Padding::Same).unwrap_err().to_string();
        assert!(msg.contains("1×3×8×8") && msg.contains("4×2×3×3"), "{msg}");
    }

    #[test]
    fn transpose_conv_matches_scatter_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::random_uniform([2, 3, 3, 4], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::random_uniform([3, 2, 2, 2], -1.0, 1.0, &mut rng);
        let y = conv_transpose2x2_forward(&x, &w, Some(&[0.5, -0.5])).unwrap();
        let want = Tensor::from_fn([2, 2, 6, 8], |[n, o, yy, xx]| {
            let mut acc = if o == 0 { 0.5 } else { -0.5 };
            for c in 0..3 {
                acc += x.at(n, c, yy / 2, xx / 2) * w.at(c, o, yy % 2, xx % 2);
            }
            acc
        });
        for (g, e) in y.data().iter().zip(want.data()) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_dominates_window_and_upsample_inverts_on_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f32>::random_uniform([1, 2, 6, 8], -1.0, 1.0, &mut rng);
        let (p, _) = max_pool2x2_forward(&x).unwrap();
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        assert!(p.at(0, c, i, j) >= x.at(0, c, 2 * i + a, 2 * j + b));
                    }
                }
            }
        }
        let k = Tensor::<f32>::filled([1, 3, 8, 4], 2.5);
        let (pooled, _) = max_pool2x2_forward(&k).unwrap();
        assert_eq!(upsample2x_forward(&pooled), k);
        assert!(max_pool2x2_forward(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
    }

    #[test]
    fn concat_roundtrips_through_backward() {
        let a = Tensor::<f32>::from_fn([2, 1, 2, 2], |[n, _, y, x]| (n * 10 + y * 2 + x) as f32);
        let b = Tensor::<f32>::from_fn([2, 2, 2, 2], |[n, c, y, x]| -((n * 100 + c * 10 + y * 2 + x) as f32));
        let cat = concat_forward(&a, &b).unwrap();
        assert_eq!(cat.shape(), [2, 3, 2, 2]);
        let (da, db) = concat_backward(1, &cat);
        assert_eq!(da, a);
        assert_eq!(db, b);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let y = sigmoid_forward(&Tensor::<f64>::zeros([1, 1, 1, 1]));
        let g = sigmoid_backward(&y, &Tensor::filled([1, 1, 1, 1], 1.0));
        assert_eq!(g.data()[0], 0.25);
        assert!(sigmoid(-800.0f64).is_finite() && sigmoid(800.0f64) == 1.0);
    }
}
