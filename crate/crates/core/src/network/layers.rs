//! Forward and backward kernels: same-padding convolution (im2col + GEMM),
//! GELU and pixel shuffle.

use super::{Scalar, TensorMap};

/// `[c * 9, h * w]` patch matrix for a 3x3 kernel with zero padding 1.
pub fn im2col3<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let n = h * w;
    let mut col = vec![T::zero(); c * 9 * n];
    for ch in 0..c {
        let plane = &x[ch * n..(ch + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ch * 9) + ky * 3 + kx) * n..((ch * 9) + ky * 3 + kx + 1) * n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col3`].
pub fn col2im3<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let n = h * w;
    let mut x = vec![T::zero(); c * n];
    for ch in 0..c {
        let plane = &mut x[ch * n..(ch + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ch * 9) + ky * 3 + kx) * n..((ch * 9) + ky * 3 + kx + 1) * n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src = &row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
    x
}

/// Shape of one convolution; `weight` is `[out_c, in_c, k, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.kernel * self.kernel
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }
}

/// Same-padding convolution of `x` (`in_c x h x w`, channel-first).
pub fn conv_forward<T: Scalar>(
    shape: ConvShape,
    x: &[T],
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let n = h * w;
    debug_assert_eq!(x.len(), shape.in_c * n);
    let mut out = Vec::with_capacity(shape.out_c * n);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, n));
    }
    let col_owned;
    let col: &[T] = if shape.kernel == 1 {
        x
    } else {
        col_owned = im2col3(x, shape.in_c, h, w);
        &col_owned
    };
    T::gemm(shape.out_c, shape.patch_len(), n, weight, col, T::from_f64(1.0), &mut out);
    out
}

/// Accumulates weight/bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    shape: ConvShape,
    x: &[T],
    h: usize,
    w: usize,
    weight: &[T],
    grad_out: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let n = h * w;
    let p = shape.patch_len();
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out[o * n..(o + 1) * n].iter().copied().sum::<T>();
    }
    let col_owned;
    let col: &[T] = if shape.kernel == 1 {
        x
    } else {
        col_owned = im2col3(x, shape.in_c, h, w);
        &col_owned
    };
    // dW += dOut * col^T
    T::gemm_strided(shape.out_c, n, p, grad_out, (n, 1), col, (1, n), T::from_f64(1.0), grad_weight);
    if !need_input_grad {
        return None;
    }
    // dcol = W^T * dOut
    let mut dcol = vec![T::zero(); p * n];
    T::gemm_strided(p, shape.out_c, n, weight, (1, p), grad_out, (n, 1), T::zero(), &mut dcol);
    Some(if shape.kernel == 1 {
        dcol
    } else {
        col2im3(&dcol, shape.in_c, h, w)
    })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let x3 = x * x * x;
    let t = (T::from_f64(GELU_C) * (x + T::from_f64(GELU_K) * x3)).tanh();
    T::from_f64(0.5) * x * (T::from_f64(1.0) + t)
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let one = T::from_f64(1.0);
    let x2 = x * x;
    let t = (T::from_f64(GELU_C) * (x + T::from_f64(GELU_K) * x2 * x)).tanh();
    let dt = T::from_f64(GELU_C) * (one + T::from_f64(3.0 * GELU_K) * x2);
    T::from_f64(0.5) * (one + t) + T::from_f64(0.5) * x * (one - t * t) * dt
}

/// Rearranges `c * r^2` channels into `c` channels at `r` times the
/// resolution: `out[k, r*y + i, r*x + j] = in[k*r^2 + i*r + j, y, x]`.
pub fn pixel_shuffle<T: Scalar>(x: &TensorMap<T>, r: usize) -> TensorMap<T> {
    let (cin, h, w) = x.dims();
    let c = cin / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); c * oh * ow];
    for k in 0..c {
        for i in 0..r {
            for j in 0..r {
                let src_c = k * r * r + i * r + j;
                for y in 0..h {
                    for xx in 0..w {
                        out[(k * oh + r * y + i) * ow + r * xx + j] = x.get(src_c, y, xx);
                    }
                }
            }
        }
    }
    TensorMap::new(c, oh, ow, out).expect("shuffle dims")
}

/// Inverse (and adjoint) of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(x: &TensorMap<T>, r: usize) -> TensorMap<T> {
    let (c, oh, ow) = x.dims();
    let (h, w) = (oh / r, ow / r);
    let mut out = vec![T::zero(); c * r * r * h * w];
    for k in 0..c {
        for i in 0..r {
            for j in 0..r {
                let dst_c = k * r * r + i * r + j;
                for y in 0..h {
                    for xx in 0..w {
                        out[(dst_c * h + y) * w + xx] = x.get(k, r * y + i, r * xx + j);
                    }
                }
            }
        }
    }
    TensorMap::new(c * r * r, h, w, out).expect("unshuffle dims")
}
