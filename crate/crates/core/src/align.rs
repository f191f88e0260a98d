//! Translation estimation by phase correlation and the row-shift warp used to
//! align feature maps.
//!
//! Sign convention: an estimate `s` is the translation that maps the query
//! onto the reference, i.e. `translate(query, s.dy, s.dx) ~= reference`.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{resample_plane, ImageBuffer, ResizeMode};
use crate::network::{Scalar, TensorMap};

const SPECTRUM_EPS: f64 = 1e-12;
pub const MIN_CORRELATION_DIM: usize = 8;

/// Real 2-D map (single channel, unbounded values).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Argument("plane data length mismatch".into()));
        }
        Ok(Plane { height, width, data })
    }

    /// Luma plane of an image.
    pub fn from_image(img: &ImageBuffer) -> Plane {
        let g = img.to_grayscale();
        Plane {
            height: g.height(),
            width: g.width(),
            data: g.into_data(),
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Circular shift: `out(y, x) = in(y - dy, x - dx)` with wraparound.
    pub fn roll(&self, dy: isize, dx: isize) -> Plane {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let sy = (y - dy).rem_euclid(h);
                let sx = (x - dx).rem_euclid(w);
                data[(y * w + x) as usize] = self.data[(sy * w + sx) as usize];
            }
        }
        Plane { data, ..*self }
    }

    /// Mean-removed copy tapered by `w(i) = 0.5 - 0.5 cos(2 pi (i + 0.5) / n)`
    /// along both axes.
    pub fn hann_windowed(&self) -> Plane {
        let taper = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
                .collect()
        };
        let (wy, wx) = (taper(self.height), taper(self.width));
        let mean = self.data.iter().sum::<f64>() / self.data.len() as f64;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| (v - mean) * wy[i / self.width] * wx[i % self.width])
            .collect();
        Plane { data, ..*self }
    }

    /// Doubles both dimensions with the given interpolation.
    pub fn upsample2(&self, mode: Upsampling) -> Result<Plane> {
        match mode {
            Upsampling::Bilinear => {
                let data = resample_plane(
                    &self.data,
                    self.height,
                    self.width,
                    2 * self.height,
                    2 * self.width,
                    ResizeMode::Bilinear,
                )?;
                Plane::new(2 * self.height, 2 * self.width, data)
            }
            Upsampling::Fourier => Ok(self.upsample2_fourier()),
        }
    }

    /// Band-limited interpolation: the spectrum is zero-padded to twice the
    /// size, with Nyquist bins of even dimensions split between both halves.
    fn upsample2_fourier(&self) -> Plane {
        let (h, w) = (self.height, self.width);
        let (oh, ow) = (2 * h, 2 * w);
        let mut spec: Vec<Complex<f64>> = self.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut spec, h, w, false);
        // destination bins and weights of source bin k along a dimension of size n
        let targets = |k: usize, n: usize| -> Vec<(usize, f64)> {
            if n.is_multiple_of(2) && k == n / 2 {
                vec![(k, 0.5), (k + n, 0.5)]
            } else if k <= n / 2 {
                vec![(k, 1.0)]
            } else {
                vec![(k + n, 1.0)]
            }
        };
        let mut up = vec![Complex::new(0.0, 0.0); oh * ow];
        for ky in 0..h {
            let ty = targets(ky, h);
            for kx in 0..w {
                let v = spec[ky * w + kx];
                for &(dy, wy) in &ty {
                    for (dx, wx) in targets(kx, w) {
                        up[dy * ow + dx] += v * (wy * wx);
                    }
                }
            }
        }
        fft2(&mut up, oh, ow, true);
        let norm = (h * w) as f64;
        Plane {
            height: oh,
            width: ow,
            data: up.iter().map(|c| c.re / norm).collect(),
        }
    }
}

/// Interpolation used before sub-pixel correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    Bilinear,
    /// Spectral zero-padding.
    #[default]
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub dy: f64,
    pub dx: f64,
    pub peak: f64,
}

impl ShiftEstimate {
    pub const ZERO: ShiftEstimate = ShiftEstimate {
        dy: 0.0,
        dx: 0.0,
        peak: 0.0,
    };
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2-D FFT (rows then columns).
fn fft2(buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let (row_fft, col_fft) = if inverse {
            (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
        } else {
            (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
        };
        row_fft.process(buf);
        let mut col = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            col_fft.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y];
            }
        }
    });
}

fn is_flat(p: &Plane) -> bool {
    let (lo, hi) = p
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Integer-pixel phase correlation.
pub fn phase_correlate(reference: &Plane, query: &Plane) -> Result<ShiftEstimate> {
    if reference.height != query.height || reference.width != query.width {
        return Err(Error::Argument(format!(
            "map dims differ: {}x{} vs {}x{}",
            reference.height, reference.width, query.height, query.width
        )));
    }
    let (h, w) = (reference.height, reference.width);
    if h < MIN_CORRELATION_DIM || w < MIN_CORRELATION_DIM {
        return Err(Error::Argument(format!("maps must be at least 8x8, got {h}x{w}")));
    }
    if reference.data.iter().chain(&query.data).any(|v| !v.is_finite()) {
        return Err(Error::Argument("maps contain non-finite values".into()));
    }
    if is_flat(reference) || is_flat(query) {
        return Err(Error::Degenerate("constant map has no spectrum beyond DC".into()));
    }
    let to_complex = |p: &Plane| p.data.iter().map(|&v| Complex::new(v, 0.0)).collect::<Vec<_>>();
    let mut fr = to_complex(reference);
    let mut fq = to_complex(query);
    fft2(&mut fr, h, w, false);
    fft2(&mut fq, h, w, false);
    let mut cross: Vec<Complex<f64>> = fr
        .iter()
        .zip(&fq)
        .map(|(a, b)| {
            let c = a * b.conj();
            c / c.norm().max(SPECTRUM_EPS)
        })
        .collect();
    fft2(&mut cross, h, w, true);
    let norm = (h * w) as f64;
    let (mut best, mut peak) = (0usize, f64::NEG_INFINITY);
    for (i, c) in cross.iter().enumerate() {
        let v = c.re / norm;
        if v > peak {
            peak = v;
            best = i;
        }
    }
    let wrap = |i: usize, n: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
    Ok(ShiftEstimate {
        dy: wrap(best / w, h),
        dx: wrap(best % w, w),
        peak,
    })
}

/// Preprocessing of the sub-pixel estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpixelOptions {
    pub upsampling: Upsampling,
    /// Mean removal and a separable Hann window before upsampling, which
    /// keeps the fixed crop borders from pulling the peak towards zero.
    pub window: bool,
}

impl Default for SubpixelOptions {
    fn default() -> Self {
        SubpixelOptions {
            upsampling: Upsampling::Fourier,
            window: true,
        }
    }
}

/// Half-pixel vertical estimate with the default options: windowing,
/// spectral x2 upsampling, phase correlation, halving. The horizontal
/// component is discarded.
pub fn estimate_vertical_subpixel_shift(reference: &Plane, query: &Plane) -> Result<ShiftEstimate> {
    estimate_vertical_subpixel_shift_with(reference, query, SubpixelOptions::default())
}

pub fn estimate_vertical_subpixel_shift_with(
    reference: &Plane,
    query: &Plane,
    opts: SubpixelOptions,
) -> Result<ShiftEstimate> {
    if reference.height != query.height || reference.width != query.width {
        return Err(Error::Argument("map dims differ".into()));
    }
    let prep = |p: &Plane| -> Result<Plane> {
        let p = if opts.window { p.hann_windowed() } else { p.clone() };
        p.upsample2(opts.upsampling)
    };
    let s = phase_correlate(&prep(reference)?, &prep(query)?)?;
    Ok(ShiftEstimate {
        dy: s.dy / 2.0,
        dx: 0.0,
        peak: s.peak,
    })
}

/// Per output row: (lower source row, upper source row, weight of upper).
fn row_taps(h: usize, dy: f64) -> Vec<(usize, usize, f64)> {
    let last = h as isize - 1;
    (0..h)
        .map(|y| {
            let sy = y as f64 - dy;
            let y0 = sy.floor();
            let f = sy - y0;
            let y0 = y0 as isize;
            (y0.clamp(0, last) as usize, (y0 + 1).clamp(0, last) as usize, f)
        })
        .collect()
}

/// Translates every channel by `shift.dy` rows (bilinear, replicate border).
/// The shift is a constant: only the feature values carry gradient.
pub fn warp_features<T: Scalar>(features: &TensorMap<T>, shift: &ShiftEstimate) -> Result<TensorMap<T>> {
    let (c, h, w) = features.dims();
    if !(shift.dy.abs() < h as f64) {
        return Err(Error::Argument(format!("warp shift {} too large for height {h}", shift.dy)));
    }
    let taps = row_taps(h, shift.dy);
    let src = features.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let base = ch * h * w;
        for (y, &(y0, y1, f)) in taps.iter().enumerate() {
            let (a, b) = (T::from_f64(1.0 - f), T::from_f64(f));
            let dst = &mut out[base + y * w..base + (y + 1) * w];
            let r0 = &src[base + y0 * w..base + (y0 + 1) * w];
            let r1 = &src[base + y1 * w..base + (y1 + 1) * w];
            for x in 0..w {
                dst[x] = a * r0[x] + b * r1[x];
            }
        }
    }
    TensorMap::new(c, h, w, out)
}

/// Adjoint of [`warp_features`] for the same shift.
pub fn warp_features_backward<T: Scalar>(grad_out: &TensorMap<T>, shift: &ShiftEstimate) -> TensorMap<T> {
    let (c, h, w) = grad_out.dims();
    let taps = row_taps(h, shift.dy);
    let g = grad_out.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let base = ch * h * w;
        for (y, &(y0, y1, f)) in taps.iter().enumerate() {
            let (a, b) = (T::from_f64(1.0 - f), T::from_f64(f));
            for x in 0..w {
                let gv = g[base + y * w + x];
                out[base + y0 * w + x] += a * gv;
                out[base + y1 * w + x] += b * gv;
            }
        }
    }
    TensorMap::new(c, h, w, out).expect("same dims")
}
