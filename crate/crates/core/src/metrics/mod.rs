//! Full-reference (MSE, PSNR, SSIM) and no-reference (BRISQUE) image
//! quality, plus dataset-level reports. All metrics work on the 255 scale.

mod brisque;
mod report;

pub use brisque::{
    aggd_fit, brisque_features, ggd_fit, mscn, AggdFit, GgdFit, SvrModel, BRISQUE_FEATURES, FLIP_PERMUTATION,
};
pub use report::{evaluate_dataset, ImageRow, QualityReport};

use crate::error::{Error, Result};
use crate::imageops::ImageBuffer;

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_same(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Argument(format!("image dims differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Mean squared error on the 255 scale over all pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = PEAK * x - PEAK * y;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// PSNR in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Normalized 1-D Gaussian of odd length `n`.
pub(crate) fn gaussian_kernel(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n / 2) as f64;
    let k: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over valid positions only.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

pub(crate) fn gray255(img: &ImageBuffer) -> Vec<f64> {
    img.to_grayscale().data().iter().map(|v| v * PEAK).collect()
}

/// Single-scale SSIM on the grayscale images: 11x11 Gaussian window
/// (sigma 1.5), mean over valid window positions.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same(a, b)?;
    let (h, w, _) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Argument(format!("ssim needs at least 11x11 images, got {h}x{w}")));
    }
    let (x, y) = (gray255(a), gray255(b));
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<f64>>();
    let (mx, oh, ow) = filter_valid(&x, h, w, &k);
    let (my, _, _) = filter_valid(&y, h, w, &k);
    let (mxx, _, _) = filter_valid(&prod(&x, &x), h, w, &k);
    let (myy, _, _) = filter_valid(&prod(&y, &y), h, w, &k);
    let (mxy, _, _) = filter_valid(&prod(&x, &y), h, w, &k);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let total: f64 = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / (oh * ow) as f64)
}
