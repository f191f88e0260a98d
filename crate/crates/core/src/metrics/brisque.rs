//! BRISQUE natural-scene statistics: MSCN coefficients, generalized Gaussian
//! fits, the 36-value feature vector and an RBF support-vector scorer.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{gaussian_kernel, gray255};
use crate::error::{Error, Result};
use crate::imageops::{resample_plane, ImageBuffer, ResizeMode};

pub const BRISQUE_FEATURES: usize = 36;
const MSCN_WINDOW: usize = 7;
const MSCN_SIGMA: f64 = 7.0 / 6.0;
const MSCN_C: f64 = 1.0;
const MIN_SAMPLES: usize = 64;
const MIN_SIDE: usize = 32;
const ALPHA_MIN: f64 = 0.2;
const ALPHA_STEP: f64 = 1e-3;
const ALPHA_STEPS: usize = 9801; // 0.2 ..= 10.0

/// Feature index permutation under a horizontal flip: the two diagonal
/// orientations swap, everything else stays.
pub const FLIP_PERMUTATION: [usize; BRISQUE_FEATURES] = [
    0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 14, 15, 16, 17, 10, 11, 12, 13, //
    18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 32, 33, 34, 35, 28, 29, 30, 31,
];

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `(alpha, Γ(1/a)Γ(3/a)/Γ(2/a)²)` over the alpha grid.
fn ratio_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..ALPHA_STEPS)
            .map(|i| {
                let a = ALPHA_MIN + i as f64 * ALPHA_STEP;
                (a, gamma(1.0 / a) * gamma(3.0 / a) / gamma(2.0 / a).powi(2))
            })
            .collect()
    })
}

/// Grid alpha whose moment ratio is closest to `target` (first on ties).
fn lookup_alpha(target: f64, inverse: bool) -> f64 {
    let mut best = (f64::INFINITY, ALPHA_MIN);
    for &(a, r) in ratio_table() {
        let r = if inverse { 1.0 / r } else { r };
        let d = (r - target).abs();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

fn check_samples(x: &[f64]) -> Result<()> {
    if x.len() < MIN_SAMPLES {
        return Err(Error::Degenerate(format!("need at least {MIN_SAMPLES} samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("samples contain non-finite values".into()));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::Degenerate("all samples identical".into()));
    }
    Ok(())
}

/// Symmetric generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdFit {
    pub alpha: f64,
    /// Standard deviation `sqrt(E[x^2])`.
    pub sigma: f64,
}

/// Moment-matching GGD fit: `E[x^2] / E[|x|]^2` against the alpha grid.
pub fn ggd_fit(x: &[f64]) -> Result<GgdFit> {
    check_samples(x)?;
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    Ok(GgdFit {
        alpha: lookup_alpha(var / (mean_abs * mean_abs), false),
        sigma: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggdFit {
    pub alpha: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub mean_eta: f64,
}

/// Asymmetric generalized Gaussian fit by moment matching.
pub fn aggd_fit(x: &[f64]) -> Result<AggdFit> {
    check_samples(x)?;
    let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            sl += v * v;
            nl += 1;
        } else if v > 0.0 {
            sr += v * v;
            nr += 1;
        }
    }
    if nl == 0 || nr == 0 {
        return Err(Error::Degenerate("aggd fit needs samples on both sides of zero".into()));
    }
    let sigma_l = (sl / nl as f64).sqrt();
    let sigma_r = (sr / nr as f64).sqrt();
    let n = x.len() as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let g = sigma_l / sigma_r;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let alpha = lookup_alpha(r_norm, true);
    let mean_eta =
        (sigma_r - sigma_l) * gamma(2.0 / alpha) / gamma(1.0 / alpha) * (gamma(1.0 / alpha) / gamma(3.0 / alpha)).sqrt();
    Ok(AggdFit {
        alpha,
        sigma_l,
        sigma_r,
        mean_eta,
    })
}

/// Separable same-size filtering with replicated borders.
fn filter_replicate(p: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * p[y * w + clampi(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[clampi(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Mean-subtracted contrast-normalized coefficients of a 255-scale plane.
pub fn mscn(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA);
    let mu = filter_replicate(plane, h, w, &k);
    let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
    let mu_sq = filter_replicate(&sq, h, w, &k);
    plane
        .iter()
        .zip(mu.iter().zip(&mu_sq))
        .map(|(v, (m, m2))| (v - m) / ((m2 - m * m).abs().sqrt() + MSCN_C))
        .collect()
}

fn scale_features(plane: &[f64], h: usize, w: usize, out: &mut Vec<f64>) -> Result<()> {
    let m = mscn(plane, h, w);
    let g = ggd_fit(&m)?;
    out.extend([g.alpha, g.sigma * g.sigma]);
    // (dy, dx) neighbour offsets: horizontal, vertical, main and anti diagonal
    for (dy, dx) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
        let mut prods = Vec::with_capacity(h * w);
        for y in 0..h as isize - dy {
            for x in 0..w as isize {
                let nx = x + dx;
                if nx < 0 || nx >= w as isize {
                    continue;
                }
                prods.push(m[(y * w as isize + x) as usize] * m[((y + dy) * w as isize + nx) as usize]);
            }
        }
        let a = aggd_fit(&prods)?;
        out.extend([a.alpha, a.mean_eta, a.sigma_l * a.sigma_l, a.sigma_r * a.sigma_r]);
    }
    Ok(())
}

/// 36 features: 18 at full resolution, 18 after area downsampling by 2.
pub fn brisque_features(img: &ImageBuffer) -> Result<Vec<f64>> {
    let (h, w, _) = img.dims();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::Argument(format!("brisque needs at least 32x32 images, got {h}x{w}")));
    }
    let g = gray255(img);
    let mut feats = Vec::with_capacity(BRISQUE_FEATURES);
    scale_features(&g, h, w, &mut feats)?;
    let (eh, ew) = (h / 2 * 2, w / 2 * 2);
    let even: Vec<f64> = (0..eh).flat_map(|y| g[y * w..y * w + ew].to_vec()).collect();
    let half = resample_plane(&even, eh, ew, eh / 2, ew / 2, ResizeMode::Area)?;
    scale_features(&half, eh / 2, ew / 2, &mut feats)?;
    Ok(feats)
}

/// RBF support-vector regression over min-max scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrModel {
    pub version: u32,
    pub gamma: f64,
    pub bias: f64,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
}

impl SvrModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("brisque model {}: {e}", path.display())))?;
        let model: SvrModel = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("brisque model {}: {e}", path.display())))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("brisque model: {m}")));
        if self.version != 1 {
            return bad(format!("unsupported version {}", self.version));
        }
        let d = self.feature_min.len();
        if d == 0 || self.feature_max.len() != d {
            return bad("feature_min/feature_max must be non-empty and equal length".into());
        }
        if self.support_vectors.len() != self.coefficients.len() {
            return bad("support_vectors and coefficients differ in length".into());
        }
        if self.support_vectors.iter().any(|v| v.len() != d) {
            return bad(format!("support vectors must have {d} entries"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0".into());
        }
        Ok(())
    }

    /// Maps each feature from `[min, max]` to `[-1, 1]` (0 for a flat range).
    pub fn scale(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.feature_min.iter().zip(&self.feature_max))
            .map(|(v, (lo, hi))| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 })
            .collect()
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_min.len() {
            return Err(Error::Argument(format!(
                "model expects {} features, got {}",
                self.feature_min.len(),
                features.len()
            )));
        }
        let x = self.scale(features);
        let kernel = |sv: &Vec<f64>| {
            let d2: f64 = sv.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            (-self.gamma * d2).exp()
        };
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel(sv))
            .sum::<f64>()
            + self.bias)
    }
}
