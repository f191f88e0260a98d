//! Procedural root scenes: soil-like background, a main root with hairs,
//! per-instance masks and the ground-truth trait record.
//!
//! Every scene is a pure function of its [`SceneParams`]. Randomness comes
//! from three independent ChaCha8 streams of the same seed:
//!
//! * stream 0: background lattices, octave by octave, row-major;
//! * stream 1: root geometry (see [`sample_root_geometry`]);
//! * stream 2: re-sampling of hairs rejected during rasterization.

mod geometry;
mod noise;
mod raster;

pub use geometry::{polyline_length, sample_root_geometry, HairRecord, Point, RootGeometry, CONTROL_POINTS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::ImageBuffer;
use crate::parallel::Exec;
use crate::traits::{components8, DEFAULT_MIN_AREA};

pub const SOIL_BASE: [f64; 3] = [0.42, 0.33, 0.24];
const SOIL_NOISE_TINT: [f64; 3] = [1.0, 0.9, 0.8];
const NOISE_CONTRAST: f64 = 0.3;
const ROOT_COLOR: [f64; 3] = [0.93, 0.91, 0.84];
const HAIR_COLOR: [f64; 3] = [0.88, 0.86, 0.78];
const HAIR_OPACITY: f64 = 0.9;
pub const MAX_HAIR_RESAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub root_width_px: f64,
    /// Expected hairs per 100 px of centreline.
    pub hair_rate: f64,
    pub hair_len_mean_px: f64,
    pub hair_len_std_px: f64,
    pub hair_width_px: f64,
    pub bg_roughness: f64,
    pub illum_gradient: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 256,
            width: 256,
            root_width_px: 12.0,
            hair_rate: 6.0,
            hair_len_mean_px: 30.0,
            hair_len_std_px: 8.0,
            hair_width_px: 2.0,
            bg_roughness: 0.5,
            illum_gradient: 0.1,
            seed: 0,
        }
    }
}

impl SceneParams {
    /// Checks the parameter invariants; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Argument(format!("scene.{field}: {why}")));
        if self.height < 64 {
            return bad("height", "must be >= 64");
        }
        if self.width < 64 {
            return bad("width", "must be >= 64");
        }
        if !(self.root_width_px >= 2.0) {
            return bad("root_width_px", "must be >= 2");
        }
        if !(self.hair_rate >= 0.0 && self.hair_rate.is_finite()) {
            return bad("hair_rate", "must be >= 0");
        }
        if !(self.hair_len_mean_px > 0.0 && self.hair_len_mean_px.is_finite()) {
            return bad("hair_len_mean_px", "must be > 0");
        }
        if !(self.hair_len_std_px >= 0.0 && self.hair_len_std_px.is_finite()) {
            return bad("hair_len_std_px", "must be >= 0");
        }
        if !(self.hair_width_px > 0.0) {
            return bad("hair_width_px", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.bg_roughness) {
            return bad("bg_roughness", "must be in [0, 1]");
        }
        if !(0.0..=0.5).contains(&self.illum_gradient) {
            return bad("illum_gradient", "must be in [0, 0.5]");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SceneParams { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitTruth {
    pub hair_count: usize,
    pub hair_lengths_px: Vec<f64>,
    pub hair_areas_px: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootScene {
    pub image: ImageBuffer,
    pub root_mask: ImageBuffer,
    pub hair_masks: Vec<ImageBuffer>,
    pub truth: TraitTruth,
    pub centerline: Vec<Point>,
    /// Records of the hairs that were placed, matching `hair_masks`.
    pub hairs: Vec<HairRecord>,
}

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Soil texture with a left-to-right illumination tilt of `illum_gradient`.
pub fn render_background(p: &SceneParams) -> Result<ImageBuffer> {
    p.validate()?;
    let (h, w) = (p.height, p.width);
    let noise = noise::fractal_noise(&mut rng_stream(p.seed, 0), h, w, p.bg_roughness);
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let tilt = p.illum_gradient * (x as f64 / (w - 1) as f64 - 0.5);
            let n = NOISE_CONTRAST * noise[y * w + x];
            for c in 0..3 {
                data.push(SOIL_BASE[c] + SOIL_NOISE_TINT[c] * n + tilt);
            }
        }
    }
    ImageBuffer::from_clamped(h, w, 3, data)
}

fn blend(data: &mut [f64], idx: usize, color: &[f64; 3], alpha: f64) {
    for c in 0..3 {
        let v = &mut data[idx * 3 + c];
        *v = *v * (1.0 - alpha) + color[c] * alpha;
    }
}

/// Renders a full scene: background, hairs, then the root body on top.
pub fn generate_scene(p: &SceneParams) -> Result<RootScene> {
    p.validate()?;
    let (h, w) = (p.height, p.width);
    let mut image = render_background(p)?.into_data();
    let geom = sample_root_geometry(p, &mut rng_stream(p.seed, 1));
    let radius = p.root_width_px / 2.0;

    let dist = raster::centerline_distance(&geom.centerline, h, w, radius + 4.0);
    let root_bits: Vec<bool> = dist.iter().map(|&d| d <= radius).collect();

    let mut resample_rng = rng_stream(p.seed, 2);
    // accepted hair pixels dilated by one, so later hairs cannot touch them
    let mut blocked = vec![false; h * w];
    let mut hairs = Vec::new();
    let mut hair_pixels: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for record in &geom.hairs {
        let mut candidate = *record;
        for attempt in 0..=MAX_HAIR_RESAMPLES {
            if attempt > 0 {
                candidate = geometry::sample_hair(&mut resample_rng, p, &geom.centerline, record.arc_pos);
            }
            if let Some(pixels) = place_hair(&candidate, h, w, &root_bits, &blocked) {
                for &(y, x, cov) in &pixels {
                    if cov >= 0.5 && !root_bits[y * w + x] {
                        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                                blocked[ny * w + nx] = true;
                            }
                        }
                    }
                }
                hairs.push(candidate);
                hair_pixels.push(pixels);
                break;
            }
        }
    }

    for pixels in &hair_pixels {
        for &(y, x, cov) in pixels {
            blend(&mut image, y * w + x, &HAIR_COLOR, HAIR_OPACITY * cov);
        }
    }
    for (i, &d) in dist.iter().enumerate() {
        if d.is_finite() {
            let a = raster::root_alpha(d, radius);
            if a > 0.0 {
                blend(&mut image, i, &ROOT_COLOR, a);
            }
        }
    }

    let to_mask = |bits: &dyn Fn(usize) -> bool| {
        ImageBuffer::new(h, w, 1, (0..h * w).map(|i| if bits(i) { 1.0 } else { 0.0 }).collect())
    };
    let root_mask = to_mask(&|i| root_bits[i])?;
    let mut hair_masks = Vec::with_capacity(hair_pixels.len());
    let mut areas = Vec::with_capacity(hair_pixels.len());
    for pixels in &hair_pixels {
        let mut data = vec![0.0; h * w];
        let mut n = 0usize;
        for &(y, x, cov) in pixels {
            if cov >= 0.5 && !root_bits[y * w + x] {
                data[y * w + x] = 1.0;
                n += 1;
            }
        }
        hair_masks.push(ImageBuffer::new(h, w, 1, data)?);
        areas.push(n as f64);
    }
    let truth = TraitTruth {
        hair_count: hairs.len(),
        hair_lengths_px: hairs.iter().map(|r| r.length_px).collect(),
        hair_areas_px: areas,
    };
    Ok(RootScene {
        image: ImageBuffer::from_clamped(h, w, 3, image)?,
        root_mask,
        hair_masks,
        truth,
        centerline: geom.centerline,
        hairs,
    })
}

/// Rasterizes a candidate hair; `None` when it leaves the image, is too small,
/// splits into pieces, or touches an already placed hair.
fn place_hair(
    hair: &HairRecord,
    h: usize,
    w: usize,
    root: &[bool],
    blocked: &[bool],
) -> Option<Vec<(usize, usize, f64)>> {
    let pixels = raster::hair_coverage(hair, h, w)?;
    let support: Vec<usize> = pixels
        .iter()
        .filter(|&&(y, x, c)| c >= 0.5 && !root[y * w + x])
        .map(|&(y, x, _)| y * w + x)
        .collect();
    if support.len() < DEFAULT_MIN_AREA || support.iter().any(|&i| blocked[i]) {
        return None;
    }
    // connectivity check on the hair's own bounding box
    let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in &support {
        let (y, x) = (i / w, i % w);
        y0 = y0.min(y);
        x0 = x0.min(x);
        y1 = y1.max(y);
        x1 = x1.max(x);
    }
    let (bh, bw) = (y1 - y0 + 1, x1 - x0 + 1);
    let mut local = vec![false; bh * bw];
    for &i in &support {
        local[(i / w - y0) * bw + (i % w - x0)] = true;
    }
    if components8(&local, bh, bw).len() != 1 {
        return None;
    }
    Some(pixels)
}

/// Generates one scene per seed.
pub fn generate_scenes(base: &SceneParams, seeds: &[u64], exec: Exec) -> Result<Vec<RootScene>> {
    exec.try_map(seeds, |&s| generate_scene(&base.with_seed(s)))
}
