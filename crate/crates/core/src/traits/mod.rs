//! Root and root-hair trait measurement from binary masks.

mod label;
mod skeleton;

pub use label::{label_instances, mask_bits, Component};
pub(crate) use label::components8;
pub use skeleton::{hair_length, skeleton_length};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::ImageBuffer;

pub const DEFAULT_MIN_AREA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HairMeasurement {
    pub length_px: f64,
    pub area_px: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitReport {
    pub root_count: usize,
    pub hair_count: usize,
    pub total_hair_length_mm: f64,
    pub avg_hair_length_mm: f64,
    pub avg_hair_area_mm2: f64,
    pub mm_per_px: f64,
    /// Set when no hairs were found; the averages are then 0.
    pub empty: bool,
    pub per_hair: Vec<HairMeasurement>,
}

impl TraitReport {
    pub fn to_table(&self) -> String {
        let rows = [
            ("Root Count", self.root_count.to_string()),
            ("Root Hair Count", self.hair_count.to_string()),
            ("Total Root Hair Length (mm)", format!("{:.2}", self.total_hair_length_mm)),
            ("Average Root Hair Length (mm)", format!("{:.2}", self.avg_hair_length_mm)),
            ("Average Root Hair Area (mm^2)", format!("{:.4}", self.avg_hair_area_mm2)),
        ];
        let mut s = format!("{:<32}{:>12}\n", "Root Trait", "Value");
        s.push_str(&"-".repeat(44));
        s.push('\n');
        for (k, v) in rows {
            s.push_str(&format!("{k:<32}{v:>12}\n"));
        }
        s
    }
}

/// Counts roots and hairs and converts hair length/area to millimetres.
///
/// Hairs are the components of `hair_mask` after removing every pixel that
/// belongs to `root_mask`.
pub fn analyze(
    root_mask: &ImageBuffer,
    hair_mask: &ImageBuffer,
    mm_per_px: f64,
    min_area: usize,
) -> Result<TraitReport> {
    if root_mask.dims() != hair_mask.dims() {
        return Err(Error::Argument(format!(
            "mask dims differ: {:?} vs {:?}",
            root_mask.dims(),
            hair_mask.dims()
        )));
    }
    if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
        return Err(Error::Argument(format!("mm_per_px must be positive, got {mm_per_px}")));
    }
    let (h, w) = (root_mask.height(), root_mask.width());
    let root = mask_bits(root_mask)?;
    let mut hair = mask_bits(hair_mask)?;
    for (hp, rp) in hair.iter_mut().zip(&root) {
        *hp &= !*rp;
    }
    let root_count = components8(&root, h, w)
        .iter()
        .filter(|c| c.area() >= min_area)
        .count();
    let per_hair: Vec<HairMeasurement> = components8(&hair, h, w)
        .iter()
        .filter(|c| c.area() >= min_area)
        .map(|c| HairMeasurement {
            length_px: hair_length(c),
            area_px: c.area(),
        })
        .collect();

    let hair_count = per_hair.len();
    let total_len_px: f64 = per_hair.iter().map(|m| m.length_px).sum();
    let total_area_px: usize = per_hair.iter().map(|m| m.area_px).sum();
    let total_hair_length_mm = total_len_px * mm_per_px;
    let (avg_len, avg_area) = if hair_count > 0 {
        (
            total_hair_length_mm / hair_count as f64,
            total_area_px as f64 * mm_per_px * mm_per_px / hair_count as f64,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(TraitReport {
        root_count,
        hair_count,
        total_hair_length_mm,
        avg_hair_length_mm: avg_len,
        avg_hair_area_mm2: avg_area,
        mm_per_px,
        empty: hair_count == 0,
        per_hair,
    })
}

/// Pixel-wise union of several binary masks.
pub fn union_masks(masks: &[ImageBuffer], h: usize, w: usize) -> Result<ImageBuffer> {
    let mut data = vec![0.0; h * w];
    for m in masks {
        if m.dims() != (h, w, 1) {
            return Err(Error::Argument("mask dims mismatch in union".into()));
        }
        for (d, v) in data.iter_mut().zip(m.data()) {
            if *v > 0.0 {
                *d = 1.0;
            }
        }
    }
    ImageBuffer::new(h, w, 1, data)
}
