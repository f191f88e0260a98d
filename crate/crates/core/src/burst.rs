//! Low-resolution bursts with exact half-pixel vertical shifts, dataset
//! persistence and ingestion of real capture groups.
//!
//! A burst frame is cut from the HR scene at a vertically offset window and
//! area-downsampled by 2, so an odd HR offset `o` becomes an LR shift of
//! `o / 2`, always with fractional part 0.5.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{read_png, write_png, ImageBuffer, Rect, ResizeMode};
use crate::synthgen::{RootScene, TraitTruth};

pub const SCALE: usize = 2;
pub const DEFAULT_HR_OFFSETS: [i64; 3] = [-3, 0, 3];
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Acquisition metadata of a real capture group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub depth_mm: f64,
    pub rotation_step: i64,
    pub acquired_at: DateTime<FixedOffset>,
    pub mm_per_px: f64,
}

/// Vertical LR shift of every frame relative to the reference, or a marker
/// for captures whose shifts were never measured.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueShifts {
    Known(Vec<f64>),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstSample {
    pub hr_target: Option<ImageBuffer>,
    pub frames: Vec<ImageBuffer>,
    pub true_shifts_lr: TrueShifts,
    pub meta: Option<CaptureMeta>,
}

impl BurstSample {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn reference_index(&self) -> usize {
        self.frames.len() / 2
    }

    pub fn reference(&self) -> &ImageBuffer {
        &self.frames[self.reference_index()]
    }

    pub fn known_shifts(&self) -> Option<&[f64]> {
        match &self.true_shifts_lr {
            TrueShifts::Known(s) => Some(s),
            TrueShifts::Unknown => None,
        }
    }

    /// Checks frame count, frame dims and the HR/LR scale relation.
    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if n < 2 || n.is_multiple_of(2) {
            return Err(Error::Argument(format!("burst needs an odd frame count >= 3, got {n}")));
        }
        let dims = self.frames[0].dims();
        if self.frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::Argument("burst frames differ in size".into()));
        }
        if let Some(hr) = &self.hr_target {
            if hr.height() != dims.0 * SCALE || hr.width() != dims.1 * SCALE {
                return Err(Error::Argument("hr target is not twice the frame size".into()));
            }
        }
        if let TrueShifts::Known(s) = &self.true_shifts_lr {
            if s.len() != n || s[n / 2] != 0.0 {
                return Err(Error::Argument("shift list must match frames with 0 at the reference".into()));
            }
        }
        Ok(())
    }
}

/// Offsets for an `n_frames` burst: 0 at the reference and, elsewhere, an
/// odd magnitude drawn from `magnitudes` with a random sign.
pub fn random_odd_offsets<R: Rng>(rng: &mut R, n_frames: usize, magnitudes: &[i64]) -> Result<Vec<i64>> {
    if n_frames < 3 || n_frames.is_multiple_of(2) {
        return Err(Error::Argument(format!("need an odd number (>= 3) of frames, got {n_frames}")));
    }
    if magnitudes.is_empty() || magnitudes.iter().any(|m| *m <= 0 || m % 2 == 0) {
        return Err(Error::Argument("offset magnitudes must be positive odd integers".into()));
    }
    Ok((0..n_frames)
        .map(|i| {
            if i == n_frames / 2 {
                return 0;
            }
            let m = magnitudes[rng.random_range(0..magnitudes.len())];
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect())
}

/// Cuts an HR target and `offsets.len()` LR frames from `scene_img`.
pub fn synthesize_burst(scene_img: &ImageBuffer, window: Rect, hr_offsets: &[i64]) -> Result<BurstSample> {
    let n = hr_offsets.len();
    if n < 2 || n.is_multiple_of(2) {
        return Err(Error::Argument(format!("need an odd number (>= 3) of offsets, got {n}")));
    }
    let mid = n / 2;
    if hr_offsets[mid] != 0 {
        return Err(Error::Argument("reference offset must be 0".into()));
    }
    if let Some(o) = hr_offsets
        .iter()
        .enumerate()
        .find(|&(i, o)| i != mid && o.rem_euclid(2) != 1)
        .map(|(_, o)| o)
    {
        return Err(Error::Argument(format!(
            "offset {o} violates the odd number of pixels rule"
        )));
    }
    if !window.height.is_multiple_of(SCALE) || !window.width.is_multiple_of(SCALE) || window.height == 0 || window.width == 0 {
        return Err(Error::Argument("window dims must be positive and even".into()));
    }
    let hr_target = scene_img.crop(window)?;
    let mut frames = Vec::with_capacity(n);
    for &o in hr_offsets {
        let r = window
            .shifted_rows(o)
            .ok_or_else(|| Error::Bounds(format!("window shifted by {o} leaves the image")))?;
        let crop = scene_img.crop(r)?;
        frames.push(crop.resize(window.height / SCALE, window.width / SCALE, ResizeMode::Area)?);
    }
    let shifts = hr_offsets.iter().map(|&o| o as f64 / SCALE as f64).collect();
    Ok(BurstSample {
        hr_target: Some(hr_target),
        frames,
        true_shifts_lr: TrueShifts::Known(shifts),
        meta: None,
    })
}

/// Window of `height x width` centred vertically in the scene and
/// horizontally on the root centreline, leaving `margin` rows free above and
/// below for offset windows.
pub fn root_centred_window(scene: &RootScene, height: usize, width: usize, margin: usize) -> Result<Rect> {
    let (h, w, _) = scene.image.dims();
    if height + 2 * margin > h || width > w {
        return Err(Error::Bounds(format!(
            "window {height}x{width} with margin {margin} does not fit a {h}x{w} scene"
        )));
    }
    let top = (h - height) / 2;
    let mid_row = (top + height / 2).min(scene.centerline.len().saturating_sub(1));
    let cx = scene.centerline.get(mid_row).map_or(w as f64 / 2.0, |p| p.x);
    let left = (cx - width as f64 / 2.0).round().clamp(0.0, (w - width) as f64) as usize;
    Ok(Rect::new(top, left, height, width))
}

/// Crop of the scene masks matching a burst window.
pub fn crop_truth(scene: &RootScene, window: Rect) -> Result<SampleTruth> {
    let hair_masks = scene
        .hair_masks
        .iter()
        .map(|m| m.crop(window))
        .filter(|m| m.as_ref().map_or(true, |m| m.data().iter().any(|v| *v > 0.5)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleTruth {
        root_mask: scene.root_mask.crop(window)?,
        hair_masks,
        traits: None,
    })
}

/// Segmentation masks and (for whole scenes) the generator's trait record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTruth {
    pub root_mask: ImageBuffer,
    pub hair_masks: Vec<ImageBuffer>,
    pub traits: Option<TraitTruth>,
}

impl SampleTruth {
    pub fn from_scene(scene: &RootScene) -> Self {
        SampleTruth {
            root_mask: scene.root_mask.clone(),
            hair_masks: scene.hair_masks.clone(),
            traits: Some(scene.truth.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Deterministic split: the last `round(n * val_fraction)` samples are val.
pub fn split_for(index: usize, n: usize, val_fraction: f64) -> Split {
    let n_val = (n as f64 * val_fraction).round() as usize;
    if index + n_val >= n {
        Split::Val
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub sample_id: String,
    pub split: Split,
    pub sample: BurstSample,
    pub truth: Option<SampleTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum UnknownMarker {
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ShiftsField {
    Known(Vec<String>),
    Unknown(UnknownMarker),
}

/// One line of `manifest.jsonl`; paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub split: Split,
    pub scale: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr: Option<String>,
    pub frames: Vec<String>,
    true_shifts_lr: ShiftsField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_mask: Option<String>,
    #[serde(default)]
    pub hair_masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<String>,
}

impl ManifestRecord {
    /// Parsed shifts; `None` for the unknown marker.
    pub fn true_shifts_lr(&self) -> Result<Option<Vec<f64>>> {
        match &self.true_shifts_lr {
            ShiftsField::Unknown(_) => Ok(None),
            ShiftsField::Known(v) => v
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Dataset {
                        sample_id: self.sample_id.clone(),
                        message: format!("bad shift `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

fn check_sample_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Argument(format!("invalid sample id `{id}`")))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the entries under `dir` and returns the manifest records.
pub fn persist_dataset(entries: &[DatasetEntry], dir: &Path) -> Result<Vec<ManifestRecord>> {
    let mut seen = HashSet::new();
    for e in entries {
        check_sample_id(&e.sample_id)?;
        if !seen.insert(e.sample_id.as_str()) {
            return Err(Error::Dataset {
                sample_id: e.sample_id.clone(),
                message: "duplicate sample id".into(),
            });
        }
    }
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let rel = format!("samples/{}", e.sample_id);
        let sdir = dir.join(&rel);
        fs::create_dir_all(&sdir).map_err(|err| Error::io(&sdir, err))?;
        let mut rec = ManifestRecord {
            sample_id: e.sample_id.clone(),
            split: e.split,
            scale: SCALE,
            hr: None,
            frames: Vec::new(),
            true_shifts_lr: match &e.sample.true_shifts_lr {
                TrueShifts::Known(s) => ShiftsField::Known(s.iter().map(|v| v.to_string()).collect()),
                TrueShifts::Unknown => ShiftsField::Unknown(UnknownMarker::Unknown),
            },
            root_mask: None,
            hair_masks: Vec::new(),
            truth: None,
            meta: None,
        };
        if let Some(hr) = &e.sample.hr_target {
            write_png(sdir.join("hr.png"), hr)?;
            rec.hr = Some(format!("{rel}/hr.png"));
        }
        for (i, f) in e.sample.frames.iter().enumerate() {
            write_png(sdir.join(format!("lr_{i}.png")), f)?;
            rec.frames.push(format!("{rel}/lr_{i}.png"));
        }
        if let Some(t) = &e.truth {
            write_png(sdir.join("root_mask.png"), &t.root_mask)?;
            rec.root_mask = Some(format!("{rel}/root_mask.png"));
            for (k, m) in t.hair_masks.iter().enumerate() {
                write_png(sdir.join(format!("hair_{k}.png")), m)?;
                rec.hair_masks.push(format!("{rel}/hair_{k}.png"));
            }
            if let Some(traits) = &t.traits {
                write_json(&sdir.join("truth.json"), traits)?;
                rec.truth = Some(format!("{rel}/truth.json"));
            }
        }
        if let Some(m) = &e.sample.meta {
            write_json(&sdir.join("meta.json"), m)?;
            rec.meta = Some(format!("{rel}/meta.json"));
        }
        records.push(rec);
    }
    let path = dir.join(MANIFEST_FILE);
    let mut out = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for r in &records {
        writeln!(out, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(records)
}

/// Parses `manifest.jsonl` without touching the payload files.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if !seen.insert(rec.sample_id.clone()) {
            return Err(Error::Dataset {
                sample_id: rec.sample_id,
                message: "duplicate sample id".into(),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

fn load_record(dir: &Path, rec: &ManifestRecord) -> Result<DatasetEntry> {
    let named = |e: Error| match e {
        Error::Dataset { .. } => e,
        other => Error::Dataset {
            sample_id: rec.sample_id.clone(),
            message: other.to_string(),
        },
    };
    let png = |rel: &String| -> Result<ImageBuffer> {
        let p = dir.join(rel);
        if !p.is_file() {
            return Err(Error::Dataset {
                sample_id: rec.sample_id.clone(),
                message: format!("missing file {rel}"),
            });
        }
        read_png(&p).map_err(named)
    };
    let json_file = |rel: &String| -> Result<String> {
        let p = dir.join(rel);
        fs::read_to_string(&p).map_err(|_| Error::Dataset {
            sample_id: rec.sample_id.clone(),
            message: format!("missing file {rel}"),
        })
    };
    let hr_target = rec.hr.as_ref().map(png).transpose()?;
    let frames = rec.frames.iter().map(png).collect::<Result<Vec<_>>>()?;
    let true_shifts_lr = match rec.true_shifts_lr()? {
        Some(s) => TrueShifts::Known(s),
        None => TrueShifts::Unknown,
    };
    let meta = match &rec.meta {
        Some(rel) => Some(serde_json::from_str(&json_file(rel)?).map_err(|e| named(e.into()))?),
        None => None,
    };
    let truth = match &rec.root_mask {
        Some(rel) => Some(SampleTruth {
            root_mask: png(rel)?,
            hair_masks: rec.hair_masks.iter().map(png).collect::<Result<Vec<_>>>()?,
            traits: match &rec.truth {
                Some(t) => Some(serde_json::from_str(&json_file(t)?).map_err(|e| named(e.into()))?),
                None => None,
            },
        }),
        None => None,
    };
    Ok(DatasetEntry {
        sample_id: rec.sample_id.clone(),
        split: rec.split,
        sample: BurstSample {
            hr_target,
            frames,
            true_shifts_lr,
            meta,
        },
        truth,
    })
}

/// Loads every entry listed in `dir/manifest.jsonl`, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetEntry>> {
    read_manifest(dir)?.iter().map(|r| load_record(dir, r)).collect()
}

const META_FILE: &str = "meta.json";
const REQUIRED_META: [&str; 4] = ["depth_mm", "rotation_step", "acquired_at", "mm_per_px"];

fn ingest_group(dir: &Path) -> Result<BurstSample> {
    let name = dir.display();
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Ingest(format!("{name}: malformed {META_FILE}: {e}")))?;
    for field in REQUIRED_META {
        if value.get(field).is_none() {
            return Err(Error::Ingest(format!("{name}: missing metadata field `{field}`")));
        }
    }
    let meta: CaptureMeta = serde_json::from_value(value.clone())
        .map_err(|e| Error::Ingest(format!("{name}: invalid metadata: {e}")))?;
    if !(meta.mm_per_px > 0.0) {
        return Err(Error::Ingest(format!("{name}: mm_per_px must be > 0")));
    }
    let frame_paths: Vec<PathBuf> = match value.get("frames") {
        Some(list) => {
            let names: Vec<String> = serde_json::from_value(list.clone())
                .map_err(|e| Error::Ingest(format!("{name}: `frames` must be a list of file names: {e}")))?;
            names.iter().map(|n| dir.join(n)).collect()
        }
        None => {
            let mut v: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            v.sort();
            v
        }
    };
    if frame_paths.len().is_multiple_of(2) || frame_paths.len() < 3 {
        return Err(Error::Ingest(format!(
            "{name}: group has {} frames; an odd count >= 3 is required",
            frame_paths.len()
        )));
    }
    let frames = frame_paths.iter().map(read_png).collect::<Result<Vec<_>>>()?;
    let sample = BurstSample {
        hr_target: None,
        frames,
        true_shifts_lr: TrueShifts::Unknown,
        meta: Some(meta),
    };
    sample
        .validate()
        .map_err(|e| Error::Ingest(format!("{name}: {e}")))?;
    Ok(sample)
}

/// Reads real capture groups: either `dir` itself holds a `meta.json`, or
/// each sub-directory (in name order) is one group. Returns group names with
/// their samples.
pub fn ingest_real_capture(dir: &Path) -> Result<Vec<(String, BurstSample)>> {
    let group_name = |p: &Path| {
        p.file_name()
            .map_or_else(|| "capture".to_string(), |n| n.to_string_lossy().into_owned())
    };
    if dir.join(META_FILE).is_file() {
        return Ok(vec![(group_name(dir), ingest_group(dir)?)]);
    }
    let mut groups: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    groups.sort();
    if groups.is_empty() {
        return Err(Error::Ingest(format!("{}: no capture groups found", dir.display())));
    }
    groups
        .iter()
        .map(|g| Ok((group_name(g), ingest_group(g)?)))
        .collect()
}
