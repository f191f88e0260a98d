//! On-disk layout of generated scenes: `scenes.jsonl` plus
//! `scenes/<id>/{image.png, root_mask.png, hair_<k>.png, truth.json, centerline.json}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rootsr_core::imageops::{read_png, write_png};
use rootsr_core::synthgen::{Point, RootScene, TraitTruth};
use rootsr_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCENES_MANIFEST: &str = "scenes.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub seed: u64,
    pub image: String,
    pub root_mask: String,
    pub hair_masks: Vec<String>,
    pub truth: String,
    pub centerline: String,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn persist_scenes(scenes: &[(String, u64, RootScene)], dir: &Path) -> Result<Vec<SceneRecord>> {
    let mut records = Vec::with_capacity(scenes.len());
    for (id, seed, scene) in scenes {
        let rel = format!("scenes/{id}");
        let sdir = dir.join(&rel);
        fs::create_dir_all(&sdir).map_err(io(&sdir))?;
        write_png(sdir.join("image.png"), &scene.image)?;
        write_png(sdir.join("root_mask.png"), &scene.root_mask)?;
        let mut hair_masks = Vec::new();
        for (k, m) in scene.hair_masks.iter().enumerate() {
            write_png(sdir.join(format!("hair_{k}.png")), m)?;
            hair_masks.push(format!("{rel}/hair_{k}.png"));
        }
        write_json(&sdir.join("truth.json"), &scene.truth)?;
        write_json(&sdir.join("centerline.json"), &scene.centerline)?;
        records.push(SceneRecord {
            scene_id: id.clone(),
            seed: *seed,
            image: format!("{rel}/image.png"),
            root_mask: format!("{rel}/root_mask.png"),
            hair_masks,
            truth: format!("{rel}/truth.json"),
            centerline: format!("{rel}/centerline.json"),
        });
    }
    let path = dir.join(SCENES_MANIFEST);
    let mut out = fs::File::create(&path).map_err(io(&path))?;
    for r in &records {
        writeln!(out, "{}", serde_json::to_string(r)?).map_err(io(&path))?;
    }
    Ok(records)
}

pub fn load_scenes(dir: &Path) -> Result<Vec<(String, RootScene)>> {
    let path = dir.join(SCENES_MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let mut scenes = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: SceneRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let ctx = |e: Error| Error::Dataset {
            sample_id: r.scene_id.clone(),
            message: e.to_string(),
        };
        let image = read_png(dir.join(&r.image)).map_err(ctx)?;
        let root_mask = read_png(dir.join(&r.root_mask)).map_err(ctx)?.to_grayscale();
        let hair_masks = r
            .hair_masks
            .iter()
            .map(|p| read_png(dir.join(p)).map(|m| m.to_grayscale()))
            .collect::<Result<Vec<_>>>()
            .map_err(ctx)?;
        let truth: TraitTruth = read_json(&dir.join(&r.truth)).map_err(ctx)?;
        let centerline: Vec<Point> = read_json(&dir.join(&r.centerline)).map_err(ctx)?;
        scenes.push((
            r.scene_id.clone(),
            RootScene {
                image,
                root_mask,
                hair_masks,
                truth,
                centerline,
                hairs: Vec::new(),
            },
        ));
    }
    Ok(scenes)
}
