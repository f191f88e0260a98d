//! Subcommand implementations. Each returns the text printed on success.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rootsr_core::align::{estimate_vertical_subpixel_shift, Plane};
use rootsr_core::burst::{
    crop_truth, ingest_real_capture, load_dataset, persist_dataset, random_odd_offsets, root_centred_window,
    split_for, synthesize_burst, BurstSample, DatasetEntry, Split, MANIFEST_FILE,
};
use rootsr_core::imageops::{read_png, write_png, ImageBuffer, ResizeMode};
use rootsr_core::metrics::{evaluate_dataset, SvrModel};
use rootsr_core::network::train::write_loss_csv;
use rootsr_core::network::{train, Checkpoint, TrainItem};
use rootsr_core::synthgen::generate_scenes;
use rootsr_core::traits::{analyze, union_masks, TraitReport};
use rootsr_core::{Error, Exec, Result};
use serde::Serialize;

use crate::config::{PipelineConfig, SplitSelect};
use crate::scenes::{load_scenes, persist_scenes};
use crate::{Cli, CliError, Command};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.rsr";
pub const LOSS_FILE: &str = "loss.csv";

type CmdResult = std::result::Result<String, CliError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn require(path: Option<PathBuf>, what: &str, flag: &str) -> std::result::Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Usage(format!("missing {what}: pass {flag} or set paths.{}", what.replace(' ', "_"))))
}

pub fn dispatch(cli: Cli) -> CmdResult {
    let g = cli.global;
    let cfg = PipelineConfig::resolve(g.config.as_deref(), g.seed, &g.sets)?;
    let out = g
        .out
        .ok_or_else(|| CliError::Usage("missing --out DIR".into()))?;
    fs::create_dir_all(&out).map_err(io(&out))?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml()?)?;
    let exec = Exec::default();
    let p = cfg.paths.clone();
    match cli.command {
        Command::GenData => gen_data(&cfg, &out, exec),
        Command::MakeBurst { scenes } => make_burst(&cfg, &require(scenes.or(p.scenes), "scenes", "--scenes")?, &out),
        Command::Align { dataset } => align(&cfg, &require(dataset.or(p.dataset), "dataset", "--dataset")?, &out),
        Command::Train { dataset } => train_cmd(&cfg, &require(dataset.or(p.dataset), "dataset", "--dataset")?, &out, exec),
        Command::Enhance { dataset, checkpoint } => enhance(
            &cfg,
            &require(dataset.or(p.dataset), "dataset", "--dataset")?,
            &require(checkpoint.or(p.checkpoint), "checkpoint", "--checkpoint")?,
            &out,
            exec,
        ),
        Command::Baseline { dataset } => baseline(&cfg, &require(dataset.or(p.dataset), "dataset", "--dataset")?, &out),
        Command::Eval { outputs, refs } => eval(
            &cfg,
            &require(outputs.or(p.outputs), "outputs", "--outputs")?,
            refs.or(p.refs).as_deref(),
            &out,
            exec,
        ),
        Command::Analyze {
            dataset,
            root_mask,
            hair_mask,
        } => {
            let root_mask = root_mask.or(p.root_mask);
            let hair_mask = hair_mask.or(p.hair_mask);
            match (dataset.or(p.dataset), root_mask, hair_mask) {
                (_, Some(r), Some(h)) => analyze_masks(&cfg, &r, &h, &out),
                (Some(d), None, None) => analyze_dataset(&cfg, &d, &out),
                _ => Err(CliError::Usage(
                    "analyze needs --dataset DIR or both --root-mask and --hair-mask".into(),
                )),
            }
        }
    }
}

fn gen_data(cfg: &PipelineConfig, out: &Path, exec: Exec) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let seeds: Vec<u64> = (0..cfg.data.n_scenes).map(|_| rand::Rng::random(&mut rng)).collect();
    let scenes = generate_scenes(&cfg.scene, &seeds, exec)?;
    let named: Vec<_> = scenes
        .into_iter()
        .zip(&seeds)
        .enumerate()
        .map(|(i, (s, &seed))| (format!("scene_{i:05}"), seed, s))
        .collect();
    let records = persist_scenes(&named, out)?;
    let hairs: usize = named.iter().map(|(_, _, s)| s.truth.hair_count).sum();
    Ok(format!("generated {} scenes ({hairs} hairs) in {}\n", records.len(), out.display()))
}

fn make_burst(cfg: &PipelineConfig, scenes_dir: &Path, out: &Path) -> CmdResult {
    let scenes = load_scenes(scenes_dir)?;
    let d = &cfg.data;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let n = scenes.len();
    let mut entries = Vec::with_capacity(n);
    for (i, (id, scene)) in scenes.iter().enumerate() {
        let offsets = if d.random_offsets {
            random_odd_offsets(&mut rng, cfg.network.n_frames, &d.offset_magnitudes)?
        } else {
            d.offsets.clone()
        };
        let named = |e: Error| Error::Dataset {
            sample_id: id.clone(),
            message: e.to_string(),
        };
        let window = root_centred_window(scene, d.window, d.window, d.margin).map_err(named)?;
        let sample = synthesize_burst(&scene.image, window, &offsets).map_err(named)?;
        let truth = crop_truth(scene, window).map_err(named)?;
        entries.push(DatasetEntry {
            sample_id: id.clone(),
            split: split_for(i, n, d.val_fraction),
            sample,
            truth: Some(truth),
        });
    }
    let records = persist_dataset(&entries, out)?;
    let n_val = records.iter().filter(|r| r.split == Split::Val).count();
    Ok(format!(
        "wrote {} bursts ({} train, {n_val} val) to {}\n",
        records.len(),
        records.len() - n_val,
        out.display()
    ))
}

fn selected(entries: Vec<DatasetEntry>, sel: SplitSelect) -> Vec<DatasetEntry> {
    entries
        .into_iter()
        .filter(|e| match sel {
            SplitSelect::All => true,
            SplitSelect::Train => e.split == Split::Train,
            SplitSelect::Val => e.split == Split::Val,
        })
        .collect()
}

/// Dataset directory (with a manifest) or real capture groups.
fn load_bursts(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<(String, BurstSample)>> {
    if dir.join(MANIFEST_FILE).is_file() {
        Ok(selected(load_dataset(dir)?, cfg.data.split)
            .into_iter()
            .map(|e| (e.sample_id, e.sample))
            .collect())
    } else {
        ingest_real_capture(dir)
    }
}

#[derive(Serialize)]
struct FrameShift {
    frame: usize,
    dy: Option<f64>,
    dx: Option<f64>,
    true_dy: Option<f64>,
    abs_error: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct SampleShifts {
    sample_id: String,
    frames: Vec<FrameShift>,
}

#[derive(Serialize)]
struct AlignReport {
    frames: usize,
    with_truth: usize,
    within_0_25: usize,
    within_0_5: usize,
    max_abs_error: Option<f64>,
    degenerate: usize,
    samples: Vec<SampleShifts>,
}

fn align(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> CmdResult {
    let bursts = load_bursts(cfg, dataset)?;
    let mut report = AlignReport {
        frames: 0,
        with_truth: 0,
        within_0_25: 0,
        within_0_5: 0,
        max_abs_error: None,
        degenerate: 0,
        samples: Vec::new(),
    };
    for (id, sample) in &bursts {
        let r = sample.reference_index();
        let reference = Plane::from_image(sample.reference());
        let truth = sample.known_shifts();
        let mut frames = Vec::new();
        for (i, f) in sample.frames.iter().enumerate().filter(|(i, _)| *i != r) {
            report.frames += 1;
            let true_dy = truth.map(|t| t[i]);
            let fs = match estimate_vertical_subpixel_shift(&reference, &Plane::from_image(f)) {
                Ok(est) => {
                    let abs_error = true_dy.map(|t| (est.dy - t).abs());
                    if let Some(e) = abs_error {
                        report.with_truth += 1;
                        report.within_0_25 += usize::from(e <= 0.25);
                        report.within_0_5 += usize::from(e <= 0.5);
                        report.max_abs_error = Some(report.max_abs_error.map_or(e, |m: f64| m.max(e)));
                    }
                    FrameShift {
                        frame: i,
                        dy: Some(est.dy),
                        dx: Some(est.dx),
                        true_dy,
                        abs_error,
                        note: None,
                    }
                }
                Err(e @ Error::Degenerate(_)) => {
                    report.degenerate += 1;
                    FrameShift {
                        frame: i,
                        dy: None,
                        dx: None,
                        true_dy,
                        abs_error: None,
                        note: Some(e.to_string()),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            frames.push(fs);
        }
        report.samples.push(SampleShifts {
            sample_id: id.clone(),
            frames,
        });
    }
    write_json(&out.join("align.json"), &report)?;
    let mut s = format!("estimated {} frame shifts ({} degenerate)\n", report.frames, report.degenerate);
    if report.with_truth > 0 {
        s += &format!(
            "vs truth: {}/{} within 0.25 px, {}/{} within 0.5 px, max error {:.3} px\n",
            report.within_0_25,
            report.with_truth,
            report.within_0_5,
            report.with_truth,
            report.max_abs_error.unwrap_or(0.0)
        );
    }
    Ok(s)
}

#[derive(Serialize)]
struct TrainSummary {
    train_samples: usize,
    val_samples: usize,
    best_epoch: usize,
    best_val_loss: f64,
    steps: usize,
    align_fallbacks: usize,
}

fn train_cmd(cfg: &PipelineConfig, dataset: &Path, out: &Path, exec: Exec) -> CmdResult {
    let entries = load_dataset(dataset)?;
    let to_items = |split: Split| -> Result<Vec<TrainItem>> {
        entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| TrainItem::from_sample(&e.sample))
            .collect()
    };
    let (tr, va) = (to_items(Split::Train)?, to_items(Split::Val)?);
    let outcome = train(&tr, &va, &cfg.network, &cfg.train, exec)?;
    outcome.checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    let loss_path = out.join(LOSS_FILE);
    let file = fs::File::create(&loss_path).map_err(io(&loss_path))?;
    write_loss_csv(&outcome.log, std::io::BufWriter::new(file))?;
    let summary = TrainSummary {
        train_samples: tr.len(),
        val_samples: va.len(),
        best_epoch: outcome.checkpoint.epoch,
        best_val_loss: outcome.checkpoint.val_loss,
        steps: outcome.log.iter().filter(|r| r.val_loss.is_none()).count(),
        align_fallbacks: outcome.fallbacks,
    };
    write_json(&out.join("train.json"), &summary)?;
    Ok(format!(
        "trained on {} samples; best epoch {} (val loss {:.6}); checkpoint {}\n",
        summary.train_samples,
        summary.best_epoch,
        summary.best_val_loss,
        out.join(CHECKPOINT_FILE).display()
    ))
}

#[derive(Serialize)]
struct EnhanceRecord {
    sample_id: String,
    output: String,
    align_fallbacks: usize,
}

fn enhance(cfg: &PipelineConfig, dataset: &Path, checkpoint: &Path, out: &Path, exec: Exec) -> CmdResult {
    let net = Checkpoint::load(checkpoint)?.network()?;
    let bursts = load_bursts(cfg, dataset)?;
    let results = exec.try_map(&bursts, |(id, s)| net.enhance(&s.frames).map(|r| (id.clone(), r)))?;
    let mut records = Vec::new();
    for (id, (img, fallbacks)) in results {
        let name = format!("{id}.png");
        write_png(out.join(&name), &img)?;
        records.push(EnhanceRecord {
            sample_id: id,
            output: name,
            align_fallbacks: fallbacks,
        });
    }
    write_json(&out.join("enhance.json"), &records)?;
    let fallbacks: usize = records.iter().map(|r| r.align_fallbacks).sum();
    Ok(format!(
        "enhanced {} bursts into {} ({fallbacks} alignment fallbacks)\n",
        records.len(),
        out.display()
    ))
}

fn baseline(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> CmdResult {
    let bursts = load_bursts(cfg, dataset)?;
    for (mode, name) in [(ResizeMode::Bilinear, "bilinear"), (ResizeMode::Bicubic, "bicubic")] {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        for (id, s) in &bursts {
            let r = s.reference();
            let up = r.resize(2 * r.height(), 2 * r.width(), mode)?;
            let up = ImageBuffer::from_clamped(up.height(), up.width(), up.channels(), up.into_data())?;
            write_png(dir.join(format!("{id}.png")), &up)?;
        }
    }
    Ok(format!("wrote bilinear and bicubic x2 of {} bursts to {}\n", bursts.len(), out.display()))
}

fn eval(cfg: &PipelineConfig, outputs: &Path, refs: Option<&Path>, out: &Path, exec: Exec) -> CmdResult {
    let model = cfg.paths.brisque_model.as_deref().map(SvrModel::load).transpose()?;
    // A dataset directory is turned into a flat directory of HR references.
    let refs_dir = match refs {
        Some(r) if r.join(MANIFEST_FILE).is_file() => {
            let dir = out.join("refs");
            fs::create_dir_all(&dir).map_err(io(&dir))?;
            for e in load_dataset(r)? {
                if let Some(hr) = &e.sample.hr_target {
                    write_png(dir.join(format!("{}.png", e.sample_id)), hr)?;
                }
            }
            Some(dir)
        }
        other => other.map(Path::to_path_buf),
    };
    let report = evaluate_dataset(outputs, refs_dir.as_deref(), model.as_ref(), exec)?;
    let table = report.to_table();
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &table)?;
    Ok(table)
}

fn read_mask(path: &Path) -> Result<ImageBuffer> {
    Ok(read_png(path)?.to_grayscale())
}

fn analyze_masks(cfg: &PipelineConfig, root: &Path, hair: &Path, out: &Path) -> CmdResult {
    let report = analyze(&read_mask(root)?, &read_mask(hair)?, cfg.mm_per_px, cfg.min_area)?;
    let table = report.to_table();
    write_json(&out.join("traits.json"), &report)?;
    write_text(&out.join("traits.txt"), &table)?;
    Ok(table)
}

#[derive(Serialize)]
struct SampleTraits {
    sample_id: String,
    report: TraitReport,
}

fn analyze_dataset(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> CmdResult {
    let entries = selected(load_dataset(dataset)?, cfg.data.split);
    let mut rows = Vec::new();
    let mut text = String::new();
    for e in entries {
        let Some(t) = &e.truth else { continue };
        let (h, w) = (t.root_mask.height(), t.root_mask.width());
        let hair = union_masks(&t.hair_masks, h, w)?;
        let report = analyze(&t.root_mask.to_grayscale(), &hair, cfg.mm_per_px, cfg.min_area)?;
        text += &format!("{}\n{}\n", e.sample_id, report.to_table());
        rows.push(SampleTraits {
            sample_id: e.sample_id,
            report,
        });
    }
    write_json(&out.join("traits.json"), &rows)?;
    write_text(&out.join("traits.txt"), &text)?;
    Ok(text)
}
