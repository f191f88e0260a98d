//! Dataset-level quality report: per-image rows, arithmetic means, a text
//! table and a JSON form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use super::{brisque_features, mse, psnr, ssim, SvrModel};
use crate::error::{Error, Result};
use crate::imageops::{read_png, ImageBuffer};
use crate::parallel::Exec;

fn psnr_ser<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(p) if p.is_infinite() => s.serialize_str("inf"),
        Some(p) => s.serialize_f64(*p),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageRow {
    pub name: String,
    pub mse: Option<f64>,
    #[serde(serialize_with = "psnr_ser")]
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub brisque: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub full_reference: bool,
    pub rows: Vec<ImageRow>,
    pub evaluated: usize,
    pub mean_mse: Option<f64>,
    /// Mean over finite PSNR values only.
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub mean_brisque: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x:.prec$}"),
        None => "-".to_string(),
    }
}

impl QualityReport {
    /// Builds the report from rows; infinite PSNR values are left out of
    /// the mean and noted in `warnings`.
    pub fn from_rows(rows: Vec<ImageRow>, full_reference: bool, mut warnings: Vec<String>) -> Self {
        let inf = rows.iter().filter(|r| r.psnr_db.is_some_and(f64::is_infinite)).count();
        if inf > 0 {
            warnings.push(format!("{inf} identical pair(s) with infinite PSNR excluded from the PSNR mean"));
        }
        QualityReport {
            full_reference,
            evaluated: rows.len(),
            mean_mse: mean(rows.iter().filter_map(|r| r.mse)),
            mean_psnr_db: mean(rows.iter().filter_map(|r| r.psnr_db).filter(|p| p.is_finite())),
            mean_ssim: mean(rows.iter().filter_map(|r| r.ssim)),
            mean_brisque: mean(rows.iter().filter_map(|r| r.brisque)),
            rows,
            warnings,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        if self.full_reference {
            let _ = writeln!(s, "{:<28} {:>12} {:>10} {:>8} {:>9}", "image", "MSE", "PSNR(dB)", "SSIM", "BRISQUE");
            for r in &self.rows {
                let _ = writeln!(
                    s,
                    "{:<28} {:>12} {:>10} {:>8} {:>9}",
                    r.name,
                    fmt_opt(r.mse, 4),
                    fmt_opt(r.psnr_db, 3),
                    fmt_opt(r.ssim, 4),
                    fmt_opt(r.brisque, 3)
                );
            }
            let _ = writeln!(
                s,
                "{:<28} {:>12} {:>10} {:>8} {:>9}",
                format!("mean ({})", self.evaluated),
                fmt_opt(self.mean_mse, 4),
                fmt_opt(self.mean_psnr_db, 3),
                fmt_opt(self.mean_ssim, 4),
                fmt_opt(self.mean_brisque, 3)
            );
        } else {
            let _ = writeln!(s, "{:<28} {:>9}", "image", "BRISQUE");
            for r in &self.rows {
                let _ = writeln!(s, "{:<28} {:>9}", r.name, fmt_opt(r.brisque, 3));
            }
            let _ = writeln!(
                s,
                "{:<28} {:>9}",
                format!("mean ({})", self.evaluated),
                fmt_opt(self.mean_brisque, 3)
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    Ok(v)
}

fn score_row(
    name: String,
    out: &ImageBuffer,
    reference: Option<&ImageBuffer>,
    model: Option<&SvrModel>,
) -> Result<ImageRow> {
    let (m, p, s) = match reference {
        Some(r) => (Some(mse(out, r)?), Some(psnr(out, r)?), Some(ssim(out, r)?)),
        None => (None, None, None),
    };
    let brisque = match model {
        Some(model) => Some(model.score(&brisque_features(out)?)?),
        None => None,
    };
    Ok(ImageRow {
        name,
        mse: m,
        psnr_db: p,
        ssim: s,
        brisque,
    })
}

/// Scores every PNG in `outputs` against the same-named file in `refs`
/// (when given) and with the BRISQUE model (when given). Files without a
/// match or that fail to score are skipped with a warning.
pub fn evaluate_dataset(
    outputs: &Path,
    refs: Option<&Path>,
    model: Option<&SvrModel>,
    exec: Exec,
) -> Result<QualityReport> {
    let files = png_files(outputs)?;
    let mut warnings = Vec::new();
    if model.is_none() {
        warnings.push("no brisque model supplied; brisque scores unavailable".to_string());
    }
    let mut jobs = Vec::new();
    for f in files {
        let name = f.file_name().expect("file").to_string_lossy().into_owned();
        let r = match refs {
            Some(dir) => {
                let rp = dir.join(&name);
                if !rp.is_file() {
                    warnings.push(format!("{name}: no matching reference, skipped"));
                    continue;
                }
                Some(rp)
            }
            None => None,
        };
        jobs.push((name, f, r));
    }
    let results = exec.map(&jobs, |(name, out, r)| -> Result<ImageRow> {
        let out = read_png(out)?;
        let reference = r.as_ref().map(read_png).transpose()?;
        score_row(name.clone(), &out, reference.as_ref(), model)
    });
    let mut rows = Vec::new();
    for ((name, _, _), res) in jobs.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => warnings.push(format!("{name}: {e}, skipped")),
        }
    }
    Ok(QualityReport::from_rows(rows, refs.is_some(), warnings))
}
