//! Versioned pipeline configuration: TOML file, then `--seed` and
//! `--set key=value` overrides, then validation.

use std::path::{Path, PathBuf};

use rootsr_core::network::{NetworkConfig, TrainHyper};
use rootsr_core::synthgen::SceneParams;
use rootsr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelect {
    Train,
    Val,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_scenes: usize,
    pub val_fraction: f64,
    /// HR window size; LR frames are half of it.
    pub window: usize,
    /// Rows kept free above and below the window for offset crops.
    pub margin: usize,
    /// Fixed HR offsets, used unless `random_offsets` is set.
    pub offsets: Vec<i64>,
    pub random_offsets: bool,
    pub offset_magnitudes: Vec<i64>,
    /// Split processed by `align`, `enhance` and `baseline`.
    pub split: SplitSelect,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_scenes: 20,
            val_fraction: 0.2,
            window: 64,
            margin: 6,
            offsets: vec![-3, 0, 3],
            random_offsets: false,
            offset_magnitudes: vec![1, 3, 5],
            split: SplitSelect::Val,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub scenes: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
    pub refs: Option<PathBuf>,
    pub brisque_model: Option<PathBuf>,
    pub root_mask: Option<PathBuf>,
    pub hair_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub mm_per_px: f64,
    pub min_area: usize,
    pub scene: SceneParams,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainHyper,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            seed: 0,
            mm_per_px: 0.01,
            min_area: rootsr_core::traits::DEFAULT_MIN_AREA,
            scene: SceneParams::default(),
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            train: TrainHyper::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses the right-hand side of `--set`: a TOML value if it parses as one,
/// otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("{key}: malformed key")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key}: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// First key path present in `given` but absent from `known`.
fn unknown_key(given: &Table, known: &Table, prefix: &str) -> Option<String> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, known.get(k)) {
            (_, None) if !is_optional_path(&path) => return Some(path),
            (Value::Table(g), Some(Value::Table(kn))) => {
                if let Some(p) = unknown_key(g, kn, &path) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

/// Optional fields are omitted when serialized as `None`.
fn is_optional_path(path: &str) -> bool {
    path.strip_prefix("paths.").is_some_and(|f| {
        matches!(
            f,
            "scenes" | "dataset" | "checkpoint" | "outputs" | "refs" | "brisque_model" | "root_mask" | "hair_mask"
        )
    })
}

impl PipelineConfig {
    /// Loads `file` (if any), applies overrides and validates. The network
    /// seed follows `seed` unless `network.seed` is given explicitly.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>, sets: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| config_err(format!("{}: {}", p.display(), e.message())))?
            }
            None => Table::new(),
        };
        if let Some(s) = seed {
            table.insert("seed".into(), Value::Integer(s as i64));
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| config_err(format!("--set {s}: expected key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let explicit_net_seed = table
            .get("network")
            .and_then(Value::as_table)
            .is_some_and(|t| t.contains_key("seed"));

        let known = Table::try_from(PipelineConfig::default()).map_err(|e| config_err(e.to_string()))?;
        if let Some(k) = unknown_key(&table, &known, "") {
            return Err(config_err(format!("{k}: unknown key")));
        }
        let mut cfg: PipelineConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        if !explicit_net_seed {
            cfg.network.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!("version: expected {CONFIG_VERSION}, got {}", self.version)));
        }
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return Err(config_err("mm_per_px: must be > 0"));
        }
        self.scene.validate().map_err(|e| match e {
            Error::Argument(m) => Error::Config(m),
            other => other,
        })?;
        self.network.validate()?;
        self.train.validate()?;
        let d = &self.data;
        let bad = |field: &str, why: String| Err(config_err(format!("data.{field}: {why}")));
        if d.n_scenes == 0 {
            return bad("n_scenes", "must be >= 1".into());
        }
        if !(0.0..1.0).contains(&d.val_fraction) {
            return bad("val_fraction", "must be in [0, 1)".into());
        }
        if d.window < 16 || !d.window.is_multiple_of(2) {
            return bad("window", "must be even and >= 16".into());
        }
        if d.window + 2 * d.margin > self.scene.height || d.window > self.scene.width {
            return bad("window", format!("window plus margins does not fit a {}x{} scene", self.scene.height, self.scene.width));
        }
        let n = self.network.n_frames;
        if d.random_offsets {
            if d.offset_magnitudes.is_empty() || d.offset_magnitudes.iter().any(|m| *m <= 0 || m % 2 == 0) {
                return bad("offset_magnitudes", "must be positive odd integers".into());
            }
            if d.offset_magnitudes.iter().any(|m| *m as usize > d.margin) {
                return bad("offset_magnitudes", format!("must not exceed margin {}", d.margin));
            }
        } else {
            if d.offsets.len() != n {
                return bad("offsets", format!("need {n} offsets to match network.n_frames"));
            }
            if d.offsets[n / 2] != 0 || d.offsets.iter().enumerate().any(|(i, o)| i != n / 2 && o % 2 == 0) {
                return bad("offsets", "reference offset must be 0 and the others odd".into());
            }
            if d.offsets.iter().any(|o| o.unsigned_abs() as usize > d.margin) {
                return bad("offsets", format!("must not exceed margin {}", d.margin));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(sets: &[&str]) -> Result<PipelineConfig> {
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        PipelineConfig::resolve(None, None, &sets)
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = resolve(&[]).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let text = cfg.to_toml().unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_are_typed() {
        let cfg = resolve(&["train.epochs=2", "network.align_enabled=false", "paths.dataset=/tmp/x", "data.offsets=[-1,0,1]"])
            .unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert!(!cfg.network.align_enabled);
        assert_eq!(cfg.paths.dataset.as_deref(), Some(Path::new("/tmp/x")));
        assert_eq!(cfg.data.offsets, vec![-1, 0, 1]);
    }

    #[test]
    fn network_seed_follows_global_seed_unless_set() {
        let cfg = PipelineConfig::resolve(None, Some(7), &[]).unwrap();
        assert_eq!(cfg.network.seed, 7);
        let cfg = PipelineConfig::resolve(None, Some(7), &["network.seed=3".into()]).unwrap();
        assert_eq!(cfg.network.seed, 3);
    }

    #[test]
    fn errors_name_the_field() {
        let msg = |r: Result<PipelineConfig>| match r {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        };
        assert!(msg(resolve(&["train.lr=-1"])).starts_with("train.lr"));
        assert!(msg(resolve(&["network.n_frames=4"])).starts_with("network.n_frames"));
        assert!(msg(resolve(&["scene.height=10"])).starts_with("scene.height"));
        assert!(msg(resolve(&["scene.colour=1"])).starts_with("scene.colour"));
        assert!(msg(resolve(&["data.offsets=[-2,0,2]"])).starts_with("data.offsets"));
        assert!(msg(resolve(&["version=2"])).starts_with("version"));
        assert!(msg(resolve(&["nokey"])).contains("key=value"));
    }
}
