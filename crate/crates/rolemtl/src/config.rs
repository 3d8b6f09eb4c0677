//! Run configuration: one JSON file, defaults for everything, `--set`
//! overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rolemtl_core::metrics::StabilityConfig;
use rolemtl_core::model::ModelConfig;
use rolemtl_core::mtl::ArchKind;
use rolemtl_core::train::OptimConfig;

use crate::error::{read_to_string, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream. Copied into `optim.seed`.
    pub seed: u64,
    pub arch: ArchConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub cv: CvConfig,
    pub stability: StabilityConfig,
    pub gradcheck: GradCheckConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub kind: ArchKind,
    /// H: 1-based layer read by the SRL head.
    pub tap_layer: usize,
    /// ASP: gradient-reversal scale.
    pub adv_scale: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { kind: ArchKind::Fs, tap_layer: 2, adv_scale: 0.1 }
    }
}

/// Input and output locations. Relative paths in a config file are taken
/// relative to that file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub orl_json: Option<PathBuf>,
    pub srl_train: Option<PathBuf>,
    pub srl_dev: Option<PathBuf>,
    pub srl_test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            orl_json: None,
            srl_train: None,
            srl_dev: None,
            srl_test: None,
            embeddings: None,
            output_dir: PathBuf::from("runs"),
        }
    }
}

const INPUT_FIELDS: [&str; 5] = ["orl_json", "srl_train", "srl_dev", "srl_test", "embeddings"];

impl DataConfig {
    fn inputs(&self) -> [(&'static str, &Option<PathBuf>); 5] {
        [
            ("orl_json", &self.orl_json),
            ("srl_train", &self.srl_train),
            ("srl_dev", &self.srl_dev),
            ("srl_test", &self.srl_test),
            ("embeddings", &self.embeddings),
        ]
    }

    /// The path of a required input, or a config error naming the field.
    pub fn require(&self, field: &str) -> Result<&Path> {
        self.inputs()
            .into_iter()
            .find(|(n, _)| *n == field)
            .and_then(|(_, p)| p.as_deref())
            .ok_or_else(|| Error::Config(format!("data.{field} is required")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub k: usize,
    /// Documents held out as the dev set, the same for every fold and seed.
    pub dev_count: usize,
    /// The fold used by `train` and `evaluate`.
    pub fold: usize,
    /// Training seeds; each fold is trained once per seed.
    pub seeds: Vec<u64>,
    /// Architectures compared by `crossval`; the first is the reference for
    /// significance markers.
    pub archs: Vec<ArchKind>,
    pub significance_level: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 4,
            dev_count: 100,
            fold: 0,
            seeds: vec![1, 2],
            archs: vec![ArchKind::Stl, ArchKind::Fs, ArchKind::H, ArchKind::Sp, ArchKind::Asp],
            significance_level: 0.05,
        }
    }
}

/// Finite-difference check of a freshly initialized reduced-width model on
/// random data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub arch: ArchKind,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub length: usize,
    pub vocab_size: usize,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            arch: ArchKind::Stl,
            embedding_dim: 4,
            hidden: 8,
            length: 5,
            vocab_size: 12,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            arch: ArchConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig { seed: 1, ..OptimConfig::default() },
            data: DataConfig::default(),
            cv: CvConfig::default(),
            stability: StabilityConfig::default(),
            gradcheck: GradCheckConfig::default(),
        }
    }
}

/// Recursively writes `overlay` into `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `dotted.key=value` override. The value is read as JSON when
/// it parses and as a plain string otherwise.
fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set {assignment:?}: expected key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: {} is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("--set {key}: unknown key")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj.get_mut(*part).ok_or_else(|| Error::Config(format!("--set {key}: unknown key")))?;
    }
    unreachable!("split yields at least one part")
}

fn rebase_paths(file_value: &mut Value, dir: &Path) {
    let Some(data) = file_value.get_mut("data").and_then(Value::as_object_mut) else { return };
    for field in INPUT_FIELDS.iter().chain(&["output_dir"]) {
        if let Some(Value::String(p)) = data.get_mut(*field) {
            if Path::new(p.as_str()).is_relative() {
                *p = dir.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then each `--set`, then `seed` if given.
    pub fn resolve(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default()).expect("plain data");
        if let Some(path) = file {
            let text = read_to_string(path).map_err(|e| Error::Config(e.to_string()))?;
            let mut v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), e.line())))?;
            if !v.is_object() {
                return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
            }
            rebase_paths(&mut v, path.parent().unwrap_or(Path::new("")));
            merge(&mut value, v);
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        if let Some(seed) = seed {
            value["seed"] = Value::from(seed);
        }
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.optim.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: rolemtl_core::Error| Error::Config(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.optim.validate().map_err(wrap)?;
        if self.arch.kind == ArchKind::H && !(1..=self.model.layers).contains(&self.arch.tap_layer) {
            return Err(Error::Config(format!(
                "arch.tap_layer must lie in 1..={}, got {}",
                self.model.layers, self.arch.tap_layer
            )));
        }
        if !(self.arch.adv_scale >= 0.0) {
            return Err(Error::Config("arch.adv_scale must be nonnegative".into()));
        }
        if self.cv.k < 2 || self.cv.fold >= self.cv.k {
            return Err(Error::Config(format!("cv.fold must be below cv.k (k = {}, fold = {})", self.cv.k, self.cv.fold)));
        }
        if self.cv.seeds.is_empty() || self.cv.archs.is_empty() {
            return Err(Error::Config("cv.seeds and cv.archs must be nonempty".into()));
        }
        if !(self.cv.significance_level > 0.0 && self.cv.significance_level < 1.0) {
            return Err(Error::Config("cv.significance_level must lie in (0, 1)".into()));
        }
        let st = &self.stability;
        if st.trials == 0 || st.hard_max >= st.easy_min || st.easy_min > st.trials {
            return Err(Error::Config("stability needs hard_max < easy_min <= trials".into()));
        }
        for (field, path) in self.data.inputs() {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("data.{field}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}
