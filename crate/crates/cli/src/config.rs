//! Run configuration files.
//!
//! The format is a flat INI dialect: `[section]` headers, `key = value`
//! lines, and comments starting with `#` or `;`. Keys before the first header
//! belong to the section `""`. Every key must be known to the command that
//! reads the file; unknown keys are rejected so typos cannot silently fall
//! back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use tnn_core::checkpoint::decode_blocks;
use tnn_core::data::{ImageLayout, NormalizationSpec};
use tnn_core::{Activation, BlockSpec, Init, Objective, Reduction, TProductPath, TransformKind};

/// Parsed sections of a configuration file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        ini.sections.entry(section.clone()).or_default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    bail!("line {line_no}: empty section name");
                }
                section = name.to_string();
                ini.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                bail!("line {line_no}: empty key");
            }
            let value = strip_comment(value).trim().to_string();
            let entries = ini.sections.get_mut(&section).expect("section exists");
            if let Some(prev) = entries.get(key) {
                bail!(
                    "line {line_no}: duplicate key `{key}` (first set on line {})",
                    prev.line
                );
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value,
                    line: line_no,
                },
            );
        }
        Ok(ini)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Ini::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)?
            .get(key)
            .map(|e| e.value.as_str())
    }

    /// Sets or replaces a value.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(
                key.to_string(),
                Entry {
                    value: value.into(),
                    line: 0,
                },
            );
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("[{section}] {key} = {v:?}: {e}")),
        }
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(section, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parsed(section, key)?
            .ok_or_else(|| anyhow!("missing required key [{section}] {key}"))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|e| anyhow!("[{section}] {key}: {p:?}: {e}"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on any key outside `allowed` (`(section, key)` pairs).
    fn check_keys(&self, allowed: &[(&str, &str)]) -> Result<()> {
        for (section, entries) in &self.sections {
            for (key, entry) in entries {
                if !allowed.iter().any(|(s, k)| s == section && k == key) {
                    bail!("line {}: unknown key [{section}] {key}", entry.line);
                }
            }
        }
        Ok(())
    }
}

fn strip_comment(value: &str) -> &str {
    // inline comments need a preceding space so values may contain `#`
    [" #", " ;"]
        .iter()
        .filter_map(|m| value.find(m))
        .min()
        .map_or(value, |i| &value[..i])
}

/// Supported image datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            _ => bail!("unknown dataset {s:?} (expected mnist or cifar10)"),
        }
    }

    pub fn default_normalization(self) -> NormalizationSpec {
        match self {
            DatasetKind::Mnist => NormalizationSpec::mnist(),
            DatasetKind::Cifar10 => NormalizationSpec::cifar10(),
        }
    }
}

/// Where a dataset lives and how samples are laid out.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    /// Explicit directory; otherwise `$TNN_DATA_DIR/<dataset>` or
    /// `data/<dataset>`.
    pub dir: Option<PathBuf>,
    pub layout: ImageLayout,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub normalization: NormalizationSpec,
}

/// Name of the environment variable holding the dataset root.
pub const DATA_DIR_ENV: &str = "TNN_DATA_DIR";

impl DataConfig {
    pub fn resolved_dir(&self) -> PathBuf {
        if let Some(d) = &self.dir {
            return d.clone();
        }
        let root = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        root.join(self.dataset.name())
    }
}

/// Architecture and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub transform: TransformKind,
    pub product_path: TProductPath,
    pub blocks: Vec<BlockSpec>,
    pub classifier_bias: bool,
    pub init: Init,
    pub objective: Objective,
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    /// Weight of the smoothness regularizer; 0 disables it.
    pub smoothness: f64,
    /// Step size inside the regularizer.
    pub smoothness_h: f64,
}

/// Everything `train` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
}

const RUN_KEYS: &[(&str, &str)] = &[
    ("run", "name"),
    ("run", "seed"),
    ("run", "epochs"),
    ("run", "output_dir"),
    ("data", "dataset"),
    ("data", "dir"),
    ("data", "layout"),
    ("data", "train_limit"),
    ("data", "test_limit"),
    ("data", "mean"),
    ("data", "std"),
    ("model", "transform"),
    ("model", "product_path"),
    ("model", "blocks"),
    ("model", "classifier_bias"),
    ("model", "init"),
    ("model", "objective"),
    ("model", "reduction"),
    ("optim", "learning_rate"),
    ("optim", "momentum"),
    ("optim", "batch_size"),
    ("optim", "eval_batch_size"),
    ("optim", "smoothness"),
    ("optim", "smoothness_h"),
];

pub fn parse_transform(s: &str) -> Result<TransformKind> {
    match s {
        "circulant" | "fft" => Ok(TransformKind::Circulant),
        "dct" | "orthogonal" => Ok(TransformKind::Orthogonal),
        "identity" | "facewise" => Ok(TransformKind::Identity),
        _ => bail!("unknown transform {s:?} (expected circulant, dct or identity)"),
    }
}

fn parse_path(s: &str) -> Result<TProductPath> {
    match s {
        "direct" => Ok(TProductPath::Direct),
        "fourier" => Ok(TProductPath::Fourier),
        _ => bail!("unknown product_path {s:?} (expected direct or fourier)"),
    }
}

fn parse_init(s: &str) -> Result<Init> {
    match s {
        "gaussian" => Ok(Init::Gaussian),
        "normalized" => Ok(Init::NormalizedGaussian),
        _ => bail!("unknown init {s:?} (expected gaussian or normalized)"),
    }
}

fn parse_objective(ini: &Ini, default: &str) -> Result<Objective> {
    let reduction = match ini.get("model", "reduction").unwrap_or("sum") {
        "sum" => Reduction::Sum,
        "mean" => Reduction::Mean,
        r => bail!("unknown reduction {r:?} (expected sum or mean)"),
    };
    match ini.get("model", "objective").unwrap_or(default) {
        "cross_entropy" => Ok(Objective::CrossEntropy(reduction)),
        "least_squares" => Ok(Objective::LeastSquares(reduction)),
        o => bail!("unknown objective {o:?} (expected cross_entropy or least_squares)"),
    }
}

fn parse_bool(ini: &Ini, section: &str, key: &str, default: bool) -> Result<bool> {
    match ini.get(section, key) {
        None => Ok(default),
        Some("true") | Some("yes") | Some("1") => Ok(true),
        Some("false") | Some("no") | Some("0") => Ok(false),
        Some(v) => bail!("[{section}] {key} = {v:?} is not a boolean"),
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be positive, got {v}");
    }
    Ok(())
}

fn check_blocks(blocks: &[BlockSpec]) -> Result<()> {
    for b in blocks {
        match *b {
            BlockSpec::Linear { out: 0, .. } => bail!("linear block needs out >= 1"),
            BlockSpec::Residual { steps, h, .. } | BlockSpec::Leapfrog { steps, h, .. } => {
                if steps == 0 {
                    bail!("multi-step blocks need steps >= 1");
                }
                if !(h.is_finite() && h >= 0.0) {
                    bail!("step size h must be finite and non-negative, got {h}");
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Step size of the first multi-step block, used as the regularizer default.
fn first_step_size(blocks: &[BlockSpec]) -> Option<f64> {
    blocks.iter().find_map(|b| match *b {
        BlockSpec::Residual { h, .. } | BlockSpec::Leapfrog { h, .. } => Some(h),
        BlockSpec::Linear { .. } => None,
    })
}

impl RunConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self> {
        ini.check_keys(RUN_KEYS)?;
        let dataset = DatasetKind::parse(ini.get("data", "dataset").unwrap_or("mnist"))?;
        let layout = match ini.get("data", "layout") {
            None => ImageLayout::Slices,
            Some(s) => ImageLayout::parse(s).ok_or_else(|| {
                anyhow!("unknown layout {s:?} (expected slices, transposed or vectorized)")
            })?,
        };
        let base = dataset.default_normalization();
        let means = ini
            .list::<f64>("data", "mean")?
            .unwrap_or(base.means.clone());
        let stds = ini.list::<f64>("data", "std")?.unwrap_or(base.stds.clone());
        let normalization = NormalizationSpec::new(means, stds)?;
        if normalization.means.len() != base.means.len() {
            bail!(
                "{} needs {} normalization channels, got {}",
                dataset.name(),
                base.means.len(),
                normalization.means.len()
            );
        }
        let data = DataConfig {
            dataset,
            dir: ini.get("data", "dir").map(PathBuf::from),
            layout,
            train_limit: ini.parsed("data", "train_limit")?,
            test_limit: ini.parsed("data", "test_limit")?,
            normalization,
        };
        if data.train_limit == Some(0) || data.test_limit == Some(0) {
            bail!("sample limits must be at least 1");
        }

        let blocks = decode_blocks(ini.get("model", "blocks").unwrap_or(""))?;
        check_blocks(&blocks)?;
        let model = ModelConfig {
            transform: parse_transform(ini.get("model", "transform").unwrap_or("dct"))?,
            product_path: parse_path(ini.get("model", "product_path").unwrap_or("direct"))?,
            classifier_bias: parse_bool(ini, "model", "classifier_bias", false)?,
            init: parse_init(ini.get("model", "init").unwrap_or("gaussian"))?,
            objective: parse_objective(ini, "cross_entropy")?,
            blocks,
        };

        let optim = OptimConfig {
            learning_rate: ini.required("optim", "learning_rate")?,
            momentum: ini.or("optim", "momentum", 0.0)?,
            batch_size: ini.or("optim", "batch_size", 100)?,
            eval_batch_size: ini.or("optim", "eval_batch_size", 500)?,
            smoothness: ini.or("optim", "smoothness", 0.0)?,
            smoothness_h: match ini.parsed("optim", "smoothness_h")? {
                Some(h) => h,
                None => first_step_size(&model.blocks).unwrap_or(1.0),
            },
        };
        positive("learning_rate", optim.learning_rate)?;
        if !(0.0..1.0).contains(&optim.momentum) {
            bail!("momentum must lie in [0, 1), got {}", optim.momentum);
        }
        if optim.batch_size == 0 || optim.eval_batch_size == 0 {
            bail!("batch sizes must be at least 1");
        }
        if !(optim.smoothness.is_finite() && optim.smoothness >= 0.0) {
            bail!("smoothness must be non-negative, got {}", optim.smoothness);
        }
        if optim.smoothness > 0.0 {
            positive("smoothness_h", optim.smoothness_h)?;
        }

        let name = ini.get("run", "name").unwrap_or("run").to_string();
        Ok(RunConfig {
            output_dir: ini
                .get("run", "output_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs").join(&name)),
            name,
            seed: ini.or("run", "seed", 0)?,
            epochs: ini.or("run", "epochs", 1)?,
            data,
            model,
            optim,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        RunConfig::from_ini(&Ini::read(path)?)
            .with_context(|| format!("in config {}", path.display()))
    }
}

/// Settings of the three-spheres stability experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpheresConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub counts: [usize; 3],
    pub steps: usize,
    /// Forward-Euler step sizes, one run each.
    pub euler_h: Vec<f64>,
    pub leapfrog_h: f64,
    pub activation: Activation,
    pub transform: TransformKind,
    pub classifier_bias: bool,
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub smoothness: f64,
    pub snapshots: bool,
}

const SPHERES_KEYS: &[(&str, &str)] = &[
    ("run", "name"),
    ("run", "seeds"),
    ("run", "epochs"),
    ("run", "output_dir"),
    ("data", "counts"),
    ("model", "steps"),
    ("model", "euler_h"),
    ("model", "leapfrog_h"),
    ("model", "activation"),
    ("model", "transform"),
    ("model", "classifier_bias"),
    ("model", "objective"),
    ("model", "reduction"),
    ("optim", "learning_rate"),
    ("optim", "momentum"),
    ("optim", "batch_size"),
    ("optim", "smoothness"),
    ("output", "snapshots"),
];

impl SpheresConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self> {
        ini.check_keys(SPHERES_KEYS)?;
        let counts = ini
            .list::<usize>("data", "counts")?
            .unwrap_or(tnn_core::data::SPHERE_COUNTS.to_vec());
        let counts: [usize; 3] = counts
            .try_into()
            .map_err(|_| anyhow!("[data] counts needs exactly three class counts"))?;
        if counts.iter().sum::<usize>() == 0 {
            bail!("[data] counts must request at least one point");
        }
        let activation = match ini.get("model", "activation") {
            None => Activation::Tanh,
            Some(s) => Activation::parse(s).ok_or_else(|| anyhow!("unknown activation {s:?}"))?,
        };
        let cfg = SpheresConfig {
            seeds: ini.list("run", "seeds")?.unwrap_or(vec![0]),
            output_dir: ini
                .get("run", "output_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs/spheres")),
            counts,
            steps: ini.or("model", "steps", 32)?,
            euler_h: ini.list("model", "euler_h")?.unwrap_or(vec![0.5, 0.25]),
            leapfrog_h: ini.or("model", "leapfrog_h", 1.0)?,
            activation,
            transform: parse_transform(ini.get("model", "transform").unwrap_or("circulant"))?,
            classifier_bias: parse_bool(ini, "model", "classifier_bias", true)?,
            objective: parse_objective(ini, "least_squares")?,
            epochs: ini.or("run", "epochs", 50)?,
            batch_size: ini.or("optim", "batch_size", 10)?,
            learning_rate: ini.or("optim", "learning_rate", 0.01)?,
            momentum: ini.or("optim", "momentum", 0.0)?,
            smoothness: ini.or("optim", "smoothness", 0.0)?,
            snapshots: parse_bool(ini, "output", "snapshots", true)?,
        };
        if cfg.seeds.is_empty() {
            bail!("[run] seeds must list at least one seed");
        }
        if cfg.steps == 0 || cfg.batch_size == 0 {
            bail!("steps and batch_size must be at least 1");
        }
        for &h in cfg.euler_h.iter().chain([&cfg.leapfrog_h]) {
            if !(h.is_finite() && h >= 0.0) {
                bail!("step sizes must be finite and non-negative, got {h}");
            }
        }
        positive("learning_rate", cfg.learning_rate)?;
        if !(0.0..1.0).contains(&cfg.momentum) {
            bail!("momentum must lie in [0, 1), got {}", cfg.momentum);
        }
        if !(cfg.smoothness.is_finite() && cfg.smoothness >= 0.0) {
            bail!("smoothness must be non-negative, got {}", cfg.smoothness);
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        SpheresConfig::from_ini(&Ini::read(path)?)
            .with_context(|| format!("in config {}", path.display()))
    }
}
