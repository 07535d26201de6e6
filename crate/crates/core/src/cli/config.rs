//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 1
//!
//! [model]
//! height = 16
//! width = 16
//!
//! [drop]
//! variant = "dropkey"
//! base_ratio = 0.3
//! schedule = "down"
//!
//! [data]
//! source = "shapes"
//! ```
//!
//! Every key is optional; missing keys take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{ShapesConfig, TrainConfig};
use crate::masks::{DropConfig, DropVariant, MaskError, Schedule, Structure};
use crate::vit::TinyViTConfig;
use crate::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

impl ConfigError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    epochs: usize,
    batch_size: usize,
    lr: f64,
    warmup_steps: usize,
    weight_decay: f64,
    finetune_epochs: usize,
    finetune_lr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            finetune_epochs: t.finetune_epochs,
            finetune_lr: t.finetune_lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DropSection {
    variant: DropVariant,
    base_ratio: f64,
    schedule: Schedule,
    structure: Structure,
    window: usize,
}

impl Default for DropSection {
    fn default() -> Self {
        let d = DropConfig::none();
        Self {
            variant: d.variant,
            base_ratio: d.base_ratio,
            schedule: d.schedule,
            structure: d.structure,
            window: d.window,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Shapes,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapesSection {
    pub classes: usize,
    pub count: usize,
    pub context: f64,
    pub noise: f64,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for ShapesSection {
    fn default() -> Self {
        let s = ShapesConfig::default();
        Self {
            classes: s.classes,
            count: s.count,
            context: s.context,
            noise: s.noise,
            distractors: s.distractors,
            seed: s.seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdxSection {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Separate validation files; without them the training files are split.
    pub val_images: Option<PathBuf>,
    pub val_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Fraction held out for validation when no separate set is given.
    pub val_fraction: f64,
    pub shapes: ShapesSection,
    pub idx: IdxSection,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Shapes,
            val_fraction: 0.25,
            shapes: ShapesSection::default(),
            idx: IdxSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mc_k: usize,
    pub ratios: Vec<f64>,
    pub runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mc_k: 64,
            ratios: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9],
            runs: 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: u64,
    model: TinyViTConfig,
    train: TrainSection,
    drop: DropSection,
    data: DataConfig,
    eval: EvalConfig,
}

/// A validated experiment: model, training (including the drop), data and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: TinyViTConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    /// Relative IDX paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().resolve(PathBuf::new())
    }
}

impl RawConfig {
    fn resolve(self, base_dir: PathBuf) -> ExperimentConfig {
        let drop = DropConfig {
            variant: self.drop.variant,
            base_ratio: self.drop.base_ratio,
            schedule: self.drop.schedule,
            structure: self.drop.structure,
            window: self.drop.window,
            seed: self.seed,
        };
        let t = self.train;
        ExperimentConfig {
            seed: self.seed,
            model: self.model,
            train: TrainConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                lr: t.lr,
                warmup_steps: t.warmup_steps,
                weight_decay: t.weight_decay,
                seed: self.seed,
                drop,
                finetune_epochs: t.finetune_epochs,
                finetune_lr: t.finetune_lr,
            },
            data: self.data,
            eval: self.eval,
            base_dir,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let cfg = raw.resolve(base_dir.to_path_buf());
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> crate::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(parse_config_str(&text, &base)?)
}

fn from_error(prefix: &str, e: Error) -> ConfigError {
    match e {
        Error::Invalid { field, reason } => ConfigError::validation(format!("{prefix}{field}"), reason),
        Error::NotDivisible { .. } => ConfigError::validation(format!("{prefix}patch_size"), e.to_string()),
        Error::Mask(m) => from_mask(m),
        other => ConfigError::validation(prefix.trim_end_matches('.'), other.to_string()),
    }
}

fn from_mask(e: MaskError) -> ConfigError {
    match e {
        MaskError::InvalidRatio(_) => ConfigError::validation("base_ratio", "must be in [0,1)"),
        MaskError::InvalidWindow { .. } => ConfigError::validation("window", e.to_string()),
        other => ConfigError::validation("drop", other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| from_error("model.", e))?;
        self.train.drop.validate(Some(self.model.grid())).map_err(from_mask)?;
        self.train.validate().map_err(|e| from_error("train.", e))?;
        let d = &self.data;
        if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return Err(ConfigError::validation("data.val_fraction", "must be in (0,1)"));
        }
        if d.source == DataSource::Shapes {
            if self.model.height != self.model.width || self.model.channels != 1 {
                return Err(ConfigError::validation("model", "the shapes generator makes square single-channel images"));
            }
            if d.shapes.classes != self.model.num_classes {
                return Err(ConfigError::validation("data.shapes.classes", "must equal model.num_classes"));
            }
            self.shapes().validate_settings().map_err(|e| from_error("data.shapes.", e))?;
        } else {
            if d.idx.images.is_none() || d.idx.labels.is_none() {
                return Err(ConfigError::validation("data.idx", "images and labels are required"));
            }
            if d.idx.val_images.is_some() != d.idx.val_labels.is_some() {
                return Err(ConfigError::validation("data.idx", "val_images and val_labels go together"));
            }
        }
        if self.eval.mc_k == 0 {
            return Err(ConfigError::validation("eval.mc_k", "must be at least 1"));
        }
        if self.eval.runs == 0 {
            return Err(ConfigError::validation("eval.runs", "must be at least 1"));
        }
        if let Some(r) = self.eval.ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(ConfigError::validation("eval.ratios", format!("{r} is outside [0,1)")));
        }
        Ok(())
    }

    pub fn shapes(&self) -> ShapesConfig {
        let s = &self.data.shapes;
        ShapesConfig {
            size: self.model.height,
            classes: s.classes,
            count: s.count,
            context: s.context,
            noise: s.noise,
            distractors: s.distractors,
            seed: s.seed,
        }
    }

    /// Changes the run seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.train.drop.seed = seed;
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(text, Path::new("."))
    }

    const SMALL: &str = "[model]\nheight = 16\nwidth = 16\nnum_classes = 4\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(SMALL).unwrap();
        assert_eq!(cfg.train.epochs, TrainConfig::default().epochs);
        assert_eq!(cfg.train.drop.variant, DropVariant::None);
        assert_eq!(cfg.model.patch_size, 4);
        assert_eq!(cfg.eval.ratios.len(), 6);
    }

    #[test]
    fn bad_ratio_names_the_field() {
        let err = parse(&format!("{SMALL}[drop]\nvariant = \"dropkey\"\nbase_ratio = 1.2\n")).unwrap_err();
        assert_eq!(err, ConfigError::validation("base_ratio", "must be in [0,1)"));
    }

    #[test]
    fn down_schedule_with_one_layer_is_valid() {
        let cfg = parse(&format!("{SMALL}depth = 1\n[drop]\nvariant = \"dropkey\"\nbase_ratio = 0.3\nschedule = \"down\"\n")).unwrap();
        assert_eq!(crate::masks::layer_ratio(&cfg.train.drop, 0, 1), 0.3);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = parse("seed = 1\n[model]\nheight = \"tall\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err:?}");
        let err = parse("seed = 1\n\n[drop]\nvariant = \"sometimes\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 4, .. }), "{err:?}");
        let err = parse("[train]\nepochz = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn validation_errors() {
        let err = parse("[model]\nheight = 30\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "model.patch_size"), "{err:?}");
        let err = parse(&format!("{SMALL}[train]\nepochs = 0\n")).unwrap_err();
        assert_eq!(err, ConfigError::validation("train.epochs", "must be at least 1"));
        let err = parse(&format!("{SMALL}[drop]\nstructure = \"block\"\nwindow = 9\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "window"));
    }

    #[test]
    fn seed_flows_everywhere() {
        let mut cfg = parse(&format!("seed = 7\n{SMALL}")).unwrap();
        assert_eq!((cfg.train.seed, cfg.train.drop.seed), (7, 7));
        cfg.set_seed(9);
        assert_eq!((cfg.seed, cfg.train.seed, cfg.train.drop.seed), (9, 9, 9));
    }
}
