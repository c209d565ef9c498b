//! Flat `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys, repeated
//! keys and unparsable values are errors that cite the line. Relative paths
//! resolve against the directory of the config file.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::TrainError;
use crate::model::ModelConfig;
use crate::numerics::AdamWConfig;
use crate::objectives::{LossWeights, DEFAULT_MASK_RATIO};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Pretrain,
    Finetune,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Pretrain => "pretrain",
            TrainMode::Finetune => "finetune",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain" => Ok(TrainMode::Pretrain),
            "finetune" => Ok(TrainMode::Finetune),
            _ => Err(format!("expected pretrain or finetune, got {s}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LrDecay {
    #[default]
    None,
    /// Half-cosine from the base rate towards zero over `steps`.
    Cosine,
}

impl FromStr for LrDecay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(LrDecay::None),
            "cosine" => Ok(LrDecay::Cosine),
            other => Err(format!("expected none or cosine, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub tasks: Vec<String>,
    pub data: Vec<PathBuf>,
    /// Relabel datasets that are not already augmented.
    pub augment: bool,
    /// Keep only the first `max_demos` original trajectories per task.
    pub max_demos: Option<usize>,
    /// Pretraining cycles or finetuning optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub grad_clip: Option<f64>,
    pub warmup_steps: usize,
    pub lr_decay: LrDecay,
    pub weights: LossWeights,
    pub mask_ratio: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pretrain,
            tasks: Vec::new(),
            data: Vec::new(),
            augment: true,
            max_demos: None,
            steps: 1000,
            batch_size: 64,
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            grad_clip: Some(1.0),
            warmup_steps: 0,
            lr_decay: LrDecay::None,
            weights: LossWeights::default(),
            mask_ratio: DEFAULT_MASK_RATIO,
            eval_every: 0,
            eval_episodes: 20,
            seed: 0,
            out: None,
            init: None,
            log: None,
        }
    }
}

/// Documented keys with their meaning, in the order `describe` prints them.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "pretrain | finetune"),
    (
        "tasks",
        "comma-separated task ids; finetune takes exactly one",
    ),
    (
        "data",
        "comma-separated dataset paths (JSON Lines with .tasks.json sidecar)",
    ),
    (
        "augment",
        "true | false: relabel datasets that are not yet augmented (default true)",
    ),
    (
        "max_demos",
        "keep the first N original demos per task; 0 keeps all (default 0)",
    ),
    (
        "steps",
        "pretraining cycles or finetuning steps (default 1000)",
    ),
    ("batch_size", "windows per batch (default 64)"),
    ("max_timesteps", "window length K (default 100)"),
    ("n_layers", "transformer blocks (default 8)"),
    ("n_heads", "attention heads (default 4)"),
    ("d_model", "embedding width (default 128)"),
    ("dropout", "dropout rate during training (default 0.1)"),
    ("lr", "AdamW learning rate (default 1e-4)"),
    (
        "weight_decay",
        "AdamW decoupled weight decay (default 1e-4)",
    ),
    ("beta1", "AdamW first-moment decay (default 0.9)"),
    ("beta2", "AdamW second-moment decay (default 0.999)"),
    ("eps", "AdamW epsilon (default 1e-8)"),
    (
        "grad_clip",
        "global gradient-norm clip; 0 disables (default 1.0)",
    ),
    (
        "warmup_steps",
        "linear learning-rate warmup in optimizer steps (default 0)",
    ),
    (
        "lr_decay",
        "none | cosine: learning-rate decay over the run (default none)",
    ),
    ("weight.action", "action-prediction loss weight (default 1)"),
    (
        "weight.dynamics",
        "forward-dynamics loss weight (default 1)",
    ),
    (
        "weight.time_to_goal",
        "time-to-goal loss weight (default 1)",
    ),
    (
        "weight.reconstruction",
        "sequence-reconstruction loss weight (default 1)",
    ),
    (
        "mask_ratio",
        "reconstruction mask probability in (0,1) (default 0.15)",
    ),
    (
        "eval_every",
        "evaluate every N steps on bundled environments; 0 disables (default 0)",
    ),
    (
        "eval_episodes",
        "episodes per periodic evaluation (default 20)",
    ),
    ("seed", "random seed (default 0)"),
    ("out", "checkpoint output path"),
    ("init", "checkpoint to initialize from (finetune)"),
    ("log", "JSON Lines training log path"),
];

pub fn describe_keys() -> String {
    let mut s = String::new();
    for (k, v) in KEYS {
        let _ = writeln!(s, "  {k:<22} {v}");
    }
    s
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, TrainError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| TrainError::Config {
        line,
        key: key.into(),
        msg: e.to_string(),
    })
}

impl TrainConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(TrainError::Config {
                    line,
                    key: trimmed.into(),
                    msg: "expected key = value".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(TrainError::Config {
                    line,
                    key: key.into(),
                    msg: "key given twice".into(),
                });
            }
            seen.push(key.to_string());
            let list = |v: &str| -> Vec<String> {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            };
            match key {
                "mode" => cfg.mode = parse_value(line, key, value)?,
                "tasks" => cfg.tasks = list(value),
                "data" => cfg.data = list(value).iter().map(|p| resolve(p)).collect(),
                "augment" => cfg.augment = parse_value(line, key, value)?,
                "max_demos" => {
                    let n: usize = parse_value(line, key, value)?;
                    cfg.max_demos = (n > 0).then_some(n);
                }
                "steps" => cfg.steps = parse_value(line, key, value)?,
                "batch_size" => cfg.batch_size = parse_value(line, key, value)?,
                "max_timesteps" => cfg.model.max_timesteps = parse_value(line, key, value)?,
                "n_layers" => cfg.model.n_layers = parse_value(line, key, value)?,
                "n_heads" => cfg.model.n_heads = parse_value(line, key, value)?,
                "d_model" => cfg.model.d_model = parse_value(line, key, value)?,
                "dropout" => cfg.model.dropout = parse_value(line, key, value)?,
                "lr" => cfg.optimizer.lr = parse_value(line, key, value)?,
                "weight_decay" => cfg.optimizer.weight_decay = parse_value(line, key, value)?,
                "beta1" => cfg.optimizer.beta1 = parse_value(line, key, value)?,
                "beta2" => cfg.optimizer.beta2 = parse_value(line, key, value)?,
                "eps" => cfg.optimizer.eps = parse_value(line, key, value)?,
                "grad_clip" => {
                    let c: f64 = parse_value(line, key, value)?;
                    cfg.grad_clip = (c > 0.0).then_some(c);
                }
                "warmup_steps" => cfg.warmup_steps = parse_value(line, key, value)?,
                "lr_decay" => cfg.lr_decay = parse_value(line, key, value)?,
                "weight.action" => cfg.weights.action = parse_value(line, key, value)?,
                "weight.dynamics" => cfg.weights.dynamics = parse_value(line, key, value)?,
                "weight.time_to_goal" => cfg.weights.time_to_goal = parse_value(line, key, value)?,
                "weight.reconstruction" => {
                    cfg.weights.reconstruction = parse_value(line, key, value)?
                }
                "mask_ratio" => cfg.mask_ratio = parse_value(line, key, value)?,
                "eval_every" => cfg.eval_every = parse_value(line, key, value)?,
                "eval_episodes" => cfg.eval_episodes = parse_value(line, key, value)?,
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "out" => cfg.out = Some(resolve(value)),
                "init" => cfg.init = Some(resolve(value)),
                "log" => cfg.log = Some(resolve(value)),
                _ => {
                    return Err(TrainError::Config {
                        line,
                        key: key.into(),
                        msg: "unknown key".into(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks values that do not depend on data. Finetuning always trains the
    /// action objective alone.
    pub fn validate(&mut self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Invalid(msg));
        self.model.validate()?;
        if self.tasks.is_empty() {
            return bad("tasks must list at least one task".into());
        }
        if self.mode == TrainMode::Finetune {
            if self.tasks.len() != 1 {
                return bad(format!(
                    "finetune targets exactly one task, got {}",
                    self.tasks.len()
                ));
            }
            self.weights = LossWeights::action_only();
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return bad(format!("mask_ratio {} outside (0, 1)", self.mask_ratio));
        }
        let w = self.weights;
        if [w.action, w.dynamics, w.time_to_goal, w.reconstruction]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("loss weights must be finite and non-negative".into());
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return bad("lr must be positive".into());
        }
        Ok(())
    }

    /// Learning rate for 1-based optimizer step `opt_step` taken during
    /// 1-based training step `step`. Warmup counts optimizer steps, decay
    /// follows training steps.
    pub fn lr_at(&self, opt_step: u64, step: usize) -> f64 {
        let warm = if self.warmup_steps == 0 {
            1.0
        } else {
            (opt_step as f64 / self.warmup_steps as f64).min(1.0)
        };
        let decay = match self.lr_decay {
            LrDecay::None => 1.0,
            LrDecay::Cosine => {
                let progress = (step.saturating_sub(1)) as f64 / self.steps.max(1) as f64;
                0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        };
        self.optimizer.lr * warm * decay
    }
}
