//! Pretraining and finetuning loops, checkpoint output and telemetry.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{describe_keys, LrDecay, TrainConfig, TrainMode, KEYS};

use crate::data::{
    hindsight_relabel, load_dataset, DataError, Dataset, NormStats, Provenance, TaskRegistry,
};
use crate::env::EnvKind;
use crate::eval::{evaluate, EvalError};
use crate::io::write_atomic;
use crate::model::{load_checkpoint, save_checkpoint, CheckpointError, ModelBundle, ModelError};
use crate::numerics::{mix_seed, AdamW, Pcg32};
use crate::objectives::{
    pretraining_step, ObjectiveError, ObjectiveKind, StepSettings, TrainingSet,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}, key {key}: {msg}")]
    Config {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid training config: {0}")]
    Invalid(String),
    #[error("no training data for task {0}")]
    MissingData(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One line of the JSON Lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Start {
        mode: String,
        tasks: Vec<String>,
        param_count: usize,
        fresh_params: Vec<String>,
    },
    Step {
        step: usize,
        objective: ObjectiveKind,
        task: String,
        loss: f64,
        lr: f64,
        wall_time: f64,
    },
    Eval {
        step: usize,
        task: String,
        success_rate: f64,
        wall_time: f64,
    },
    End {
        steps: usize,
        wall_time: f64,
    },
}

impl LogRecord {
    fn zero_wall_time(&mut self) {
        match self {
            LogRecord::Step { wall_time, .. }
            | LogRecord::Eval { wall_time, .. }
            | LogRecord::End { wall_time, .. } => *wall_time = 0.0,
            LogRecord::Start { .. } => {}
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    /// The log with wall-clock fields zeroed, for run-to-run comparison.
    pub fn without_wall_time(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(LogRecord::zero_wall_time);
        out
    }

    /// Step losses of one objective, in order.
    pub fn losses(&self, kind: ObjectiveKind) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step {
                    objective, loss, ..
                } if *objective == kind => Some(*loss),
                _ => None,
            })
            .collect()
    }
}

/// Training data for the configured tasks.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub set: TrainingSet,
    pub tasks: TaskRegistry,
    pub norm_stats: BTreeMap<String, NormStats>,
}

/// Selects the configured tasks, applies `max_demos` and relabeling, and
/// computes normalization statistics over the resulting trajectories.
pub fn prepare_data(dataset: &Dataset, cfg: &TrainConfig) -> Result<PreparedData, TrainError> {
    let mut tasks = TaskRegistry::new();
    let mut trajectories = Vec::new();
    for task in &cfg.tasks {
        let spec = dataset
            .tasks
            .get(task)
            .ok_or_else(|| TrainError::MissingData(task.clone()))?;
        let mut subset = dataset.task(task);
        if subset.is_empty() {
            return Err(TrainError::MissingData(task.clone()));
        }
        if let Some(n) = cfg.max_demos {
            if subset.is_augmented() {
                return Err(TrainError::Invalid(format!(
                    "max_demos needs unaugmented data, {task} is already augmented"
                )));
            }
            subset.trajectories.truncate(n);
        }
        if cfg.augment && !subset.is_augmented() {
            subset = hindsight_relabel(&subset)?;
        }
        tasks.insert(task.clone(), spec.clone());
        trajectories.extend(subset.trajectories);
    }
    let set = TrainingSet::from_trajectories(&trajectories);
    let mut norm_stats = BTreeMap::new();
    for (task, trajs) in &set.tasks {
        norm_stats.insert(task.clone(), NormStats::compute(trajs, &tasks[task])?);
    }
    Ok(PreparedData {
        set,
        tasks,
        norm_stats,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The trained model as held in memory. After finetuning from a
    /// checkpoint this still contains the checkpoint's other adapters.
    pub bundle: ModelBundle,
    pub log: TrainLog,
    /// Parameters that were freshly initialized rather than loaded.
    pub fresh_params: Vec<String>,
    /// Tasks whose adapters go into the saved checkpoint.
    pub keep_tasks: Vec<String>,
}

impl TrainOutcome {
    /// The model as written to disk.
    pub fn saved_bundle(&self) -> Result<ModelBundle, TrainError> {
        if self.keep_tasks.len() == self.bundle.tasks.len() {
            return Ok(self.bundle.clone());
        }
        let tasks: TaskRegistry = self
            .keep_tasks
            .iter()
            .map(|t| (t.clone(), self.bundle.tasks[t].clone()))
            .collect();
        let norms = self
            .keep_tasks
            .iter()
            .map(|t| (t.clone(), self.bundle.norm_stats[t].clone()))
            .collect();
        Ok(self.bundle.with_tasks(tasks, norms, 0)?.0)
    }
}

fn init_seed(cfg: &TrainConfig) -> u64 {
    mix_seed(cfg.seed, 0x1)
}

fn train_loop(
    bundle: &mut ModelBundle,
    data: &TrainingSet,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<(), TrainError> {
    let started = Instant::now();
    let mut rng = Pcg32::derive(cfg.seed, 0x2);
    let mut opt = AdamW::new(cfg.optimizer, bundle.params.len());
    for step in 1..=cfg.steps {
        let lr = cfg.lr_at(opt.step_count() + 1, step);
        let settings = StepSettings {
            batch_size: cfg.batch_size,
            mask_ratio: cfg.mask_ratio,
            grad_clip: cfg.grad_clip,
            lr,
            dropout: bundle.config.dropout > 0.0,
        };
        let losses = pretraining_step(bundle, &mut opt, data, &mut rng, &cfg.weights, &settings)?;
        let wall_time = started.elapsed().as_secs_f64();
        for (objective, task, loss) in losses.losses {
            if !loss.is_finite() {
                return Err(TrainError::Invalid(format!(
                    "{objective} loss became {loss} at step {step}"
                )));
            }
            log.records.push(LogRecord::Step {
                step,
                objective,
                task,
                loss,
                lr,
                wall_time,
            });
        }
        if step % 100 == 0 || step == cfg.steps {
            log::info!("step {step}/{}: {:?}", cfg.steps, last_losses(log, step));
        }
        if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            for task in &cfg.tasks {
                if task.parse::<EnvKind>().is_err() {
                    continue;
                }
                let report = evaluate(task, bundle, cfg.eval_episodes, &[0])?;
                log::info!("step {step}: {task} success {:.2}", report.mean);
                let wall_time = started.elapsed().as_secs_f64();
                log.records.push(LogRecord::Eval {
                    step,
                    task: task.clone(),
                    success_rate: report.mean,
                    wall_time,
                });
            }
        }
    }
    log.records.push(LogRecord::End {
        steps: cfg.steps,
        wall_time: started.elapsed().as_secs_f64(),
    });
    Ok(())
}

fn last_losses(log: &TrainLog, at: usize) -> Vec<(ObjectiveKind, f64)> {
    log.records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step {
                step,
                objective,
                loss,
                ..
            } if *step == at => Some((*objective, *loss)),
            _ => None,
        })
        .collect()
}

/// Multi-objective pretraining across all configured tasks. With `init`, the
/// backbone and matching adapters start from that model.
pub fn pretrain(
    cfg: &TrainConfig,
    dataset: &Dataset,
    init: Option<&ModelBundle>,
) -> Result<TrainOutcome, TrainError> {
    let mut cfg = cfg.clone();
    cfg.mode = TrainMode::Pretrain;
    cfg.validate()?;
    let data = prepare_data(dataset, &cfg)?;
    let (bundle, fresh) = match init {
        Some(b) => b.with_tasks(data.tasks.clone(), data.norm_stats.clone(), init_seed(&cfg))?,
        None => {
            let b = ModelBundle::new(
                cfg.model.clone(),
                data.tasks.clone(),
                data.norm_stats.clone(),
                init_seed(&cfg),
            )?;
            let names = b.params.iter().map(|(_, p)| p.name.clone()).collect();
            (b, names)
        }
    };
    run_training(cfg, bundle, fresh, &data.set)
}

/// Action-only training of a single task. Adapters the init checkpoint holds
/// for the task are reused together with its normalization statistics;
/// otherwise the task's adapters are freshly initialized.
pub fn finetune(
    cfg: &TrainConfig,
    dataset: &Dataset,
    init: Option<&ModelBundle>,
) -> Result<TrainOutcome, TrainError> {
    let mut cfg = cfg.clone();
    cfg.mode = TrainMode::Finetune;
    cfg.validate()?;
    let task = cfg.tasks[0].clone();
    let data = prepare_data(dataset, &cfg)?;
    let (bundle, fresh) = match init {
        Some(b) => {
            let mut tasks = b.tasks.clone();
            let mut norms = b.norm_stats.clone();
            let spec = data.tasks[&task].clone();
            if !b.tasks.contains_key(&task) {
                norms.insert(task.clone(), data.norm_stats[&task].clone());
            }
            tasks.insert(task.clone(), spec);
            b.with_tasks(tasks, norms, init_seed(&cfg))?
        }
        None => {
            let b = ModelBundle::new(
                cfg.model.clone(),
                data.tasks.clone(),
                data.norm_stats.clone(),
                init_seed(&cfg),
            )?;
            let names = b.params.iter().map(|(_, p)| p.name.clone()).collect();
            (b, names)
        }
    };
    let mut outcome = run_training(cfg, bundle, fresh, &data.set)?;
    outcome.keep_tasks = vec![task];
    Ok(outcome)
}

fn run_training(
    cfg: TrainConfig,
    mut bundle: ModelBundle,
    fresh: Vec<String>,
    set: &TrainingSet,
) -> Result<TrainOutcome, TrainError> {
    let mut log = TrainLog::default();
    log.records.push(LogRecord::Start {
        mode: match cfg.mode {
            TrainMode::Pretrain => "pretrain".into(),
            TrainMode::Finetune => "finetune".into(),
        },
        tasks: cfg.tasks.clone(),
        param_count: bundle.param_count(),
        fresh_params: fresh.clone(),
    });
    train_loop(&mut bundle, set, &cfg, &mut log)?;
    let keep_tasks = bundle.tasks.keys().cloned().collect();
    Ok(TrainOutcome {
        bundle,
        log,
        fresh_params: fresh,
        keep_tasks,
    })
}

/// Loads and merges the configured datasets.
pub fn load_training_data(paths: &[PathBuf]) -> Result<Dataset, TrainError> {
    let mut merged = Dataset::default();
    for p in paths {
        merged = merged.merge(load_dataset(p)?)?;
    }
    Ok(merged)
}

/// Runs a config end to end: loads data and the optional init checkpoint,
/// trains, and writes the checkpoint and log.
pub fn run(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| TrainError::Invalid("out must name the checkpoint path".into()))?;
    if cfg.data.is_empty() {
        return Err(TrainError::Invalid(
            "data must list at least one dataset".into(),
        ));
    }
    let mut checked = cfg.clone();
    checked.validate()?;
    let dataset = load_training_data(&cfg.data)?;
    let init = cfg.init.as_deref().map(load_checkpoint).transpose()?;
    let outcome = match cfg.mode {
        TrainMode::Pretrain => pretrain(cfg, &dataset, init.as_ref())?,
        TrainMode::Finetune => finetune(cfg, &dataset, init.as_ref())?,
    };
    save_checkpoint(&outcome.saved_bundle()?, &out)?;
    if let Some(log_path) = &cfg.log {
        write_file(log_path, outcome.log.to_jsonl().as_bytes())?;
    }
    Ok(outcome)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    write_atomic(path, bytes).map_err(|e| TrainError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Number of original and relabeled trajectories, for reporting.
pub fn provenance_counts(dataset: &Dataset) -> (usize, usize) {
    (
        dataset.count(Provenance::Original),
        dataset.count(Provenance::Relabeled),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::collect_demos;
    use crate::model::ModelConfig;

    fn small(mode: TrainMode, tasks: &[&str], steps: usize) -> TrainConfig {
        TrainConfig {
            mode,
            tasks: tasks.iter().map(|s| s.to_string()).collect(),
            steps,
            batch_size: 4,
            model: ModelConfig {
                n_layers: 1,
                n_heads: 2,
                d_model: 16,
                max_timesteps: 4,
                dropout: 0.1,
            },
            ..Default::default()
        }
    }

    fn demos(kinds: &[EnvKind], n: usize) -> Dataset {
        kinds
            .iter()
            .map(|&k| collect_demos(k, n, 3).unwrap().0)
            .reduce(|a, b| a.merge(b).unwrap())
            .unwrap()
    }

    #[test]
    fn pretrain_is_deterministic_and_covers_all_tasks() {
        let data = demos(
            &[EnvKind::Reach3d, EnvKind::BiReach3d, EnvKind::PickPlace3d],
            3,
        );
        let cfg = small(
            TrainMode::Pretrain,
            &["bireach3d", "pickplace3d", "reach3d"],
            3,
        );
        let a = pretrain(&cfg, &data, None).unwrap();
        let b = pretrain(&cfg, &data, None).unwrap();
        assert_eq!(a.log.without_wall_time(), b.log.without_wall_time());
        assert_eq!(a.log.losses(ObjectiveKind::ActionPrediction).len(), 3);
        let groups: std::collections::BTreeSet<String> = a
            .bundle
            .params
            .iter()
            .map(|(_, p)| {
                p.name
                    .split('.')
                    .take(if p.name.starts_with("adapters") { 2 } else { 1 })
                    .collect::<Vec<_>>()
                    .join(".")
            })
            .collect();
        let expect: Vec<&str> = vec![
            "adapters.bireach3d",
            "adapters.pickplace3d",
            "adapters.reach3d",
            "backbone",
        ];
        assert_eq!(
            groups.iter().map(String::as_str).collect::<Vec<_>>(),
            expect
        );
    }

    #[test]
    fn missing_task_data_is_an_error() {
        let data = demos(&[EnvKind::Reach3d], 2);
        let cfg = small(TrainMode::Pretrain, &["reach3d", "bireach3d"], 1);
        assert!(
            matches!(pretrain(&cfg, &data, None), Err(TrainError::MissingData(t)) if t == "bireach3d")
        );
    }

    #[test]
    fn finetune_purity_and_adapter_reuse() {
        let data = demos(&[EnvKind::Reach3d, EnvKind::BiReach3d], 3);
        let pre = pretrain(
            &small(TrainMode::Pretrain, &["reach3d", "bireach3d"], 2),
            &data,
            None,
        )
        .unwrap();
        let ft = finetune(
            &small(TrainMode::Finetune, &["reach3d"], 3),
            &data,
            Some(&pre.bundle),
        )
        .unwrap();
        assert!(ft.fresh_params.is_empty());
        for (_, p) in ft.bundle.params.iter() {
            let before = pre
                .bundle
                .params
                .value(pre.bundle.params.id(&p.name).unwrap());
            let frozen = p.name.starts_with("adapters.bireach3d.")
                || ["head.obs", "head.goal", "head.time_to_goal"]
                    .iter()
                    .any(|h| p.name.starts_with("adapters.reach3d.") && p.name.contains(h));
            if frozen {
                assert_eq!(before, &p.value, "{} changed", p.name);
            }
        }
        assert_ne!(
            pre.bundle
                .params
                .value(pre.bundle.params.id("backbone.ln_f.gain").unwrap()),
            ft.bundle
                .params
                .value(ft.bundle.params.id("backbone.ln_f.gain").unwrap())
        );
        assert_eq!(ft.log.losses(ObjectiveKind::ForwardDynamics).len(), 0);
        let saved = ft.saved_bundle().unwrap();
        assert_eq!(saved.tasks.keys().collect::<Vec<_>>(), vec!["reach3d"]);
        assert_eq!(
            saved.norm_stats["reach3d"],
            pre.bundle.norm_stats["reach3d"]
        );
    }

    #[test]
    fn finetune_new_task_reports_fresh_adapters() {
        let data = demos(&[EnvKind::Reach3d, EnvKind::PickPlace3d], 2);
        let pre = pretrain(&small(TrainMode::Pretrain, &["reach3d"], 1), &data, None).unwrap();
        let ft = finetune(
            &small(TrainMode::Finetune, &["pickplace3d"], 1),
            &data,
            Some(&pre.bundle),
        )
        .unwrap();
        assert!(!ft.fresh_params.is_empty());
        assert!(ft
            .fresh_params
            .iter()
            .all(|n| n.starts_with("adapters.pickplace3d.")));
    }

    #[test]
    fn finetune_dimension_conflict() {
        let data = demos(&[EnvKind::Reach3d, EnvKind::BiReach3d], 2);
        let pre = pretrain(&small(TrainMode::Pretrain, &["reach3d"], 1), &data, None).unwrap();
        let mut clash = data.task("bireach3d");
        let mut spec = clash.tasks.remove("bireach3d").unwrap();
        spec.task_id = "reach3d".into();
        for t in &mut clash.trajectories {
            t.task_id = "reach3d".into();
        }
        clash.tasks.insert("reach3d".into(), spec);
        let err = finetune(
            &small(TrainMode::Finetune, &["reach3d"], 1),
            &clash,
            Some(&pre.bundle),
        )
        .unwrap_err();
        assert!(
            matches!(err, TrainError::Model(ModelError::TaskConflict { .. })),
            "{err}"
        );
    }

    #[test]
    fn run_writes_checkpoint_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("d.jsonl");
        crate::data::write_dataset(&data_path, &demos(&[EnvKind::Reach3d], 2)).unwrap();
        let text = "mode = pretrain\ntasks = reach3d\ndata = d.jsonl\nsteps = 2\nbatch_size = 2\n\
                    n_layers = 1\nn_heads = 1\nd_model = 8\nmax_timesteps = 3\nout = m.gcdt\nlog = log.jsonl\n";
        std::fs::write(dir.path().join("c.cfg"), text).unwrap();
        let cfg = TrainConfig::load(&dir.path().join("c.cfg")).unwrap();
        let outcome = run(&cfg).unwrap();
        let back = load_checkpoint(&dir.path().join("m.gcdt")).unwrap();
        assert_eq!(back.param_count(), outcome.bundle.param_count());
        let log = TrainLog::parse(&std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap())
            .unwrap();
        assert_eq!(log, outcome.log);
        assert!(matches!(log.records[0], LogRecord::Start { .. }));
    }
}
