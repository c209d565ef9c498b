use std::path::Path;

use serde::Serialize;

use super::{Env, EnvError, EnvKind};
use crate::data::{write_dataset, Dataset, Provenance, TaskRegistry, Trajectory};
use crate::numerics::mix_seed;

/// Summary of a demonstration collection run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoReport {
    pub env: String,
    pub episodes: usize,
    /// Expert episodes that missed the goal and were re-drawn.
    pub failed_attempts: usize,
    pub mean_length: f64,
    pub min_length: usize,
    pub max_length: usize,
    /// `ceil(mean_length)`, stored as the task's expected episode length.
    pub expected_steps: usize,
}

/// Rolls the expert for `episodes` successful episodes. Attempt `i` resets
/// with `mix_seed(seed, i)`; failed attempts are skipped and counted.
pub fn collect_demos(
    kind: EnvKind,
    episodes: usize,
    seed: u64,
) -> Result<(Dataset, DemoReport), EnvError> {
    let mut env = Env::new(kind, seed);
    let mut records = Vec::with_capacity(episodes);
    let mut attempt = 0u64;
    let mut failed = 0;
    while records.len() < episodes {
        let mut o = env.reset(mix_seed(seed, attempt));
        attempt += 1;
        let goal = o.goal.clone();
        let (mut obs, mut act, mut ach) = (Vec::new(), Vec::new(), Vec::new());
        while !o.success && env.state().step_count < kind.max_episode_steps() {
            let a = env.expert_action();
            obs.push(o.observation.clone());
            o = env.step(&a)?;
            act.push(a);
            ach.push(o.achieved_goal.clone());
        }
        if o.success && !obs.is_empty() {
            records.push((obs, act, goal, ach));
        } else {
            failed += 1;
        }
    }
    let lengths: Vec<usize> = records.iter().map(|r| r.0.len()).collect();
    let mean_length = if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    };
    let expected_steps = (mean_length.ceil() as usize).clamp(1, kind.max_episode_steps());
    let spec = kind.task_spec(expected_steps);
    let mut dataset = Dataset::new(TaskRegistry::from([(spec.task_id.clone(), spec.clone())]));
    for (obs, act, goal, ach) in records {
        let traj = Trajectory::from_rows(&spec, &obs, &act, goal, &ach, Provenance::Original)
            .expect("expert trajectories satisfy their task spec");
        dataset.push(traj)?;
    }
    let report = DemoReport {
        env: kind.name().to_string(),
        episodes,
        failed_attempts: failed,
        mean_length,
        min_length: lengths.iter().copied().min().unwrap_or(0),
        max_length: lengths.iter().copied().max().unwrap_or(0),
        expected_steps,
    };
    Ok((dataset, report))
}

/// Collects demonstrations and writes them with their task sidecar.
pub fn generate_demos(
    kind: EnvKind,
    episodes: usize,
    seed: u64,
    out: &Path,
) -> Result<DemoReport, EnvError> {
    let (dataset, report) = collect_demos(kind, episodes, seed)?;
    write_dataset(out, &dataset)?;
    Ok(report)
}
