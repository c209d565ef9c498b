use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Dimensional and episodic metadata for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub act_dim: usize,
    pub max_episode_steps: usize,
    /// Expected episode length, the starting point of the evaluation-time
    /// time-to-goal countdown.
    pub expected_steps: usize,
    /// Goal-distance tolerance for success.
    pub success_threshold: f32,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| {
            Err(DataError::InvalidTaskSpec {
                task: self.task_id.clone(),
                msg,
            })
        };
        if self.obs_dim == 0 || self.goal_dim == 0 || self.act_dim == 0 {
            return bad("all dimensions must be at least 1".into());
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive".into());
        }
        if self.expected_steps == 0 || self.expected_steps > self.max_episode_steps {
            return bad(format!(
                "expected_steps {} must lie in [1, max_episode_steps={}]",
                self.expected_steps, self.max_episode_steps
            ));
        }
        if self.success_threshold.is_nan() || self.success_threshold <= 0.0 {
            return bad("success_threshold must be positive".into());
        }
        Ok(())
    }
}

pub type TaskRegistry = BTreeMap<String, TaskSpec>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Relabeled,
}

/// One demonstration episode. Per-timestep arrays are stored flat, row-major.
///
/// `achieved_goals[t]` is the achieved goal of the state reached after
/// executing `actions[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
    pub goal: Vec<f32>,
    pub achieved_goals: Vec<f32>,
    pub provenance: Provenance,
}

impl Trajectory {
    /// Builds a trajectory from per-timestep rows, checking it against `spec`.
    pub fn from_rows(
        spec: &TaskSpec,
        observations: &[Vec<f32>],
        actions: &[Vec<f32>],
        goal: Vec<f32>,
        achieved_goals: &[Vec<f32>],
        provenance: Provenance,
    ) -> Result<Self, String> {
        let t = observations.len();
        if t == 0 {
            return Err("trajectory has no timesteps".into());
        }
        if actions.len() != t || achieved_goals.len() != t {
            return Err(format!(
                "per-timestep lengths differ: obs {t}, act {}, achieved {}",
                actions.len(),
                achieved_goals.len()
            ));
        }
        let check = |rows: &[Vec<f32>], dim: usize, what: &str| -> Result<Vec<f32>, String> {
            let mut flat = Vec::with_capacity(rows.len() * dim);
            for (i, r) in rows.iter().enumerate() {
                if r.len() != dim {
                    return Err(format!(
                        "{what}[{i}] has dimension {}, task {} expects {dim}",
                        r.len(),
                        spec.task_id
                    ));
                }
                flat.extend_from_slice(r);
            }
            Ok(flat)
        };
        let traj = Self {
            task_id: spec.task_id.clone(),
            obs_dim: spec.obs_dim,
            goal_dim: spec.goal_dim,
            act_dim: spec.act_dim,
            observations: check(observations, spec.obs_dim, "obs")?,
            actions: check(actions, spec.act_dim, "act")?,
            goal,
            achieved_goals: check(achieved_goals, spec.goal_dim, "achieved")?,
            provenance,
        };
        traj.validate(spec)?;
        Ok(traj)
    }

    pub fn validate(&self, spec: &TaskSpec) -> Result<(), String> {
        if self.task_id != spec.task_id {
            return Err(format!(
                "task {} checked against spec for {}",
                self.task_id, spec.task_id
            ));
        }
        if (self.obs_dim, self.goal_dim, self.act_dim)
            != (spec.obs_dim, spec.goal_dim, spec.act_dim)
        {
            return Err(format!(
                "dimensions obs {}, goal {}, act {} do not match task {} (obs {}, goal {}, act {})",
                self.obs_dim,
                self.goal_dim,
                self.act_dim,
                spec.task_id,
                spec.obs_dim,
                spec.goal_dim,
                spec.act_dim
            ));
        }
        let t = self.len();
        if t == 0 {
            return Err("trajectory has no timesteps".into());
        }
        if self.observations.len() != t * self.obs_dim
            || self.actions.len() != t * self.act_dim
            || self.achieved_goals.len() != t * self.goal_dim
        {
            return Err("per-timestep arrays do not share one length".into());
        }
        if self.goal.len() != self.goal_dim {
            return Err(format!(
                "goal has dimension {}, task {} expects {}",
                self.goal.len(),
                spec.task_id,
                spec.goal_dim
            ));
        }
        if let Some(a) = self.actions.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
            return Err(format!("action component {a} outside [-1, 1]"));
        }
        let all = self
            .observations
            .iter()
            .chain(&self.goal)
            .chain(&self.achieved_goals);
        if all.clone().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        Ok(())
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.observations
            .len()
            .checked_div(self.obs_dim)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observation at 0-based index `i`.
    pub fn observation(&self, i: usize) -> &[f32] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn achieved_goal(&self, i: usize) -> &[f32] {
        &self.achieved_goals[i * self.goal_dim..(i + 1) * self.goal_dim]
    }

    /// Actions remaining at 1-based timestep `t`, counting the current one:
    /// `T - t + 1`.
    pub fn time_to_goal(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.len());
        self.len() - t + 1
    }

    /// The first `len` timesteps of this trajectory.
    pub fn prefix(&self, len: usize) -> Trajectory {
        Trajectory {
            task_id: self.task_id.clone(),
            obs_dim: self.obs_dim,
            goal_dim: self.goal_dim,
            act_dim: self.act_dim,
            observations: self.observations[..len * self.obs_dim].to_vec(),
            actions: self.actions[..len * self.act_dim].to_vec(),
            goal: self.goal.clone(),
            achieved_goals: self.achieved_goals[..len * self.goal_dim].to_vec(),
            provenance: self.provenance,
        }
    }
}

/// A collection of trajectories plus the specs of the tasks they belong to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub tasks: TaskRegistry,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(tasks: TaskRegistry) -> Self {
        Self {
            tasks,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.trajectories
            .iter()
            .filter(|t| t.provenance == provenance)
            .count()
    }

    pub fn is_augmented(&self) -> bool {
        self.count(Provenance::Relabeled) > 0
    }

    /// Validates and appends a trajectory.
    pub fn push(&mut self, traj: Trajectory) -> Result<(), DataError> {
        let spec = self
            .tasks
            .get(&traj.task_id)
            .ok_or_else(|| DataError::UnknownTask(traj.task_id.clone()))?;
        traj.validate(spec).map_err(|msg| DataError::Invalid {
            index: self.trajectories.len(),
            msg,
        })?;
        self.trajectories.push(traj);
        Ok(())
    }

    /// Trajectories of one task, in dataset order.
    pub fn task(&self, task_id: &str) -> Dataset {
        let mut tasks = TaskRegistry::new();
        if let Some(spec) = self.tasks.get(task_id) {
            tasks.insert(task_id.to_string(), spec.clone());
        }
        Dataset {
            tasks,
            trajectories: self
                .trajectories
                .iter()
                .filter(|t| t.task_id == task_id)
                .cloned()
                .collect(),
        }
    }

    /// Task ids that own at least one trajectory, sorted.
    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .trajectories
            .iter()
            .map(|t| t.task_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Concatenates datasets. Conflicting specs for one task id are an error.
    pub fn merge(mut self, other: Dataset) -> Result<Dataset, DataError> {
        for (id, spec) in other.tasks {
            match self.tasks.get(&id) {
                Some(existing) if existing != &spec => {
                    return Err(DataError::InvalidTaskSpec {
                        task: id,
                        msg: "conflicting specs while merging datasets".into(),
                    })
                }
                _ => {
                    self.tasks.insert(id, spec);
                }
            }
        }
        self.trajectories.extend(other.trajectories);
        Ok(self)
    }

    pub fn total_timesteps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}
