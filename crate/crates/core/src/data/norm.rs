use serde::{Deserialize, Serialize};

use super::trajectory::{TaskSpec, Trajectory};
use super::DataError;

/// Components whose deviation falls below this are treated as constant and
/// only centered (unit scale), so tiny departures at inference stay tiny.
pub const MIN_STD: f32 = 1e-3;

/// Per-task input normalization statistics. Time-to-goal values are divided
/// by `time_scale` (the task's `max_episode_steps`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub obs_mean: Vec<f32>,
    pub obs_std: Vec<f32>,
    pub goal_mean: Vec<f32>,
    pub goal_std: Vec<f32>,
    pub act_mean: Vec<f32>,
    pub act_std: Vec<f32>,
    pub time_scale: f32,
}

#[derive(Default)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            n: 0,
        }
    }

    fn add(&mut self, row: &[f32]) {
        for (j, &v) in row.iter().enumerate() {
            self.sum[j] += v as f64;
            self.sum_sq[j] += (v as f64) * (v as f64);
        }
        self.n += 1;
    }

    fn finish(&self) -> (Vec<f32>, Vec<f32>) {
        let n = self.n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let s = (sq / n - m * m).max(0.0).sqrt() as f32;
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        (mean.into_iter().map(|m| m as f32).collect(), std)
    }
}

impl NormStats {
    /// Zero means and unit deviations, for models built before any data is seen.
    pub fn identity(spec: &TaskSpec) -> Self {
        let (o, g, a) = (spec.obs_dim, spec.goal_dim, spec.act_dim);
        Self {
            obs_mean: vec![0.0; o],
            obs_std: vec![1.0; o],
            goal_mean: vec![0.0; g],
            goal_std: vec![1.0; g],
            act_mean: vec![0.0; a],
            act_std: vec![1.0; a],
            time_scale: spec.max_episode_steps as f32,
        }
    }

    /// Means and population standard deviations over every timestep of every
    /// trajectory. The goal counts once per timestep.
    pub fn compute(trajectories: &[Trajectory], spec: &TaskSpec) -> Result<Self, DataError> {
        if trajectories.is_empty() {
            return Err(DataError::Empty);
        }
        let mut obs = Moments::new(spec.obs_dim);
        let mut goal = Moments::new(spec.goal_dim);
        let mut act = Moments::new(spec.act_dim);
        for t in trajectories {
            for i in 0..t.len() {
                obs.add(t.observation(i));
                goal.add(&t.goal);
                act.add(t.action(i));
            }
        }
        let (obs_mean, obs_std) = obs.finish();
        let (goal_mean, goal_std) = goal.finish();
        let (act_mean, act_std) = act.finish();
        Ok(Self {
            obs_mean,
            obs_std,
            goal_mean,
            goal_std,
            act_mean,
            act_std,
            time_scale: spec.max_episode_steps as f32,
        })
    }

    pub fn normalize_obs(&self, x: &[f32], out: &mut Vec<f32>) {
        normalize(x, &self.obs_mean, &self.obs_std, out)
    }

    pub fn normalize_goal(&self, x: &[f32], out: &mut Vec<f32>) {
        normalize(x, &self.goal_mean, &self.goal_std, out)
    }

    pub fn normalize_act(&self, x: &[f32], out: &mut Vec<f32>) {
        normalize(x, &self.act_mean, &self.act_std, out)
    }

    pub fn denormalize_obs(&self, x: &[f32]) -> Vec<f32> {
        x.iter()
            .zip(&self.obs_mean)
            .zip(&self.obs_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn normalize_time(&self, steps: f32) -> f32 {
        steps / self.time_scale
    }
}

fn normalize(x: &[f32], mean: &[f32], std: &[f32], out: &mut Vec<f32>) {
    out.extend(x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;

    fn spec() -> TaskSpec {
        TaskSpec {
            task_id: "toy".into(),
            obs_dim: 2,
            goal_dim: 1,
            act_dim: 1,
            max_episode_steps: 10,
            expected_steps: 2,
            success_threshold: 0.02,
        }
    }

    fn traj(obs: &[[f32; 2]]) -> Trajectory {
        let rows: Vec<Vec<f32>> = obs.iter().map(|r| r.to_vec()).collect();
        let n = rows.len();
        Trajectory::from_rows(
            &spec(),
            &rows,
            &vec![vec![0.0]; n],
            vec![1.0],
            &vec![vec![0.0]; n],
            Provenance::Original,
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_mean_and_std() {
        let s = NormStats::compute(&[traj(&[[0.0, 5.0], [2.0, 5.0]])], &spec()).unwrap();
        assert_eq!(s.obs_mean, vec![1.0, 5.0]);
        assert_eq!(s.obs_std[0], 1.0);
        assert_eq!(s.obs_std[1], 1.0);
        let mut out = Vec::new();
        s.normalize_obs(&[2.0, 5.0], &mut out);
        assert_eq!(out, vec![1.0, 0.0]);
        assert_eq!(s.time_scale, 10.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let s =
            NormStats::compute(&[traj(&[[0.3, -1.0], [2.5, 4.0], [1.0, 0.5]])], &spec()).unwrap();
        let x = [0.7f32, 2.2];
        let mut n = Vec::new();
        s.normalize_obs(&x, &mut n);
        let back = s.denormalize_obs(&n);
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            NormStats::compute(&[], &spec()),
            Err(DataError::Empty)
        ));
    }
}
