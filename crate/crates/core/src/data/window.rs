use super::trajectory::Trajectory;
use super::DataError;
use crate::numerics::Pcg32;

/// Consecutive timesteps `start+1 ..= end` (1-based) of one trajectory.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub trajectory: &'a Trajectory,
    /// 0-based index of the first timestep.
    pub start: usize,
    /// 1-based index of the last timestep (the sampled end `e`).
    pub end: usize,
}

impl<'a> Window<'a> {
    /// The window of the last `min(k, e)` timesteps ending at 1-based `e`.
    pub fn ending_at(trajectory: &'a Trajectory, e: usize, k: usize) -> Self {
        assert!(
            e >= 1 && e <= trajectory.len(),
            "window end {e} outside 1..={}",
            trajectory.len()
        );
        assert!(k >= 1);
        Self {
            trajectory,
            start: e - k.min(e),
            end: e,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Absolute 1-based timestep indices.
    pub fn timesteps(&self) -> Vec<usize> {
        (self.start + 1..=self.end).collect()
    }

    /// Time-to-goal of each timestep relative to the full trajectory.
    pub fn time_to_goal(&self) -> Vec<usize> {
        self.timesteps()
            .into_iter()
            .map(|t| self.trajectory.time_to_goal(t))
            .collect()
    }

    pub fn observation(&self, i: usize) -> &[f32] {
        self.trajectory.observation(self.start + i)
    }

    pub fn action(&self, i: usize) -> &[f32] {
        self.trajectory.action(self.start + i)
    }

    pub fn goal(&self) -> &[f32] {
        &self.trajectory.goal
    }
}

/// Samples windows so that every timestep of every trajectory is equally
/// likely to be the window end.
#[derive(Clone, Debug)]
pub struct WindowSampler<'a> {
    trajectories: &'a [Trajectory],
    cumulative: Vec<usize>,
    k: usize,
}

impl<'a> WindowSampler<'a> {
    pub fn new(trajectories: &'a [Trajectory], k: usize) -> Result<Self, DataError> {
        if trajectories.is_empty() {
            return Err(DataError::Empty);
        }
        if k == 0 {
            return Err(DataError::Config(
                "window length K must be at least 1".into(),
            ));
        }
        let mut total = 0;
        let cumulative = trajectories
            .iter()
            .map(|t| {
                total += t.len();
                total
            })
            .collect();
        Ok(Self {
            trajectories,
            cumulative,
            k,
        })
    }

    pub fn total_timesteps(&self) -> usize {
        *self.cumulative.last().unwrap()
    }

    pub fn sample(&self, rng: &mut Pcg32) -> Window<'a> {
        let u = rng.below_usize(self.total_timesteps());
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let before = if idx == 0 {
            0
        } else {
            self.cumulative[idx - 1]
        };
        Window::ending_at(&self.trajectories[idx], u - before + 1, self.k)
    }
}

/// Draws one window: trajectory weighted by length, end uniform in `1..=T`.
pub fn sample_window<'a>(
    trajectories: &'a [Trajectory],
    rng: &mut Pcg32,
    k: usize,
) -> Result<Window<'a>, DataError> {
    Ok(WindowSampler::new(trajectories, k)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Provenance, TaskSpec};

    fn traj(len: usize) -> Trajectory {
        let spec = TaskSpec {
            task_id: "toy".into(),
            obs_dim: 1,
            goal_dim: 1,
            act_dim: 1,
            max_episode_steps: 100,
            expected_steps: 5,
            success_threshold: 0.02,
        };
        let rows: Vec<Vec<f32>> = (0..len).map(|i| vec![i as f32]).collect();
        Trajectory::from_rows(
            &spec,
            &rows,
            &vec![vec![0.0]; len],
            vec![0.0],
            &rows,
            Provenance::Original,
        )
        .unwrap()
    }

    #[test]
    fn full_window() {
        let t = traj(5);
        let w = Window::ending_at(&t, 5, 100);
        assert_eq!(w.timesteps(), vec![1, 2, 3, 4, 5]);
        assert_eq!(w.time_to_goal(), vec![5, 4, 3, 2, 1]);
    }

    #[test]
    fn truncated_window() {
        let t = traj(5);
        let w = Window::ending_at(&t, 4, 2);
        assert_eq!(w.timesteps(), vec![3, 4]);
        assert_eq!(w.time_to_goal(), vec![3, 2]);
        assert_eq!(w.observation(0), &[2.0]);
    }

    #[test]
    fn single_step_trajectory() {
        let t = traj(1);
        let mut rng = Pcg32::new(0);
        let w = sample_window(std::slice::from_ref(&t), &mut rng, 10).unwrap();
        assert_eq!(w.timesteps(), vec![1]);
        assert_eq!(w.time_to_goal(), vec![1]);
    }

    #[test]
    fn empty_dataset_is_error() {
        let mut rng = Pcg32::new(0);
        assert!(sample_window(&[], &mut rng, 10).is_err());
    }

    #[test]
    fn end_is_uniform_over_timesteps() {
        let ts = vec![traj(1), traj(3)];
        let s = WindowSampler::new(&ts, 10).unwrap();
        let mut rng = Pcg32::new(4);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            let w = s.sample(&mut rng);
            let slot = if w.trajectory.len() == 1 { 0 } else { w.end };
            counts[slot] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }
}
