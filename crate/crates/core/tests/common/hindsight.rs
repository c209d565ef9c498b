//! Brute-force reference for hindsight relabeling on synthetic trajectories.

use gcdt::data::{hindsight_relabel, Dataset, Provenance, TaskRegistry, TaskSpec, Trajectory};
use gcdt::numerics::Pcg32;

pub fn synthetic_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = Pcg32::new(seed);
    let mut tasks = TaskRegistry::new();
    let mut specs = Vec::new();
    for k in 0..3 {
        let spec = TaskSpec {
            task_id: format!("synthetic{k}"),
            obs_dim: 1 + rng.below_usize(5),
            goal_dim: 1 + rng.below_usize(4),
            act_dim: 1 + rng.below_usize(4),
            max_episode_steps: 30,
            expected_steps: 10,
            success_threshold: 0.05,
        };
        tasks.insert(spec.task_id.clone(), spec.clone());
        specs.push(spec);
    }
    let mut d = Dataset::new(tasks);
    for _ in 0..n {
        let spec = &specs[rng.below_usize(specs.len())];
        let len = 1 + rng.below_usize(25);
        let mut row = |dim: usize, lo: f64, hi: f64| -> Vec<f32> {
            (0..dim).map(|_| rng.uniform_range(lo, hi) as f32).collect()
        };
        let obs: Vec<Vec<f32>> = (0..len).map(|_| row(spec.obs_dim, -5.0, 5.0)).collect();
        let act: Vec<Vec<f32>> = (0..len).map(|_| row(spec.act_dim, -1.0, 1.0)).collect();
        let ach: Vec<Vec<f32>> = (0..len).map(|_| row(spec.goal_dim, -5.0, 5.0)).collect();
        let goal = row(spec.goal_dim, -5.0, 5.0);
        d.push(Trajectory::from_rows(spec, &obs, &act, goal, &ach, Provenance::Original).unwrap())
            .unwrap();
    }
    d
}

/// Enumerates every truncation point directly from the flat arrays.
pub fn brute_force(d: &Dataset) -> Vec<Trajectory> {
    let mut out: Vec<Trajectory> = d.trajectories.clone();
    for src in &d.trajectories {
        let total = src.observations.len() / src.obs_dim;
        for cut in 1..=total {
            out.push(Trajectory {
                task_id: src.task_id.clone(),
                obs_dim: src.obs_dim,
                goal_dim: src.goal_dim,
                act_dim: src.act_dim,
                observations: src.observations[..cut * src.obs_dim].to_vec(),
                actions: src.actions[..cut * src.act_dim].to_vec(),
                goal: src.achieved_goals[(cut - 1) * src.goal_dim..cut * src.goal_dim].to_vec(),
                achieved_goals: src.achieved_goals[..cut * src.goal_dim].to_vec(),
                provenance: Provenance::Relabeled,
            });
        }
    }
    out
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn same(a: &Trajectory, b: &Trajectory) -> bool {
    a.task_id == b.task_id
        && (a.obs_dim, a.goal_dim, a.act_dim) == (b.obs_dim, b.goal_dim, b.act_dim)
        && a.provenance == b.provenance
        && bits(&a.observations) == bits(&b.observations)
        && bits(&a.actions) == bits(&b.actions)
        && bits(&a.goal) == bits(&b.goal)
        && bits(&a.achieved_goals) == bits(&b.achieved_goals)
}

pub struct HindsightCheck {
    pub matches: bool,
    pub relabeled: usize,
    pub total_steps: usize,
}

pub fn check(seed: u64, n: usize) -> HindsightCheck {
    let d = synthetic_dataset(seed, n);
    let got = hindsight_relabel(&d).unwrap();
    let want = brute_force(&d);
    let matches = got.tasks == d.tasks
        && got.trajectories.len() == want.len()
        && got.trajectories.iter().zip(&want).all(|(a, b)| same(a, b));
    HindsightCheck {
        matches,
        relabeled: got.count(Provenance::Relabeled),
        total_steps: d.total_timesteps(),
    }
}
