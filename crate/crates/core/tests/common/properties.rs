//! Causality and mask-invariance checks on freshly initialized models.

use gcdt::data::{NormStats, TaskRegistry, Window};
use gcdt::env::{collect_demos, EnvKind};
use gcdt::model::{item_dim, ItemKind, ModelBundle, ModelConfig, SequenceInput, TokenMask};
use gcdt::numerics::Pcg32;
use gcdt::objectives::{plan_predictions, MaskPlan, ObjectiveKind, Read};

pub fn bundle(seed: u64) -> ModelBundle {
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        max_timesteps: 6,
        dropout: 0.0,
    };
    let tasks: TaskRegistry = EnvKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), k.task_spec(10)))
        .collect();
    let norms = tasks
        .iter()
        .map(|(k, s)| (k.clone(), NormStats::identity(s)))
        .collect();
    ModelBundle::new(cfg, tasks, norms, seed).unwrap()
}

fn values(rng: &mut Pcg32, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| rng.uniform_range(-2.0, 2.0) as f32)
        .collect()
}

pub fn random_input(b: &ModelBundle, task: &str, rng: &mut Pcg32) -> SequenceInput {
    let spec = b.spec(task).unwrap();
    let n = 1 + rng.below_usize(b.config.max_timesteps);
    let n_actions = if rng.bernoulli(0.5) { n } else { n - 1 };
    SequenceInput {
        n,
        n_actions,
        time_to_goal: values(rng, n),
        goals: values(rng, n * spec.goal_dim),
        observations: values(rng, n * spec.obs_dim),
        actions: values(rng, n_actions * spec.act_dim),
    }
}

/// Every head at every position it can be read from, plus a random mask.
fn all_reads(input: &SequenceInput, rng: &mut Pcg32) -> MaskPlan {
    let n_tokens = input.n_tokens();
    let read = |head, position| Read {
        head,
        position,
        target: Vec::new(),
        include: true,
    };
    let mut reads = Vec::new();
    for i in 0..input.n {
        reads.push(read(ItemKind::Action, ItemKind::Observation.position(i)));
    }
    for i in 0..input.n_actions {
        let p = ItemKind::Action.position(i);
        reads.push(read(ItemKind::Observation, p));
        reads.push(read(ItemKind::TimeToGoal, p));
    }
    let flags: Vec<bool> = (0..n_tokens).map(|_| rng.bernoulli(0.3)).collect();
    let mask = TokenMask::from_flags(flags);
    for p in mask.masked_positions() {
        reads.push(read(ItemKind::at_position(p).1, p));
    }
    MaskPlan { mask, reads }
}

fn perturb_after(
    b: &ModelBundle,
    task: &str,
    input: &SequenceInput,
    after: usize,
    rng: &mut Pcg32,
) -> SequenceInput {
    let spec = b.spec(task).unwrap();
    let mut out = input.clone();
    for pos in after + 1..input.n_tokens() {
        let (i, kind) = ItemKind::at_position(pos);
        let fresh = values(rng, item_dim(spec, kind));
        out.item_mut(kind, i, spec).copy_from_slice(&fresh);
    }
    out
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub struct CausalityReport {
    pub inputs: usize,
    pub reads: usize,
    pub violations: usize,
    /// Reads whose output moved when an earlier token was perturbed, showing
    /// the check is not vacuous.
    pub sensitive: usize,
}

pub fn causality(seed: u64, n_inputs: usize) -> CausalityReport {
    let b = bundle(seed);
    let mut rng = Pcg32::derive(seed, 9);
    let mut r = CausalityReport {
        inputs: n_inputs,
        reads: 0,
        violations: 0,
        sensitive: 0,
    };
    let tasks: Vec<String> = b.tasks.keys().cloned().collect();
    for _ in 0..n_inputs {
        let task = tasks[rng.below_usize(tasks.len())].clone();
        let input = random_input(&b, &task, &mut rng);
        let plan = all_reads(&input, &mut rng);
        let base = plan_predictions(&b, &task, &input, &plan).unwrap();
        for (k, read) in plan.reads.iter().enumerate() {
            r.reads += 1;
            let later = perturb_after(&b, &task, &input, read.position, &mut rng);
            let y = plan_predictions(
                &b,
                &task,
                &later,
                &MaskPlan {
                    mask: plan.mask.clone(),
                    reads: vec![read.clone()],
                },
            )
            .unwrap();
            if bits(&y[0]) != bits(&base[k]) {
                r.violations += 1;
            }
            if read.position > 0 && !plan.mask.is_masked(0) {
                let spec = b.spec(&task).unwrap();
                let mut probe = input.clone();
                probe.item_mut(ItemKind::TimeToGoal, 0, spec)[0] += 0.5;
                let y = plan_predictions(
                    &b,
                    &task,
                    &probe,
                    &MaskPlan {
                        mask: plan.mask.clone(),
                        reads: vec![read.clone()],
                    },
                )
                .unwrap();
                if bits(&y[0]) != bits(&base[k]) {
                    r.sensitive += 1;
                }
            }
        }
    }
    r
}

pub struct InvarianceReport {
    pub windows: usize,
    pub dynamics_changed: usize,
    pub time_to_goal_changed: usize,
}

/// Windows of expert demos under the dynamics and time-to-goal plans, with
/// the masked item types replaced by random values.
pub fn mask_invariance(seed: u64, n_windows: usize) -> InvarianceReport {
    let b = bundle(seed);
    let mut rng = Pcg32::derive(seed, 10);
    let mut report = InvarianceReport {
        windows: 0,
        dynamics_changed: 0,
        time_to_goal_changed: 0,
    };
    for kind in EnvKind::ALL {
        let (data, _) = collect_demos(kind, 4, seed).unwrap();
        let task = kind.name();
        let spec = b.spec(task).unwrap().clone();
        let norm = b.norm(task).unwrap().clone();
        for _ in 0..n_windows {
            let traj = &data.trajectories[rng.below_usize(data.len())];
            let e = 1 + rng.below_usize(traj.len());
            let window = Window::ending_at(traj, e, b.config.max_timesteps);
            let input = SequenceInput::from_window(&window, &norm);
            report.windows += 1;
            for (objective, hidden) in [
                (
                    ObjectiveKind::ForwardDynamics,
                    &[ItemKind::TimeToGoal, ItemKind::Goal][..],
                ),
                (ObjectiveKind::TimeToGoal, &[ItemKind::TimeToGoal][..]),
            ] {
                let plan = MaskPlan::build(objective, &window, &input, 0.15, &mut rng).unwrap();
                let base = plan_predictions(&b, task, &input, &plan).unwrap();
                let mut scrambled = input.clone();
                for i in 0..input.n {
                    for &k in hidden {
                        let fresh = values(&mut rng, item_dim(&spec, k));
                        scrambled.item_mut(k, i, &spec).copy_from_slice(&fresh);
                    }
                }
                let y = plan_predictions(&b, task, &scrambled, &plan).unwrap();
                let changed = base.iter().zip(&y).any(|(a, c)| bits(a) != bits(c));
                if changed {
                    match objective {
                        ObjectiveKind::ForwardDynamics => report.dynamics_changed += 1,
                        _ => report.time_to_goal_changed += 1,
                    }
                }
            }
        }
    }
    report
}
