//! Training objectives: mask plans, batches, losses and the round-robin
//! pretraining step.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Trajectory, Window, WindowSampler};
use crate::model::{item_dim, ItemKind, ModelBundle, ModelError, SequenceInput, TokenMask};
use crate::numerics::{AdamW, Binder, GradStore, Graph, NumericsError, Pcg32, Tensor, Var};

pub const DEFAULT_MASK_RATIO: f64 = 0.15;

/// Samples processed sequentially per worker before partial gradients are
/// merged. Fixed so that results do not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("batch_size must be at least 1")]
    BatchSize,
    #[error("mask ratio {0} outside (0, 1)")]
    MaskRatio(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no training data for task {0}")]
    NoData(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    ActionPrediction,
    ForwardDynamics,
    TimeToGoal,
    SequenceReconstruction,
}

impl ObjectiveKind {
    /// Round-robin order of a pretraining cycle.
    pub const ALL: [ObjectiveKind; 4] = [
        ObjectiveKind::ActionPrediction,
        ObjectiveKind::ForwardDynamics,
        ObjectiveKind::TimeToGoal,
        ObjectiveKind::SequenceReconstruction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::ActionPrediction => "action",
            ObjectiveKind::ForwardDynamics => "dynamics",
            ObjectiveKind::TimeToGoal => "time_to_goal",
            ObjectiveKind::SequenceReconstruction => "reconstruction",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown objective {s}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub action: f64,
    pub dynamics: f64,
    pub time_to_goal: f64,
    pub reconstruction: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            action: 1.0,
            dynamics: 1.0,
            time_to_goal: 1.0,
            reconstruction: 1.0,
        }
    }
}

impl LossWeights {
    pub fn action_only() -> Self {
        Self {
            action: 1.0,
            dynamics: 0.0,
            time_to_goal: 0.0,
            reconstruction: 0.0,
        }
    }

    pub fn get(&self, kind: ObjectiveKind) -> f64 {
        match kind {
            ObjectiveKind::ActionPrediction => self.action,
            ObjectiveKind::ForwardDynamics => self.dynamics,
            ObjectiveKind::TimeToGoal => self.time_to_goal,
            ObjectiveKind::SequenceReconstruction => self.reconstruction,
        }
    }
}

/// One supervised prediction: the `head` applied at token `position`.
#[derive(Clone, Debug, PartialEq)]
pub struct Read {
    pub head: ItemKind,
    pub position: usize,
    pub target: Vec<f32>,
    pub include: bool,
}

/// Input substitutions and supervised reads for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlan {
    pub mask: TokenMask,
    pub reads: Vec<Read>,
}

impl MaskPlan {
    /// Builds the plan for `kind`. Observation, goal and time-to-goal targets
    /// are normalized; action targets are raw, matching the tanh head.
    pub fn build(
        kind: ObjectiveKind,
        window: &Window<'_>,
        input: &SequenceInput,
        mask_ratio: f64,
        rng: &mut Pcg32,
    ) -> Result<Self, ObjectiveError> {
        let n = input.n;
        let n_tokens = input.n_tokens();
        let spec_dims = |k: ItemKind| match k {
            ItemKind::TimeToGoal => 1,
            ItemKind::Goal => window.trajectory.goal_dim,
            ItemKind::Observation => window.trajectory.obs_dim,
            ItemKind::Action => window.trajectory.act_dim,
        };
        let target = |k: ItemKind, i: usize| -> Vec<f32> {
            if k == ItemKind::Action {
                return window.action(i).to_vec();
            }
            let d = spec_dims(k);
            let data = match k {
                ItemKind::TimeToGoal => &input.time_to_goal,
                ItemKind::Goal => &input.goals,
                _ => &input.observations,
            };
            data[i * d..(i + 1) * d].to_vec()
        };
        let read = |head: ItemKind, position: usize, i: usize| Read {
            head,
            position,
            target: target(head, i),
            include: true,
        };
        let plan = match kind {
            ObjectiveKind::ActionPrediction => MaskPlan {
                mask: TokenMask::none(n_tokens),
                reads: (0..n)
                    .map(|i| read(ItemKind::Action, ItemKind::Observation.position(i), i))
                    .collect(),
            },
            ObjectiveKind::ForwardDynamics => MaskPlan {
                mask: TokenMask::kinds(n_tokens, &[ItemKind::TimeToGoal, ItemKind::Goal]),
                reads: (1..n)
                    .map(|i| read(ItemKind::Observation, ItemKind::Action.position(i - 1), i))
                    .collect(),
            },
            ObjectiveKind::TimeToGoal => MaskPlan {
                mask: TokenMask::kinds(n_tokens, &[ItemKind::TimeToGoal]),
                reads: (1..n)
                    .map(|i| read(ItemKind::TimeToGoal, ItemKind::Action.position(i - 1), i))
                    .collect(),
            },
            ObjectiveKind::SequenceReconstruction => {
                if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
                    return Err(ObjectiveError::MaskRatio(mask_ratio));
                }
                let flags: Vec<bool> = (0..n_tokens).map(|_| rng.bernoulli(mask_ratio)).collect();
                let mask = TokenMask::from_flags(flags);
                let reads = mask
                    .masked_positions()
                    .map(|p| {
                        let (i, k) = ItemKind::at_position(p);
                        read(k, p, i)
                    })
                    .collect();
                MaskPlan { mask, reads }
            }
        };
        Ok(plan)
    }

    pub fn included_components(&self) -> usize {
        self.reads
            .iter()
            .filter(|r| r.include)
            .map(|r| r.target.len())
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub input: SequenceInput,
    pub plan: MaskPlan,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub task: String,
    pub kind: ObjectiveKind,
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn included_components(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.plan.included_components())
            .sum()
    }
}

/// Training trajectories grouped by task, in task-id order.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub tasks: Vec<(String, Vec<Trajectory>)>,
}

impl TrainingSet {
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Self {
        let mut tasks: Vec<(String, Vec<Trajectory>)> = Vec::new();
        let mut ids: Vec<&str> = trajectories.iter().map(|t| t.task_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        for id in ids {
            tasks.push((
                id.to_string(),
                trajectories
                    .iter()
                    .filter(|t| t.task_id == id)
                    .cloned()
                    .collect(),
            ));
        }
        Self { tasks }
    }

    pub fn task_ids(&self) -> Vec<&str> {
        self.tasks.iter().map(|(t, _)| t.as_str()).collect()
    }

    pub fn trajectories(&self, task: &str) -> Option<&[Trajectory]> {
        self.tasks
            .iter()
            .find(|(t, _)| t == task)
            .map(|(_, v)| v.as_slice())
    }

    /// Draws a task with probability proportional to its trajectory count.
    pub fn sample_task(&self, rng: &mut Pcg32) -> &str {
        let weights: Vec<usize> = self.tasks.iter().map(|(_, v)| v.len()).collect();
        &self.tasks[rng.weighted_index(&weights)].0
    }
}

/// Draws `batch_size` windows of `task` and builds their plans.
pub fn build_batch(
    bundle: &ModelBundle,
    data: &TrainingSet,
    task: &str,
    rng: &mut Pcg32,
    kind: ObjectiveKind,
    batch_size: usize,
    mask_ratio: f64,
) -> Result<Batch, ObjectiveError> {
    if batch_size == 0 {
        return Err(ObjectiveError::BatchSize);
    }
    let trajectories = data
        .trajectories(task)
        .ok_or_else(|| ObjectiveError::NoData(task.to_string()))?;
    let norm = bundle.norm(task)?;
    let sampler = WindowSampler::new(trajectories, bundle.config.max_timesteps)?;
    let mut samples = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let window = sampler.sample(rng);
        let input = SequenceInput::from_window(&window, norm);
        let plan = MaskPlan::build(kind, &window, &input, mask_ratio, rng)?;
        samples.push(Sample { input, plan });
    }
    Ok(Batch {
        task: task.to_string(),
        kind,
        samples,
    })
}

/// Mean squared error over the included components. No included components
/// gives zero.
pub fn compute_loss(pred: &[f32], target: &[f32], include: &[bool]) -> Result<f64, ObjectiveError> {
    if pred.len() != target.len() || pred.len() != include.len() {
        return Err(ObjectiveError::Shape(format!(
            "prediction {}, target {}, inclusion mask {}",
            pred.len(),
            target.len(),
            include.len()
        )));
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for ((&p, &t), &inc) in pred.iter().zip(target).zip(include) {
        if inc {
            sum += ((p - t) as f64).powi(2);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Sum of squared errors of one sample's included reads, on the graph.
fn sample_sq_error(
    bundle: &ModelBundle,
    g: &mut Graph,
    b: &mut Binder<'_>,
    task: &str,
    sample: &Sample,
    rng: Option<&mut Pcg32>,
) -> Result<Option<Var>, ObjectiveError> {
    let reads: Vec<&Read> = sample.plan.reads.iter().filter(|r| r.include).collect();
    if reads.is_empty() {
        return Ok(None);
    }
    let spec = bundle.spec(task)?;
    let mut rng = rng;
    let seq = bundle.embed_sequence(
        g,
        b,
        task,
        &sample.input,
        &sample.plan.mask,
        rng.as_deref_mut(),
    )?;
    let hidden = bundle.backbone_forward(g, b, &seq, rng)?;
    let mut total: Option<Var> = None;
    for kind in ItemKind::ALL {
        let group: Vec<&&Read> = reads.iter().filter(|r| r.head == kind).collect();
        if group.is_empty() {
            continue;
        }
        let dim = item_dim(spec, kind);
        let positions: Vec<usize> = group.iter().map(|r| r.position).collect();
        let mut target = Vec::with_capacity(group.len() * dim);
        for r in &group {
            if r.target.len() != dim {
                return Err(ObjectiveError::Shape(format!(
                    "{kind} target has {} components, head has {dim}",
                    r.target.len()
                )));
            }
            target.extend_from_slice(&r.target);
        }
        let pred = bundle.head(g, b, task, kind, hidden, &positions)?;
        let target = g.constant(Tensor::matrix(group.len(), dim, target)?);
        let diff = g.sub(pred, target)?;
        let sq = g.mul(diff, diff)?;
        let s = g.sum(sq);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total)
}

/// Head outputs for every read of `plan`, in plan order, without dropout.
pub fn plan_predictions(
    bundle: &ModelBundle,
    task: &str,
    input: &SequenceInput,
    plan: &MaskPlan,
) -> Result<Vec<Vec<f32>>, ObjectiveError> {
    let mut g = Graph::inference();
    let mut b = Binder::new(&bundle.params, false);
    let seq = bundle.embed_sequence(&mut g, &mut b, task, input, &plan.mask, None)?;
    let hidden = bundle.backbone_forward(&mut g, &mut b, &seq, None)?;
    plan.reads
        .iter()
        .map(|r| {
            let y = bundle.head(&mut g, &mut b, task, r.head, hidden, &[r.position])?;
            Ok(g.value(y).data().to_vec())
        })
        .collect()
}

/// Loss and parameter gradients of one batch, scaled by `weight`. Samples are
/// processed in fixed chunks and merged in order, so results are identical
/// for any thread count. With `dropout_seed` set, dropout is active.
pub fn batch_gradients(
    bundle: &ModelBundle,
    batch: &Batch,
    weight: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, GradStore), ObjectiveError> {
    let count = batch.included_components();
    let mut grads = GradStore::new(bundle.params.len());
    if count == 0 {
        return Ok((0.0, grads));
    }
    let norm = (weight / count as f64) as f32;
    let indexed: Vec<(usize, &Sample)> = batch.samples.iter().enumerate().collect();
    let partials: Vec<Result<(f64, GradStore), ObjectiveError>> = indexed
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = GradStore::new(bundle.params.len());
            let mut sse = 0.0f64;
            for &(i, sample) in chunk {
                let mut g = Graph::new();
                let mut b = Binder::new(&bundle.params, true);
                let mut rng = dropout_seed.map(|s| Pcg32::derive(s, i as u64));
                let Some(err) =
                    sample_sq_error(bundle, &mut g, &mut b, &batch.task, sample, rng.as_mut())?
                else {
                    continue;
                };
                sse += g.value(err).item() as f64;
                let loss = g.scale(err, norm);
                let mut gr = g.backward(loss)?;
                acc.merge(&b.collect(&mut gr));
            }
            Ok((sse, acc))
        })
        .collect();
    let mut sse = 0.0;
    for p in partials {
        let (s, g) = p?;
        sse += s;
        grads.merge(&g);
    }
    Ok((sse / count as f64, grads))
}

/// Unweighted batch loss without gradients or dropout.
pub fn batch_loss(bundle: &ModelBundle, batch: &Batch) -> Result<f64, ObjectiveError> {
    let count = batch.included_components();
    if count == 0 {
        return Ok(0.0);
    }
    let mut sse = 0.0f64;
    for sample in &batch.samples {
        let mut g = Graph::inference();
        let mut b = Binder::new(&bundle.params, false);
        if let Some(err) = sample_sq_error(bundle, &mut g, &mut b, &batch.task, sample, None)? {
            sse += g.value(err).item() as f64;
        }
    }
    Ok(sse / count as f64)
}

#[derive(Clone, Copy, Debug)]
pub struct StepSettings {
    pub batch_size: usize,
    pub mask_ratio: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub lr: f64,
    pub dropout: bool,
}

/// Loss of each objective that ran in a cycle, in round-robin order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub losses: Vec<(ObjectiveKind, String, f64)>,
}

impl StepLosses {
    pub fn get(&self, kind: ObjectiveKind) -> Option<f64> {
        self.losses
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, _, l)| *l)
    }
}

/// One cycle: for each objective with non-zero weight, in round-robin order,
/// sample a task, build a batch, and take one optimizer step.
pub fn pretraining_step(
    bundle: &mut ModelBundle,
    opt: &mut AdamW,
    data: &TrainingSet,
    rng: &mut Pcg32,
    weights: &LossWeights,
    settings: &StepSettings,
) -> Result<StepLosses, ObjectiveError> {
    let mut out = StepLosses::default();
    for kind in ObjectiveKind::ALL {
        let w = weights.get(kind);
        if w == 0.0 {
            continue;
        }
        let task = data.sample_task(rng).to_string();
        let batch = build_batch(
            bundle,
            data,
            &task,
            rng,
            kind,
            settings.batch_size,
            settings.mask_ratio,
        )?;
        let dropout_seed = settings.dropout.then(|| rng.next_u64());
        let (loss, mut grads) = batch_gradients(bundle, &batch, w, dropout_seed)?;
        if let Some(max) = settings.grad_clip {
            grads.clip_global_norm(max);
        }
        opt.step_with_lr(&mut bundle.params, &grads, settings.lr)?;
        out.losses.push((kind, task, loss));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NormStats, Provenance, TaskRegistry};
    use crate::env::{collect_demos, EnvKind};
    use crate::model::ModelConfig;

    fn setup(kind: EnvKind, episodes: usize) -> (ModelBundle, TrainingSet) {
        let (data, _) = collect_demos(kind, episodes, 11).unwrap();
        let spec = data.tasks[kind.name()].clone();
        let norm = NormStats::compute(&data.trajectories, &spec).unwrap();
        let tasks: TaskRegistry = [(kind.name().to_string(), spec)].into_iter().collect();
        let norms = [(kind.name().to_string(), norm)].into_iter().collect();
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            max_timesteps: 5,
            dropout: 0.0,
        };
        (
            ModelBundle::new(cfg, tasks, norms, 1).unwrap(),
            TrainingSet::from_trajectories(&data.trajectories),
        )
    }

    #[test]
    fn compute_loss_examples() {
        assert_eq!(
            compute_loss(&[1.0, 2.0], &[1.0, 2.0], &[true, true]).unwrap(),
            0.0
        );
        assert_eq!(
            compute_loss(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0], &[true; 3]).unwrap(),
            1.0
        );
        assert_eq!(compute_loss(&[5.0], &[1.0], &[false]).unwrap(), 0.0);
        assert!(compute_loss(&[1.0], &[1.0, 2.0], &[true]).is_err());
    }

    #[test]
    fn half_included_equals_subset_mse() {
        let mut rng = Pcg32::new(3);
        let pred: Vec<f32> = (0..40).map(|_| rng.normal() as f32).collect();
        let target: Vec<f32> = (0..40).map(|_| rng.normal() as f32).collect();
        let include: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let subset: f64 = (0..40)
            .step_by(2)
            .map(|i| ((pred[i] - target[i]) as f64).powi(2))
            .sum::<f64>()
            / 20.0;
        assert!((compute_loss(&pred, &target, &include).unwrap() - subset).abs() < 1e-12);
    }

    fn plan_for(kind: ObjectiveKind, t: usize, ratio: f64) -> Result<MaskPlan, ObjectiveError> {
        let (data, _) = collect_demos(EnvKind::Reach3d, 1, 2).unwrap();
        let traj = &data.trajectories[0];
        let w = Window::ending_at(traj, t, t);
        let norm = NormStats::compute(&data.trajectories, &data.tasks["reach3d"]).unwrap();
        let input = SequenceInput::from_window(&w, &norm);
        MaskPlan::build(kind, &w, &input, ratio, &mut Pcg32::new(0))
    }

    #[test]
    fn plan_reads_follow_objective() {
        let p = plan_for(ObjectiveKind::ForwardDynamics, 3, 0.15).unwrap();
        assert_eq!(
            p.reads.iter().map(|r| r.position).collect::<Vec<_>>(),
            vec![3, 7]
        );
        assert!(p.reads.iter().all(|r| r.head == ItemKind::Observation));
        assert_eq!(
            p.mask.masked_positions().collect::<Vec<_>>(),
            vec![0, 1, 4, 5, 8, 9]
        );
        let p = plan_for(ObjectiveKind::ActionPrediction, 5, 0.15).unwrap();
        assert_eq!(p.reads.len(), 5);
        assert_eq!(p.mask.masked_positions().count(), 0);
        let p = plan_for(ObjectiveKind::TimeToGoal, 3, 0.15).unwrap();
        assert_eq!(p.mask.masked_positions().collect::<Vec<_>>(), vec![0, 4, 8]);
        assert!(matches!(
            plan_for(ObjectiveKind::SequenceReconstruction, 3, 0.0),
            Err(ObjectiveError::MaskRatio(_))
        ));
        assert!(plan_for(ObjectiveKind::SequenceReconstruction, 3, 1.0).is_err());
        let p = plan_for(ObjectiveKind::SequenceReconstruction, 4, 0.5).unwrap();
        assert_eq!(
            p.reads.iter().map(|r| r.position).collect::<Vec<_>>(),
            p.mask.masked_positions().collect::<Vec<_>>()
        );
    }

    #[test]
    fn batch_size_zero_rejected() {
        let (m, data) = setup(EnvKind::Reach3d, 3);
        let r = build_batch(
            &m,
            &data,
            "reach3d",
            &mut Pcg32::new(0),
            ObjectiveKind::ActionPrediction,
            0,
            0.15,
        );
        assert!(matches!(r, Err(ObjectiveError::BatchSize)));
    }

    #[test]
    fn dynamics_loss_ignores_time_to_goal_and_goal() {
        let (m, data) = setup(EnvKind::Reach3d, 4);
        let batch = build_batch(
            &m,
            &data,
            "reach3d",
            &mut Pcg32::new(5),
            ObjectiveKind::ForwardDynamics,
            6,
            0.15,
        )
        .unwrap();
        let base = batch_loss(&m, &batch).unwrap();
        let mut rng = Pcg32::new(8);
        let mut shuffled = batch.clone();
        for s in &mut shuffled.samples {
            for v in s
                .input
                .time_to_goal
                .iter_mut()
                .chain(s.input.goals.iter_mut())
            {
                *v = rng.uniform_range(-5.0, 5.0) as f32;
            }
        }
        assert_eq!(batch_loss(&m, &shuffled).unwrap().to_bits(), base.to_bits());
    }

    #[test]
    fn gradient_loss_matches_inference_loss() {
        let (m, data) = setup(EnvKind::Reach3d, 4);
        for kind in ObjectiveKind::ALL {
            let batch =
                build_batch(&m, &data, "reach3d", &mut Pcg32::new(9), kind, 5, 0.3).unwrap();
            let (l, _) = batch_gradients(&m, &batch, 1.0, None).unwrap();
            let l2 = batch_loss(&m, &batch).unwrap();
            assert!((l - l2).abs() < 1e-9, "{kind}: {l} vs {l2}");
            assert!(l >= 0.0);
        }
    }

    #[test]
    fn action_objective_leaves_other_heads_untouched() {
        let (m, data) = setup(EnvKind::Reach3d, 4);
        let batch = build_batch(
            &m,
            &data,
            "reach3d",
            &mut Pcg32::new(1),
            ObjectiveKind::ActionPrediction,
            4,
            0.15,
        )
        .unwrap();
        let (_, grads) = batch_gradients(&m, &batch, 1.0, None).unwrap();
        for (id, p) in m.params.iter() {
            let is_other_head = ["head.obs", "head.goal", "head.time_to_goal"]
                .iter()
                .any(|h| p.name.contains(h));
            if is_other_head {
                assert!(grads.get(id).is_none(), "{}", p.name);
            }
        }
        assert!(grads
            .get(m.params.id("adapters.reach3d.head.act.weight").unwrap())
            .is_some());
    }

    #[test]
    fn task_sampling_is_proportional() {
        let (data, _) = collect_demos(EnvKind::Reach3d, 1, 0).unwrap();
        let t = data.trajectories[0].clone();
        let mut other = t.clone();
        other.task_id = "other".into();
        assert_eq!(other.provenance, Provenance::Original);
        let set = TrainingSet {
            tasks: vec![("a".into(), vec![t; 100]), ("b".into(), vec![other; 300])],
        };
        let mut rng = Pcg32::new(2024);
        let hits = (0..10_000)
            .filter(|_| set.sample_task(&mut rng) == "b")
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.75).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn round_robin_and_skipped_weights() {
        let (mut m, data) = setup(EnvKind::Reach3d, 3);
        let mut opt = AdamW::new(Default::default(), m.params.len());
        let settings = StepSettings {
            batch_size: 2,
            mask_ratio: 0.5,
            grad_clip: Some(1.0),
            lr: 1e-3,
            dropout: false,
        };
        let out = pretraining_step(
            &mut m,
            &mut opt,
            &data,
            &mut Pcg32::new(0),
            &LossWeights::default(),
            &settings,
        )
        .unwrap();
        assert_eq!(
            out.losses.iter().map(|l| l.0).collect::<Vec<_>>(),
            ObjectiveKind::ALL.to_vec()
        );
        assert_eq!(opt.step_count(), 4);
        let w = LossWeights {
            reconstruction: 0.0,
            ..Default::default()
        };
        let out =
            pretraining_step(&mut m, &mut opt, &data, &mut Pcg32::new(0), &w, &settings).unwrap();
        assert_eq!(out.losses.len(), 3);
        assert_eq!(opt.step_count(), 7);
    }
}
