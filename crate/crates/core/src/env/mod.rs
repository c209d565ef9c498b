//! Deterministic goal-conditioned kinematic environments in the unit cube,
//! with scripted experts.
//!
//! | task          | obs | goal | act | max steps |
//! |---------------|-----|------|-----|-----------|
//! | `reach3d`     | 4   | 3    | 4   | 50        |
//! | `pickplace3d` | 10  | 3    | 4   | 60        |
//! | `bireach3d`   | 8   | 6    | 8   | 50        |
//!
//! Each arm takes four action components: a displacement of
//! `STEP_SIZE * a[0..3]` and a gripper command (`< 0` closes, `>= 0` opens).

mod demos;
mod expert;

use std::fmt;
use std::str::FromStr;

use crate::data::TaskSpec;
use crate::numerics::Pcg32;

pub use demos::{collect_demos, generate_demos, DemoReport};
pub use expert::ExpertPhase;

pub const STEP_SIZE: f32 = 0.05;
pub const ATTACH_RADIUS: f32 = 0.03;
pub const SUCCESS_THRESHOLD: f32 = 0.02;
pub const MIN_GOAL_SEPARATION: f32 = 0.2;
/// Height above the object the pick-and-place expert aligns at before descending.
pub const HOVER_HEIGHT: f32 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment {0:?} (expected reach3d, pickplace3d or bireach3d)")]
    UnknownEnv(String),
    #[error("action has {got} components, {env} expects {expected}")]
    ActionDim {
        env: EnvKind,
        expected: usize,
        got: usize,
    },
    #[error("episode already ran its {0} steps")]
    EpisodeOver(usize),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvKind {
    Reach3d,
    PickPlace3d,
    BiReach3d,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Reach3d, EnvKind::PickPlace3d, EnvKind::BiReach3d];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reach3d => "reach3d",
            EnvKind::PickPlace3d => "pickplace3d",
            EnvKind::BiReach3d => "bireach3d",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::Reach3d => 4,
            EnvKind::PickPlace3d => 10,
            EnvKind::BiReach3d => 8,
        }
    }

    pub fn goal_dim(self) -> usize {
        match self {
            EnvKind::Reach3d | EnvKind::PickPlace3d => 3,
            EnvKind::BiReach3d => 6,
        }
    }

    pub fn act_dim(self) -> usize {
        4 * self.n_arms()
    }

    pub fn n_arms(self) -> usize {
        match self {
            EnvKind::BiReach3d => 2,
            _ => 1,
        }
    }

    pub fn max_episode_steps(self) -> usize {
        match self {
            EnvKind::PickPlace3d => 60,
            _ => 50,
        }
    }

    /// Task spec with the given expected episode length.
    pub fn task_spec(self, expected_steps: usize) -> TaskSpec {
        TaskSpec {
            task_id: self.name().to_string(),
            obs_dim: self.obs_dim(),
            goal_dim: self.goal_dim(),
            act_dim: self.act_dim(),
            max_episode_steps: self.max_episode_steps(),
            expected_steps,
            success_threshold: SUCCESS_THRESHOLD,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub pos: [f32; 3],
    pub closed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Object {
    pub pos: [f32; 3],
    /// Index of the arm holding the object.
    pub held_by: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub arms: Vec<Arm>,
    pub objects: Vec<Object>,
    pub step_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvObservation {
    pub observation: Vec<f32>,
    pub achieved_goal: Vec<f32>,
    pub goal: Vec<f32>,
    pub success: bool,
    /// Set when the submitted action had components outside `[-1, 1]`.
    pub action_clamped: bool,
}

#[derive(Clone, Debug)]
pub struct Env {
    kind: EnvKind,
    state: EnvState,
    goal: Vec<f32>,
}

pub fn distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt()
}

fn clamp_unit(p: &mut [f32; 3]) {
    for v in p.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

fn uniform_point(rng: &mut Pcg32, lo: [f32; 3], hi: [f32; 3]) -> [f32; 3] {
    let mut p = [0.0; 3];
    for i in 0..3 {
        p[i] = rng.uniform_range(lo[i] as f64, hi[i] as f64) as f32;
    }
    p
}

/// Uniform point in the box at least [`MIN_GOAL_SEPARATION`] from `from`.
fn separated_point(rng: &mut Pcg32, from: [f32; 3], lo: [f32; 3], hi: [f32; 3]) -> [f32; 3] {
    loop {
        let p = uniform_point(rng, lo, hi);
        if distance(&p, &from) >= MIN_GOAL_SEPARATION {
            return p;
        }
    }
}

/// Creates an environment and resets it with `seed`.
pub fn make_env(name: &str, seed: u64) -> Result<Env, EnvError> {
    Ok(Env::new(name.parse()?, seed))
}

impl Env {
    pub fn new(kind: EnvKind, seed: u64) -> Self {
        let mut env = Env {
            kind,
            state: EnvState {
                arms: Vec::new(),
                objects: Vec::new(),
                step_count: 0,
            },
            goal: Vec::new(),
        };
        env.reset(seed);
        env
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn goal(&self) -> &[f32] {
        &self.goal
    }

    /// Replaces the state and goal, e.g. to construct edge cases.
    pub fn set_state(&mut self, state: EnvState, goal: Vec<f32>) {
        assert_eq!(state.arms.len(), self.kind.n_arms());
        assert_eq!(goal.len(), self.kind.goal_dim());
        self.state = state;
        self.goal = goal;
    }

    /// Draws start positions and a goal from `seed`. Goals lie at least
    /// [`MIN_GOAL_SEPARATION`] from the entity that has to reach them.
    pub fn reset(&mut self, seed: u64) -> EnvObservation {
        let mut rng = Pcg32::new(seed);
        let full = ([0.0; 3], [1.0; 3]);
        let arm = |rng: &mut Pcg32| Arm {
            pos: uniform_point(rng, full.0, full.1),
            closed: false,
        };
        match self.kind {
            EnvKind::Reach3d => {
                let a = arm(&mut rng);
                self.goal = separated_point(&mut rng, a.pos, full.0, full.1).to_vec();
                self.state = EnvState {
                    arms: vec![a],
                    objects: Vec::new(),
                    step_count: 0,
                };
            }
            EnvKind::BiReach3d => {
                let a = arm(&mut rng);
                let b = arm(&mut rng);
                let mut goal = separated_point(&mut rng, a.pos, full.0, full.1).to_vec();
                goal.extend(separated_point(&mut rng, b.pos, full.0, full.1));
                self.goal = goal;
                self.state = EnvState {
                    arms: vec![a, b],
                    objects: Vec::new(),
                    step_count: 0,
                };
            }
            EnvKind::PickPlace3d => {
                let a = arm(&mut rng);
                let obj = uniform_point(&mut rng, [0.05, 0.05, 0.0], [0.95, 0.95, 0.0]);
                self.goal =
                    separated_point(&mut rng, obj, [0.05, 0.05, 0.0], [0.95, 0.95, 0.3]).to_vec();
                self.state = EnvState {
                    arms: vec![a],
                    objects: vec![Object {
                        pos: obj,
                        held_by: None,
                    }],
                    step_count: 0,
                };
            }
        }
        self.observe(false)
    }

    pub fn achieved_goal(&self) -> Vec<f32> {
        match self.kind {
            EnvKind::Reach3d => self.state.arms[0].pos.to_vec(),
            EnvKind::BiReach3d => self.state.arms.iter().flat_map(|a| a.pos).collect(),
            EnvKind::PickPlace3d => self.state.objects[0].pos.to_vec(),
        }
    }

    /// Largest per-entity distance between achieved and desired goal.
    pub fn goal_distance(&self) -> f32 {
        let achieved = self.achieved_goal();
        achieved
            .chunks(3)
            .zip(self.goal.chunks(3))
            .map(|(a, g)| distance(a, g))
            .fold(0.0, f32::max)
    }

    pub fn is_success(&self) -> bool {
        self.goal_distance() < SUCCESS_THRESHOLD
    }

    pub fn observation(&self) -> Vec<f32> {
        let grip = |a: &Arm| if a.closed { 1.0 } else { 0.0 };
        let mut o = Vec::with_capacity(self.kind.obs_dim());
        for arm in &self.state.arms {
            o.extend(arm.pos);
            o.push(grip(arm));
        }
        if let Some(obj) = self.state.objects.first() {
            let ee = self.state.arms[0].pos;
            o.extend(obj.pos);
            o.extend((0..3).map(|i| obj.pos[i] - ee[i]));
        }
        o
    }

    pub fn observe(&self, action_clamped: bool) -> EnvObservation {
        EnvObservation {
            observation: self.observation(),
            achieved_goal: self.achieved_goal(),
            goal: self.goal.clone(),
            success: self.is_success(),
            action_clamped,
        }
    }

    /// Advances the kinematics by one step.
    pub fn step(&mut self, action: &[f32]) -> Result<EnvObservation, EnvError> {
        let expected = self.kind.act_dim();
        if action.len() != expected {
            return Err(EnvError::ActionDim {
                env: self.kind,
                expected,
                got: action.len(),
            });
        }
        let max = self.kind.max_episode_steps();
        if self.state.step_count >= max {
            return Err(EnvError::EpisodeOver(max));
        }
        let mut clamped = false;
        let a: Vec<f32> = action
            .iter()
            .map(|&v| {
                let c = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
                clamped |= c != v;
                c
            })
            .collect();
        for (k, cmd) in a.chunks(4).enumerate() {
            let arm = &mut self.state.arms[k];
            for (p, c) in arm.pos.iter_mut().zip(&cmd[..3]) {
                *p += STEP_SIZE * c;
            }
            clamp_unit(&mut arm.pos);
            let pos = arm.pos;
            let close = cmd[3] < 0.0;
            arm.closed = close;
            for obj in &mut self.state.objects {
                if obj.held_by == Some(k) {
                    if close {
                        obj.pos = pos;
                    } else {
                        obj.held_by = None;
                    }
                } else if close && obj.held_by.is_none() && distance(&obj.pos, &pos) < ATTACH_RADIUS
                {
                    obj.held_by = Some(k);
                    obj.pos = pos;
                }
            }
        }
        self.state.step_count += 1;
        Ok(self.observe(clamped))
    }

    /// The scripted expert's action for the current state.
    pub fn expert_action(&self) -> Vec<f32> {
        expert::expert_action(self)
    }

    pub fn expert_phase(&self) -> Option<ExpertPhase> {
        expert::phase(self)
    }
}
