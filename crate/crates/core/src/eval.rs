//! Closed-loop rollouts and multi-seed success-rate evaluation.

use std::collections::VecDeque;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::NormStats;
use crate::env::{Env, EnvError, EnvKind};
use crate::model::{ModelBundle, ModelError, SequenceInput};
use crate::numerics::mix_seed;

/// Domain tag separating evaluation resets from demonstration resets that
/// use the same numeric seed.
const EVAL_DOMAIN: u64 = 0x6576_616c;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("environment {env} has dimensions obs {obs}, goal {goal}, act {act}; model task {task} does not match")]
    Dimensions {
        env: String,
        task: String,
        obs: usize,
        goal: usize,
        act: usize,
    },
    #[error("policy returned {got} action components, environment expects {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("at least one seed and one episode are required")]
    Empty,
}

/// Time-delayed time-to-goal estimate at 1-based step `t`:
/// `max(expected_steps - t + 1, 1)`.
pub fn estimate_time_to_goal(t: usize, expected_steps: usize) -> usize {
    (expected_steps + 1).saturating_sub(t).max(1)
}

/// Reset seed of episode `episode` under evaluation seed `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    mix_seed(mix_seed(seed, EVAL_DOMAIN), episode as u64)
}

/// The most recent `capacity` timestep groups of an episode, raw (not
/// normalized). The newest group may lack its action.
#[derive(Clone, Debug)]
pub struct HistoryCache {
    capacity: usize,
    first: usize,
    goal: Vec<f32>,
    time_to_goal: VecDeque<f32>,
    observations: VecDeque<Vec<f32>>,
    actions: VecDeque<Vec<f32>>,
}

impl HistoryCache {
    pub fn new(capacity: usize, goal: Vec<f32>) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            first: 1,
            goal,
            time_to_goal: VecDeque::new(),
            observations: VecDeque::new(),
            actions: VecDeque::new(),
        }
    }

    /// Starts a new timestep group, discarding the oldest group when full.
    pub fn push_step(&mut self, time_to_goal: f32, observation: Vec<f32>) {
        debug_assert_eq!(
            self.actions.len(),
            self.observations.len(),
            "previous group lacks its action"
        );
        if self.observations.len() == self.capacity {
            self.time_to_goal.pop_front();
            self.observations.pop_front();
            self.actions.pop_front();
            self.first += 1;
        }
        self.time_to_goal.push_back(time_to_goal);
        self.observations.push_back(observation);
    }

    pub fn push_action(&mut self, action: Vec<f32>) {
        debug_assert_eq!(
            self.actions.len() + 1,
            self.observations.len(),
            "no open group"
        );
        self.actions.push_back(action);
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Absolute 1-based episode timesteps currently held.
    pub fn timesteps(&self) -> RangeInclusive<usize> {
        self.first..=self.first + self.len() - 1
    }

    pub fn goal(&self) -> &[f32] {
        &self.goal
    }

    pub fn to_input(&self, norm: &NormStats) -> SequenceInput {
        let ttg: Vec<f32> = self.time_to_goal.iter().copied().collect();
        let goals: Vec<f32> = (0..self.len())
            .flat_map(|_| self.goal.iter().copied())
            .collect();
        let obs: Vec<f32> = self.observations.iter().flatten().copied().collect();
        let act: Vec<f32> = self.actions.iter().flatten().copied().collect();
        SequenceInput::from_raw(norm, &ttg, &goals, &obs, &act)
    }
}

/// Chooses actions from the environment and the episode history.
pub trait Policy: Sync {
    fn act(&self, env: &Env, history: &HistoryCache) -> Result<Vec<f32>, EvalError>;
}

/// Acts with the model's action head at the newest observation token.
pub struct ModelPolicy<'a> {
    pub bundle: &'a ModelBundle,
    pub task: String,
}

impl<'a> ModelPolicy<'a> {
    pub fn new(bundle: &'a ModelBundle, task: &str) -> Result<Self, EvalError> {
        bundle.spec(task)?;
        Ok(Self {
            bundle,
            task: task.to_string(),
        })
    }
}

impl Policy for ModelPolicy<'_> {
    fn act(&self, _env: &Env, history: &HistoryCache) -> Result<Vec<f32>, EvalError> {
        let input = history.to_input(self.bundle.norm(&self.task)?);
        Ok(self.bundle.predict_action(&self.task, &input, input.n)?)
    }
}

pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn act(&self, env: &Env, _history: &HistoryCache) -> Result<Vec<f32>, EvalError> {
        Ok(env.expert_action())
    }
}

pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&self, env: &Env, _history: &HistoryCache) -> Result<Vec<f32>, EvalError> {
        Ok(vec![0.0; env.kind().act_dim()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    /// Actions executed.
    pub steps: usize,
    pub actions: Vec<Vec<f32>>,
}

#[derive(Clone, Copy, Debug)]
pub struct RolloutSettings {
    pub history: usize,
    pub expected_steps: usize,
    pub max_steps: usize,
}

impl RolloutSettings {
    pub fn for_model(bundle: &ModelBundle, task: &str) -> Result<Self, EvalError> {
        let spec = bundle.spec(task)?;
        Ok(Self {
            history: bundle.config.max_timesteps,
            expected_steps: spec.expected_steps,
            max_steps: spec.max_episode_steps,
        })
    }
}

/// Runs one episode from `env`'s current state. Success is checked before
/// every action and after the last one.
pub fn rollout_episode(
    env: &mut Env,
    policy: &dyn Policy,
    settings: &RolloutSettings,
) -> Result<(bool, Vec<Vec<f32>>), EvalError> {
    let act_dim = env.kind().act_dim();
    let mut history = HistoryCache::new(settings.history, env.goal().to_vec());
    let mut actions = Vec::new();
    for t in 1..=settings.max_steps {
        if env.is_success() {
            return Ok((true, actions));
        }
        history.push_step(
            estimate_time_to_goal(t, settings.expected_steps) as f32,
            env.observation(),
        );
        let action = policy.act(env, &history)?;
        if action.len() != act_dim {
            return Err(EvalError::ActionDim {
                expected: act_dim,
                got: action.len(),
            });
        }
        env.step(&action)?;
        history.push_action(action.clone());
        actions.push(action);
    }
    Ok((env.is_success(), actions))
}

/// Success rates over `episodes` rollouts for each seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub per_seed_rates: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub mean_episode_length: f64,
    #[serde(skip)]
    pub outcomes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn check_dimensions(kind: EnvKind, bundle: &ModelBundle, task: &str) -> Result<(), EvalError> {
    let spec = bundle.spec(task)?;
    if (spec.obs_dim, spec.goal_dim, spec.act_dim)
        != (kind.obs_dim(), kind.goal_dim(), kind.act_dim())
    {
        return Err(EvalError::Dimensions {
            env: kind.name().into(),
            task: task.into(),
            obs: kind.obs_dim(),
            goal: kind.goal_dim(),
            act: kind.act_dim(),
        });
    }
    Ok(())
}

/// Runs every `(seed, episode)` pair, in parallel, and reports results in
/// seed-then-episode order.
pub fn evaluate_policy(
    kind: EnvKind,
    policy: &dyn Policy,
    settings: &RolloutSettings,
    episodes: usize,
    seeds: &[u64],
) -> Result<EvalReport, EvalError> {
    if episodes == 0 || seeds.is_empty() {
        return Err(EvalError::Empty);
    }
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..episodes).map(move |e| (s, e)))
        .collect();
    let outcomes: Vec<EpisodeOutcome> = jobs
        .par_iter()
        .map(|&(seed, episode)| {
            let mut env = Env::new(kind, episode_seed(seed, episode));
            let (success, actions) = rollout_episode(&mut env, policy, settings)?;
            Ok(EpisodeOutcome {
                seed,
                episode,
                success,
                steps: actions.len(),
                actions,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let per_seed_rates: Vec<f64> = outcomes
        .chunks(episodes)
        .map(|c| c.iter().filter(|o| o.success).count() as f64 / episodes as f64)
        .collect();
    let n = per_seed_rates.len() as f64;
    let mean = per_seed_rates.iter().sum::<f64>() / n;
    let std = (per_seed_rates
        .iter()
        .map(|r| (r - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mean_episode_length =
        outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / outcomes.len() as f64;
    Ok(EvalReport {
        task: kind.name().to_string(),
        seeds: seeds.to_vec(),
        episodes,
        per_seed_rates,
        mean,
        std,
        mean_episode_length,
        outcomes,
    })
}

/// Evaluates the bundle's adapters for `env_name` on that environment.
pub fn evaluate(
    env_name: &str,
    bundle: &ModelBundle,
    episodes: usize,
    seeds: &[u64],
) -> Result<EvalReport, EvalError> {
    let kind: EnvKind = env_name.parse()?;
    check_dimensions(kind, bundle, env_name)?;
    let policy = ModelPolicy::new(bundle, env_name)?;
    let settings = RolloutSettings::for_model(bundle, env_name)?;
    evaluate_policy(kind, &policy, &settings, episodes, seeds)
}
