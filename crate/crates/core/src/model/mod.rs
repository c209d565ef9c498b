//! The goal-conditioned decision transformer.
//!
//! Each timestep contributes four tokens in the order time-to-goal, goal,
//! observation, action. Items are embedded by per-task tokenizers, passed
//! through a shared causal transformer, and decoded by per-task heads.

mod checkpoint;
mod layout;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, NormStats, TaskRegistry, TaskSpec, Window};
use crate::numerics::{Binder, Graph, NumericsError, ParamStore, Pcg32, Tensor, Var};

pub use checkpoint::{
    decode_header, load_checkpoint, read_header, save_checkpoint, CheckpointError,
    CheckpointHeader, ManifestEntry, CHECKPOINT_VERSION, MAGIC,
};
pub use layout::{closed_form_param_count, item_dim, ParamSpec};
use layout::{AdapterIds, BackboneIds, LinearIds};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("no adapters for task {0}")]
    UnknownTask(String),
    #[error("window of {len} timesteps exceeds the model capacity of {max}")]
    WindowTooLong { len: usize, max: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("timestep {t} is not readable: {msg}")]
    Timestep { t: usize, msg: String },
    #[error("task {task} is registered with different dimensions")]
    TaskConflict { task: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    /// Maximum window length `K` in timesteps.
    pub max_timesteps: usize,
    pub dropout: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 8,
            n_heads: 4,
            d_model: 128,
            max_timesteps: 100,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.max_timesteps == 0 {
            return Err(ModelError::Config(
                "n_layers, n_heads, d_model and max_timesteps must be positive".into(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn ff_width(&self) -> usize {
        4 * self.d_model
    }

    /// Token capacity `4K`.
    pub fn max_tokens(&self) -> usize {
        4 * self.max_timesteps
    }
}

/// Item types, in their order within a timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemKind {
    TimeToGoal,
    Goal,
    Observation,
    Action,
}

impl ItemKind {
    pub const ALL: [ItemKind; 4] = [
        ItemKind::TimeToGoal,
        ItemKind::Goal,
        ItemKind::Observation,
        ItemKind::Action,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            ItemKind::TimeToGoal => "time_to_goal",
            ItemKind::Goal => "goal",
            ItemKind::Observation => "obs",
            ItemKind::Action => "act",
        }
    }

    /// Token position of this item at 0-based window timestep `i`.
    pub fn position(self, i: usize) -> usize {
        4 * i + self.index()
    }

    pub fn at_position(pos: usize) -> (usize, ItemKind) {
        (pos / 4, ItemKind::ALL[pos % 4])
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Normalized model inputs for one window of `n` timesteps. The final action
/// may be absent (`n_actions == n - 1`), which is the shape seen during
/// rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceInput {
    pub n: usize,
    pub n_actions: usize,
    pub time_to_goal: Vec<f32>,
    pub goals: Vec<f32>,
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
}

impl SequenceInput {
    /// Normalizes raw per-timestep items. `time_to_goal` is in steps.
    pub fn from_raw(
        norm: &NormStats,
        time_to_goal: &[f32],
        goals: &[f32],
        observations: &[f32],
        actions: &[f32],
    ) -> Self {
        let n = time_to_goal.len();
        let (gd, od, ad) = (
            norm.goal_mean.len(),
            norm.obs_mean.len(),
            norm.act_mean.len(),
        );
        let mut out = SequenceInput {
            n,
            n_actions: actions.len() / ad,
            time_to_goal: time_to_goal
                .iter()
                .map(|&s| norm.normalize_time(s))
                .collect(),
            goals: Vec::with_capacity(n * gd),
            observations: Vec::with_capacity(n * od),
            actions: Vec::with_capacity(actions.len()),
        };
        for g in goals.chunks(gd) {
            norm.normalize_goal(g, &mut out.goals);
        }
        for o in observations.chunks(od) {
            norm.normalize_obs(o, &mut out.observations);
        }
        for a in actions.chunks(ad) {
            norm.normalize_act(a, &mut out.actions);
        }
        out
    }

    pub fn from_window(window: &Window<'_>, norm: &NormStats) -> Self {
        let n = window.len();
        let ttg: Vec<f32> = window
            .time_to_goal()
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let goals: Vec<f32> = (0..n).flat_map(|_| window.goal().iter().copied()).collect();
        let obs: Vec<f32> = (0..n)
            .flat_map(|i| window.observation(i).iter().copied())
            .collect();
        let act: Vec<f32> = (0..n)
            .flat_map(|i| window.action(i).iter().copied())
            .collect();
        Self::from_raw(norm, &ttg, &goals, &obs, &act)
    }

    pub fn n_tokens(&self) -> usize {
        3 * self.n + self.n_actions
    }

    fn items(&self, kind: ItemKind) -> (&[f32], usize) {
        match kind {
            ItemKind::TimeToGoal => (&self.time_to_goal, self.n),
            ItemKind::Goal => (&self.goals, self.n),
            ItemKind::Observation => (&self.observations, self.n),
            ItemKind::Action => (&self.actions, self.n_actions),
        }
    }

    pub fn item(&self, kind: ItemKind, i: usize, spec: &TaskSpec) -> &[f32] {
        let d = item_dim(spec, kind);
        &self.items(kind).0[i * d..(i + 1) * d]
    }

    pub fn item_mut(&mut self, kind: ItemKind, i: usize, spec: &TaskSpec) -> &mut [f32] {
        let d = item_dim(spec, kind);
        let data = match kind {
            ItemKind::TimeToGoal => &mut self.time_to_goal,
            ItemKind::Goal => &mut self.goals,
            ItemKind::Observation => &mut self.observations,
            ItemKind::Action => &mut self.actions,
        };
        &mut data[i * d..(i + 1) * d]
    }

    fn validate(&self, spec: &TaskSpec, cfg: &ModelConfig) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::Input("empty window".into()));
        }
        if self.n > cfg.max_timesteps {
            return Err(ModelError::WindowTooLong {
                len: self.n,
                max: cfg.max_timesteps,
            });
        }
        if self.n_actions != self.n && self.n_actions + 1 != self.n {
            return Err(ModelError::Input(format!(
                "{} actions for {} timesteps",
                self.n_actions, self.n
            )));
        }
        for kind in ItemKind::ALL {
            let (data, rows) = self.items(kind);
            let want = rows * item_dim(spec, kind);
            if data.len() != want {
                return Err(ModelError::Input(format!(
                    "{kind} holds {} values, task {} needs {want}",
                    data.len(),
                    spec.task_id
                )));
            }
        }
        Ok(())
    }
}

/// Per-token substitution flags: `true` replaces the token by its item type's
/// mask embedding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenMask {
    flags: Vec<bool>,
}

impl TokenMask {
    pub fn none(n_tokens: usize) -> Self {
        Self {
            flags: vec![false; n_tokens],
        }
    }

    /// Masks every token of the given kinds.
    pub fn kinds(n_tokens: usize, kinds: &[ItemKind]) -> Self {
        Self {
            flags: (0..n_tokens)
                .map(|p| kinds.contains(&ItemKind::at_position(p).1))
                .collect(),
        }
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.flags[pos]
    }

    pub fn set(&mut self, pos: usize, masked: bool) {
        self.flags[pos] = masked;
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(p, _)| p)
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

/// Embedded tokens on a graph, ready for the backbone.
#[derive(Clone, Debug)]
pub struct TokenSequence {
    /// `[n_tokens, d_model]`
    pub tokens: Var,
    /// 1-based window timestep of each token.
    pub timesteps: Vec<usize>,
    pub mask: TokenMask,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }
}

/// Model parameters together with the task specs and normalization
/// statistics they were trained with.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub tasks: TaskRegistry,
    pub norm_stats: BTreeMap<String, NormStats>,
    pub params: ParamStore,
    backbone: BackboneIds,
    adapters: BTreeMap<String, AdapterIds>,
}

impl ModelBundle {
    /// Freshly initialized model with one adapter set per task.
    pub fn new(
        config: ModelConfig,
        tasks: TaskRegistry,
        norm_stats: BTreeMap<String, NormStats>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        Self::check_parts(&config, &tasks, &norm_stats)?;
        let (params, _) =
            layout::build_store(&config, &layout::full_layout(&config, &tasks), None, seed);
        Ok(Self::assemble(config, tasks, norm_stats, params))
    }

    fn check_parts(
        config: &ModelConfig,
        tasks: &TaskRegistry,
        norm_stats: &BTreeMap<String, NormStats>,
    ) -> Result<(), ModelError> {
        config.validate()?;
        for (id, spec) in tasks {
            spec.validate()?;
            if id != &spec.task_id {
                return Err(ModelError::Config(format!(
                    "task entry {id} holds spec for {}",
                    spec.task_id
                )));
            }
            let norm = norm_stats.get(id).ok_or_else(|| {
                ModelError::Config(format!("no normalization statistics for task {id}"))
            })?;
            if norm.obs_mean.len() != spec.obs_dim
                || norm.goal_mean.len() != spec.goal_dim
                || norm.act_mean.len() != spec.act_dim
            {
                return Err(ModelError::Config(format!(
                    "normalization statistics for {id} have wrong dimensions"
                )));
            }
        }
        if norm_stats.len() != tasks.len() {
            return Err(ModelError::Config(
                "normalization statistics for unregistered tasks".into(),
            ));
        }
        Ok(())
    }

    fn assemble(
        config: ModelConfig,
        tasks: TaskRegistry,
        norm_stats: BTreeMap<String, NormStats>,
        params: ParamStore,
    ) -> Self {
        let backbone = layout::resolve_backbone(&params, &config);
        let adapters = layout::resolve_adapters(&params, &tasks);
        Self {
            config,
            tasks,
            norm_stats,
            params,
            backbone,
            adapters,
        }
    }

    /// Rebuilds the model for a new task set, keeping the backbone and the
    /// adapters of tasks present in both. Returns the names of freshly
    /// initialized parameters.
    pub fn with_tasks(
        &self,
        tasks: TaskRegistry,
        norm_stats: BTreeMap<String, NormStats>,
        seed: u64,
    ) -> Result<(Self, Vec<String>), ModelError> {
        for (id, spec) in &tasks {
            if let Some(old) = self.tasks.get(id) {
                if (old.obs_dim, old.goal_dim, old.act_dim)
                    != (spec.obs_dim, spec.goal_dim, spec.act_dim)
                {
                    return Err(ModelError::TaskConflict { task: id.clone() });
                }
            }
        }
        Self::check_parts(&self.config, &tasks, &norm_stats)?;
        let layout = layout::full_layout(&self.config, &tasks);
        let (params, fresh) = layout::build_store(&self.config, &layout, Some(&self.params), seed);
        Ok((
            Self::assemble(self.config.clone(), tasks, norm_stats, params),
            fresh,
        ))
    }

    /// Ordered `(name, shape)` pairs every parameter store of this
    /// configuration must follow.
    pub fn expected_layout(config: &ModelConfig, tasks: &TaskRegistry) -> Vec<ParamSpec> {
        layout::full_layout(config, tasks)
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        tasks: TaskRegistry,
        norm_stats: BTreeMap<String, NormStats>,
        params: ParamStore,
    ) -> Result<Self, ModelError> {
        Self::check_parts(&config, &tasks, &norm_stats)?;
        Ok(Self::assemble(config, tasks, norm_stats, params))
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn spec(&self, task: &str) -> Result<&TaskSpec, ModelError> {
        self.tasks
            .get(task)
            .ok_or_else(|| ModelError::UnknownTask(task.to_string()))
    }

    pub fn norm(&self, task: &str) -> Result<&NormStats, ModelError> {
        self.norm_stats
            .get(task)
            .ok_or_else(|| ModelError::UnknownTask(task.to_string()))
    }

    fn adapter(&self, task: &str) -> Result<&AdapterIds, ModelError> {
        self.adapters
            .get(task)
            .ok_or_else(|| ModelError::UnknownTask(task.to_string()))
    }

    fn affine(
        &self,
        g: &mut Graph,
        b: &mut Binder<'_>,
        x: Var,
        lin: LinearIds,
    ) -> Result<Var, ModelError> {
        let w = b.var(g, lin.weight);
        let bias = b.var(g, lin.bias);
        let y = g.matmul(x, w)?;
        Ok(g.add(y, bias)?)
    }

    fn dropout(
        &self,
        g: &mut Graph,
        x: Var,
        rng: &mut Option<&mut Pcg32>,
    ) -> Result<Var, ModelError> {
        let p = self.config.dropout as f64;
        let Some(rng) = rng.as_deref_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = (1.0 / (1.0 - p)) as f32;
        let shape = g.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let m: Vec<f32> = (0..n)
            .map(|_| if rng.bernoulli(p) { 0.0 } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, m)?);
        Ok(g.mul(x, m)?)
    }

    /// Tokenizes the window, substitutes masked tokens and adds the timestep
    /// embedding. With `rng` set, embedding dropout is applied.
    pub fn embed_sequence(
        &self,
        g: &mut Graph,
        b: &mut Binder<'_>,
        task: &str,
        input: &SequenceInput,
        mask: &TokenMask,
        mut rng: Option<&mut Pcg32>,
    ) -> Result<TokenSequence, ModelError> {
        let spec = self.spec(task)?;
        input.validate(spec, &self.config)?;
        let n_tokens = input.n_tokens();
        if mask.len() != n_tokens {
            return Err(ModelError::Input(format!(
                "mask covers {} tokens, sequence has {n_tokens}",
                mask.len()
            )));
        }
        let adapter = self.adapter(task)?;

        // Rows of `table`: tokenized items of each kind that has an unmasked
        // token, followed by the four mask embeddings.
        let mut parts = Vec::new();
        let mut offsets = [usize::MAX; 4];
        let mut rows = 0;
        for kind in ItemKind::ALL {
            let (data, count) = input.items(kind);
            if count == 0 || (0..count).all(|i| mask.is_masked(kind.position(i))) {
                continue;
            }
            let x = g.constant(Tensor::matrix(count, item_dim(spec, kind), data.to_vec())?);
            let h = self.affine(g, b, x, adapter.tokenizers[kind.index()])?;
            let ln = adapter.token_norms[kind.index()];
            let (gain, bias) = (b.var(g, ln.gain), b.var(g, ln.bias));
            parts.push(g.layer_norm(h, gain, bias, LN_EPS)?);
            offsets[kind.index()] = rows;
            rows += count;
        }
        parts.push(b.var(g, self.backbone.mask));
        let table = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_rows(&parts)?
        };

        let index: Vec<usize> = (0..n_tokens)
            .map(|p| {
                let (i, kind) = ItemKind::at_position(p);
                if mask.is_masked(p) {
                    rows + kind.index()
                } else {
                    offsets[kind.index()] + i
                }
            })
            .collect();
        let tokens = g.gather_rows(table, &index)?;
        let timesteps: Vec<usize> = (0..n_tokens).map(|p| p / 4 + 1).collect();
        let time_table = b.var(g, self.backbone.timestep);
        let time_index: Vec<usize> = timesteps.iter().map(|t| t - 1).collect();
        let time = g.gather_rows(time_table, &time_index)?;
        let tokens = g.add(tokens, time)?;
        let tokens = self.dropout(g, tokens, &mut rng)?;
        Ok(TokenSequence {
            tokens,
            timesteps,
            mask: mask.clone(),
        })
    }

    /// Causal pre-norm transformer. Returns `[n_tokens, d_model]` hidden
    /// states after the final layer norm.
    pub fn backbone_forward(
        &self,
        g: &mut Graph,
        b: &mut Binder<'_>,
        seq: &TokenSequence,
        mut rng: Option<&mut Pcg32>,
    ) -> Result<Var, ModelError> {
        if seq.len() > self.config.max_tokens() {
            return Err(ModelError::WindowTooLong {
                len: seq.len().div_ceil(4),
                max: self.config.max_timesteps,
            });
        }
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let mut x = seq.tokens;
        for block in &self.backbone.blocks {
            let (gain, bias) = (b.var(g, block.ln1.gain), b.var(g, block.ln1.bias));
            let h = g.layer_norm(x, gain, bias, LN_EPS)?;
            let qkv = self.affine(g, b, h, block.qkv)?;
            let mut outs = Vec::with_capacity(heads);
            for head in 0..heads {
                let q = g.slice_cols(qkv, head * dh, dh)?;
                let k = g.slice_cols(qkv, d + head * dh, dh)?;
                let v = g.slice_cols(qkv, 2 * d + head * dh, dh)?;
                let s = g.matmul_nt(q, k)?;
                let s = g.scale(s, scale);
                let s = g.causal_mask(s)?;
                let a = g.softmax(s);
                outs.push(g.matmul(a, v)?);
            }
            let att = if heads == 1 {
                outs[0]
            } else {
                g.concat_cols(&outs)?
            };
            let att = self.affine(g, b, att, block.proj)?;
            let att = self.dropout(g, att, &mut rng)?;
            x = g.add(x, att)?;

            let (gain, bias) = (b.var(g, block.ln2.gain), b.var(g, block.ln2.bias));
            let h = g.layer_norm(x, gain, bias, LN_EPS)?;
            let h = self.affine(g, b, h, block.fc1)?;
            let h = g.gelu(h);
            let h = self.affine(g, b, h, block.fc2)?;
            let h = self.dropout(g, h, &mut rng)?;
            x = g.add(x, h)?;
        }
        let (gain, bias) = (
            b.var(g, self.backbone.ln_f.gain),
            b.var(g, self.backbone.ln_f.bias),
        );
        Ok(g.layer_norm(x, gain, bias, LN_EPS)?)
    }

    /// Applies the `kind` head of `task` to the hidden states at `positions`,
    /// giving `[positions.len(), item_dim]`. The action head is squashed by tanh.
    pub fn head(
        &self,
        g: &mut Graph,
        b: &mut Binder<'_>,
        task: &str,
        kind: ItemKind,
        hidden: Var,
        positions: &[usize],
    ) -> Result<Var, ModelError> {
        let adapter = self.adapter(task)?;
        let h = g.gather_rows(hidden, positions)?;
        let y = self.affine(g, b, h, adapter.heads[kind.index()])?;
        Ok(if kind == ItemKind::Action {
            g.tanh(y)
        } else {
            y
        })
    }

    /// Embeds and runs the backbone on a fresh inference graph.
    pub fn hidden_states(
        &self,
        task: &str,
        input: &SequenceInput,
        mask: &TokenMask,
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::inference();
        let mut b = Binder::new(&self.params, false);
        let seq = self.embed_sequence(&mut g, &mut b, task, input, mask, None)?;
        let h = self.backbone_forward(&mut g, &mut b, &seq, None)?;
        Ok(g.value(h).clone())
    }

    fn infer(
        &self,
        task: &str,
        input: &SequenceInput,
        mask: &TokenMask,
        kind: ItemKind,
        positions: &[usize],
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::inference();
        let mut b = Binder::new(&self.params, false);
        let seq = self.embed_sequence(&mut g, &mut b, task, input, mask, None)?;
        let h = self.backbone_forward(&mut g, &mut b, &seq, None)?;
        let y = self.head(&mut g, &mut b, task, kind, h, positions)?;
        Ok(g.value(y).clone())
    }

    fn check_t(input: &SequenceInput, t: usize, need_prior: bool) -> Result<(), ModelError> {
        if t == 0 || t > input.n {
            return Err(ModelError::Timestep {
                t,
                msg: format!("window has timesteps 1..={}", input.n),
            });
        }
        if need_prior && t == 1 {
            return Err(ModelError::Timestep {
                t,
                msg: "no preceding action token".into(),
            });
        }
        Ok(())
    }

    /// Action at 1-based window timestep `t`, read at the `o_t` token.
    pub fn predict_action(
        &self,
        task: &str,
        input: &SequenceInput,
        t: usize,
    ) -> Result<Vec<f32>, ModelError> {
        Self::check_t(input, t, false)?;
        let mask = TokenMask::none(input.n_tokens());
        let y = self.infer(
            task,
            input,
            &mask,
            ItemKind::Action,
            &[ItemKind::Observation.position(t - 1)],
        )?;
        Ok(y.into_data())
    }

    /// Normalized observation at timestep `t >= 2`, read at the `a_{t-1}`
    /// token with time-to-goal and goal masked.
    pub fn predict_observation(
        &self,
        task: &str,
        input: &SequenceInput,
        t: usize,
    ) -> Result<Vec<f32>, ModelError> {
        Self::check_t(input, t, true)?;
        let mask = TokenMask::kinds(input.n_tokens(), &[ItemKind::TimeToGoal, ItemKind::Goal]);
        let y = self.infer(
            task,
            input,
            &mask,
            ItemKind::Observation,
            &[ItemKind::Action.position(t - 2)],
        )?;
        Ok(y.into_data())
    }

    /// Normalized time-to-goal at timestep `t >= 2`, read at the `a_{t-1}`
    /// token with time-to-goal masked.
    pub fn predict_time_to_goal(
        &self,
        task: &str,
        input: &SequenceInput,
        t: usize,
    ) -> Result<f32, ModelError> {
        Self::check_t(input, t, true)?;
        let mask = TokenMask::kinds(input.n_tokens(), &[ItemKind::TimeToGoal]);
        let y = self.infer(
            task,
            input,
            &mask,
            ItemKind::TimeToGoal,
            &[ItemKind::Action.position(t - 2)],
        )?;
        Ok(y.data()[0])
    }

    /// Reconstruction of every masked item, read at its own position.
    pub fn reconstruct_items(
        &self,
        task: &str,
        input: &SequenceInput,
        mask: &TokenMask,
    ) -> Result<Vec<(usize, ItemKind, Vec<f32>)>, ModelError> {
        let mut g = Graph::inference();
        let mut b = Binder::new(&self.params, false);
        let seq = self.embed_sequence(&mut g, &mut b, task, input, mask, None)?;
        let h = self.backbone_forward(&mut g, &mut b, &seq, None)?;
        let mut out = Vec::new();
        for pos in mask.masked_positions() {
            let kind = ItemKind::at_position(pos).1;
            let y = self.head(&mut g, &mut b, task, kind, h, &[pos])?;
            out.push((pos, kind, g.value(y).data().to_vec()));
        }
        Ok(out)
    }
}
