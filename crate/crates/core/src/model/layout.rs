//! Parameter names, shapes and initialization.
//!
//! The manifest order is: the shared backbone, then one adapter group per
//! task in task-id order.

use std::collections::BTreeMap;

use super::{ItemKind, ModelConfig};
use crate::data::{TaskRegistry, TaskSpec};
use crate::numerics::{mix_seed, ParamId, ParamStore, Pcg32, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Normal,
    /// Normal scaled by `1/sqrt(2 * n_layers)`.
    Residual,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

fn spec(name: String, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec { name, shape, init }
}

fn linear(out: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize, init: Init) {
    out.push(spec(
        format!("{prefix}.weight"),
        vec![fan_in, fan_out],
        init,
    ));
    out.push(spec(format!("{prefix}.bias"), vec![fan_out], Init::Zeros));
}

fn norm(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    out.push(spec(format!("{prefix}.gain"), vec![d], Init::Ones));
    out.push(spec(format!("{prefix}.bias"), vec![d], Init::Zeros));
}

pub fn backbone_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let mut out = vec![
        spec(
            "backbone.timestep_embedding".into(),
            vec![cfg.max_timesteps, d],
            Init::Normal,
        ),
        spec("backbone.mask_embedding".into(), vec![4, d], Init::Normal),
    ];
    for i in 0..cfg.n_layers {
        let p = format!("backbone.blocks.{i}");
        norm(&mut out, &format!("{p}.ln1"), d);
        linear(&mut out, &format!("{p}.attn.qkv"), d, 3 * d, Init::Normal);
        linear(&mut out, &format!("{p}.attn.proj"), d, d, Init::Residual);
        norm(&mut out, &format!("{p}.ln2"), d);
        linear(&mut out, &format!("{p}.mlp.fc1"), d, 4 * d, Init::Normal);
        linear(&mut out, &format!("{p}.mlp.fc2"), 4 * d, d, Init::Residual);
    }
    norm(&mut out, "backbone.ln_f", d);
    out
}

pub fn item_dim(spec: &TaskSpec, kind: ItemKind) -> usize {
    match kind {
        ItemKind::TimeToGoal => 1,
        ItemKind::Goal => spec.goal_dim,
        ItemKind::Observation => spec.obs_dim,
        ItemKind::Action => spec.act_dim,
    }
}

pub fn adapter_layout(cfg: &ModelConfig, spec: &TaskSpec) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let p = format!("adapters.{}", spec.task_id);
    let mut out = Vec::new();
    for kind in ItemKind::ALL {
        let k = kind.key();
        linear(
            &mut out,
            &format!("{p}.tokenizer.{k}"),
            item_dim(spec, kind),
            d,
            Init::Normal,
        );
        norm(&mut out, &format!("{p}.tokenizer.{k}.ln"), d);
    }
    for kind in ItemKind::ALL {
        linear(
            &mut out,
            &format!("{p}.head.{}", kind.key()),
            d,
            item_dim(spec, kind),
            Init::Normal,
        );
    }
    out
}

pub fn full_layout(cfg: &ModelConfig, tasks: &TaskRegistry) -> Vec<ParamSpec> {
    let mut out = backbone_layout(cfg);
    for spec in tasks.values() {
        out.extend(adapter_layout(cfg, spec));
    }
    out
}

/// Stable 64-bit FNV-1a hash, used to give each parameter its own init stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Initializes one parameter. The values depend only on `(seed, name)`, so a
/// task adapter gets the same initialization whichever other tasks exist.
pub fn init_tensor(cfg: &ModelConfig, p: &ParamSpec, seed: u64) -> Tensor<f32> {
    let n: usize = p.shape.iter().product();
    let mut rng = Pcg32::derive(seed, fnv1a(&p.name));
    let residual = 1.0 / ((2 * cfg.n_layers) as f64).sqrt();
    let data: Vec<f32> = match p.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Normal => (0..n)
            .map(|_| rng.truncated_normal(INIT_STD) as f32)
            .collect(),
        Init::Residual => (0..n)
            .map(|_| (rng.truncated_normal(INIT_STD) * residual) as f32)
            .collect(),
    };
    Tensor::new(p.shape.clone(), data).expect("layout shapes are consistent")
}

/// Store laid out per `layout`, reusing values from `existing` by name when
/// the shape agrees and initializing the rest. Returns the names initialized.
pub fn build_store(
    cfg: &ModelConfig,
    layout: &[ParamSpec],
    existing: Option<&ParamStore>,
    seed: u64,
) -> (ParamStore, Vec<String>) {
    let mut store = ParamStore::new();
    let mut fresh = Vec::new();
    let init_seed = mix_seed(seed, 0x1417);
    for p in layout {
        let reused = existing
            .and_then(|s| s.id(&p.name).map(|id| s.value(id)))
            .filter(|t| t.shape() == p.shape.as_slice())
            .cloned();
        let value = reused.unwrap_or_else(|| {
            fresh.push(p.name.clone());
            init_tensor(cfg, p, init_seed)
        });
        store
            .add(p.name.clone(), value)
            .expect("layout names are unique");
    }
    (store, fresh)
}

#[derive(Clone, Copy, Debug)]
pub struct LinearIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct BlockIds {
    pub ln1: NormIds,
    pub qkv: LinearIds,
    pub proj: LinearIds,
    pub ln2: NormIds,
    pub fc1: LinearIds,
    pub fc2: LinearIds,
}

#[derive(Clone, Debug)]
pub struct BackboneIds {
    pub timestep: ParamId,
    pub mask: ParamId,
    pub blocks: Vec<BlockIds>,
    pub ln_f: NormIds,
}

#[derive(Clone, Debug)]
pub struct AdapterIds {
    pub tokenizers: [LinearIds; 4],
    pub token_norms: [NormIds; 4],
    pub heads: [LinearIds; 4],
}

fn id(store: &ParamStore, name: &str) -> ParamId {
    store
        .id(name)
        .unwrap_or_else(|| panic!("parameter {name} missing from store"))
}

fn linear_ids(store: &ParamStore, prefix: &str) -> LinearIds {
    LinearIds {
        weight: id(store, &format!("{prefix}.weight")),
        bias: id(store, &format!("{prefix}.bias")),
    }
}

fn norm_ids(store: &ParamStore, prefix: &str) -> NormIds {
    NormIds {
        gain: id(store, &format!("{prefix}.gain")),
        bias: id(store, &format!("{prefix}.bias")),
    }
}

pub fn resolve_backbone(store: &ParamStore, cfg: &ModelConfig) -> BackboneIds {
    BackboneIds {
        timestep: id(store, "backbone.timestep_embedding"),
        mask: id(store, "backbone.mask_embedding"),
        blocks: (0..cfg.n_layers)
            .map(|i| {
                let p = format!("backbone.blocks.{i}");
                BlockIds {
                    ln1: norm_ids(store, &format!("{p}.ln1")),
                    qkv: linear_ids(store, &format!("{p}.attn.qkv")),
                    proj: linear_ids(store, &format!("{p}.attn.proj")),
                    ln2: norm_ids(store, &format!("{p}.ln2")),
                    fc1: linear_ids(store, &format!("{p}.mlp.fc1")),
                    fc2: linear_ids(store, &format!("{p}.mlp.fc2")),
                }
            })
            .collect(),
        ln_f: norm_ids(store, "backbone.ln_f"),
    }
}

pub fn resolve_adapters(store: &ParamStore, tasks: &TaskRegistry) -> BTreeMap<String, AdapterIds> {
    tasks
        .keys()
        .map(|task| {
            let p = format!("adapters.{task}");
            let per = |f: &dyn Fn(&str) -> String| ItemKind::ALL.map(|k| f(k.key()));
            let tok = per(&|k| format!("{p}.tokenizer.{k}"));
            let head = per(&|k| format!("{p}.head.{k}"));
            let ids = AdapterIds {
                tokenizers: tok.clone().map(|n| linear_ids(store, &n)),
                token_norms: tok.map(|n| norm_ids(store, &format!("{n}.ln"))),
                heads: head.map(|n| linear_ids(store, &n)),
            };
            (task.clone(), ids)
        })
        .collect()
}

/// Parameter count from the architecture formula, independent of the layout
/// code: `K*d + 4d + L*(12d^2 + 13d) + 2d` for the backbone plus
/// `2sd + 12d + s` per task with `s = 1 + goal_dim + obs_dim + act_dim`.
pub fn closed_form_param_count(cfg: &ModelConfig, tasks: &TaskRegistry) -> usize {
    let d = cfg.d_model;
    let backbone = cfg.max_timesteps * d + 4 * d + cfg.n_layers * (12 * d * d + 13 * d) + 2 * d;
    let adapters: usize = tasks
        .values()
        .map(|t| {
            let s = 1 + t.goal_dim + t.obs_dim + t.act_dim;
            2 * s * d + 12 * d + s
        })
        .sum();
    backbone + adapters
}
