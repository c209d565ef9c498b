//! Trains a reach3d policy for a short while and compares its closed-loop
//! success with the scripted expert and a do-nothing baseline.

use gcdt::env::{collect_demos, EnvKind};
use gcdt::eval::{evaluate, evaluate_policy, ExpertPolicy, RolloutSettings, ZeroPolicy};
use gcdt::model::ModelConfig;
use gcdt::trainer::{finetune, LrDecay, TrainConfig, TrainMode};

fn main() {
    let kind = EnvKind::Reach3d;
    let (demos, report) = collect_demos(kind, 100, 0).unwrap();
    let mut cfg = TrainConfig {
        mode: TrainMode::Finetune,
        tasks: vec![kind.name().into()],
        steps: 600,
        model: ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 32,
            max_timesteps: 1,
            dropout: 0.0,
        },
        lr_decay: LrDecay::Cosine,
        ..Default::default()
    };
    cfg.optimizer.lr = 3e-3;
    let out = finetune(&cfg, &demos, None).unwrap();
    let seeds = [0, 1, 2];
    let model = evaluate(kind.name(), &out.bundle, 50, &seeds).unwrap();
    let settings = RolloutSettings {
        history: 1,
        expected_steps: report.expected_steps,
        max_steps: kind.max_episode_steps(),
    };
    let expert = evaluate_policy(kind, &ExpertPolicy, &settings, 50, &seeds).unwrap();
    let zero = evaluate_policy(kind, &ZeroPolicy, &settings, 50, &seeds).unwrap();
    println!("model  {:?} mean {:.2}", model.per_seed_rates, model.mean);
    println!("expert {:?} mean {:.2}", expert.per_seed_rates, expert.mean);
    println!("zero   {:?} mean {:.2}", zero.per_seed_rates, zero.mean);
    print!("{}", model.to_json());
}
