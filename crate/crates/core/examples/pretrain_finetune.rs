//! Pretrains a small model on reach3d and bireach3d with all four objectives,
//! then finetunes a fresh pickplace3d adapter on top of the shared backbone.

use gcdt::env::{collect_demos, EnvKind};
use gcdt::model::{save_checkpoint, ModelConfig};
use gcdt::objectives::ObjectiveKind;
use gcdt::trainer::{finetune, pretrain, TrainConfig, TrainMode};

fn main() {
    let (reach, _) = collect_demos(EnvKind::Reach3d, 20, 0).unwrap();
    let (bireach, _) = collect_demos(EnvKind::BiReach3d, 20, 0).unwrap();
    let (pick, _) = collect_demos(EnvKind::PickPlace3d, 10, 0).unwrap();
    let model = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 32,
        max_timesteps: 4,
        dropout: 0.1,
    };

    let mut cfg = TrainConfig {
        tasks: vec!["reach3d".into(), "bireach3d".into()],
        steps: 40,
        batch_size: 16,
        model,
        ..Default::default()
    };
    cfg.optimizer.lr = 1e-3;
    let pre = pretrain(&cfg, &reach.merge(bireach).unwrap(), None).unwrap();
    for kind in ObjectiveKind::ALL {
        let l = pre.log.losses(kind);
        println!(
            "pretrain {:<15} first {:.4} last {:.4}",
            kind.name(),
            l[0],
            l[l.len() - 1]
        );
    }

    let ft_cfg = TrainConfig {
        mode: TrainMode::Finetune,
        tasks: vec!["pickplace3d".into()],
        steps: 60,
        ..cfg
    };
    let ft = finetune(&ft_cfg, &pick, Some(&pre.bundle)).unwrap();
    let l = ft.log.losses(ObjectiveKind::ActionPrediction);
    println!(
        "finetune action loss first {:.4} last {:.4}, {} fresh parameter tensors",
        l[0],
        l[l.len() - 1],
        ft.fresh_params.len()
    );
    let path = std::env::temp_dir().join("gcdt-pickplace.gcdt");
    save_checkpoint(&ft.saved_bundle().unwrap(), &path).unwrap();
    println!("saved {}", path.display());
}
