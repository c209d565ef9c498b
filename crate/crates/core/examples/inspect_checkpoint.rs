//! Writes a freshly initialized full-size checkpoint and reads back its header.

use gcdt::data::{NormStats, TaskRegistry};
use gcdt::env::EnvKind;
use gcdt::model::{
    closed_form_param_count, load_checkpoint, read_header, save_checkpoint, ModelBundle,
    ModelConfig,
};

fn main() {
    let tasks: TaskRegistry = EnvKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), k.task_spec(20)))
        .collect();
    let norms = tasks
        .iter()
        .map(|(id, spec)| (id.clone(), NormStats::identity(spec)))
        .collect();
    let bundle = ModelBundle::new(ModelConfig::default(), tasks.clone(), norms, 0).unwrap();
    let path = std::env::temp_dir().join("gcdt-fresh.gcdt");
    save_checkpoint(&bundle, &path).unwrap();

    let header = read_header(&path).unwrap();
    for e in header
        .manifest
        .iter()
        .filter(|e| !e.name.contains(".blocks.") || e.name.contains(".blocks.0."))
    {
        println!("{:<48} {:?}", e.name, e.shape);
    }
    println!("... ({} tensors)", header.manifest.len());
    println!(
        "total {} closed form {}",
        header.total_params(),
        closed_form_param_count(&header.config, &tasks)
    );
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params.numel(), bundle.params.numel());
    println!("file {} bytes", std::fs::metadata(&path).unwrap().len());
}
