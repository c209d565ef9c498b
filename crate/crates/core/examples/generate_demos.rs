//! Rolls the scripted experts of every bundled environment and writes the
//! demonstrations to a temporary directory.

use gcdt::data::load_dataset;
use gcdt::env::{generate_demos, EnvKind};

fn main() {
    let dir = std::env::temp_dir().join("gcdt-demos");
    std::fs::create_dir_all(&dir).unwrap();
    for kind in EnvKind::ALL {
        let path = dir.join(format!("{}.jsonl", kind.name()));
        let report = generate_demos(kind, 20, 0, &path).unwrap();
        let data = load_dataset(&path).unwrap();
        println!(
            "{:<12} {} demos, lengths {}..={} (mean {:.1}), {} timesteps -> {}",
            kind.name(),
            report.episodes,
            report.min_length,
            report.max_length,
            report.mean_length,
            data.total_timesteps(),
            path.display()
        );
    }
}
