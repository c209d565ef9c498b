//! Relabels expert demos with the goals they achieved along the way.

use gcdt::data::{hindsight_relabel, Provenance};
use gcdt::env::{collect_demos, EnvKind};

fn main() {
    let (demos, _) = collect_demos(EnvKind::PickPlace3d, 10, 0).unwrap();
    let augmented = hindsight_relabel(&demos).unwrap();
    println!(
        "{} originals with {} timesteps -> {} trajectories ({} relabeled)",
        demos.len(),
        demos.total_timesteps(),
        augmented.len(),
        augmented.count(Provenance::Relabeled)
    );
    let first = &demos.trajectories[0];
    let prefix = augmented
        .trajectories
        .iter()
        .find(|t| t.provenance == Provenance::Relabeled && t.len() == 5)
        .unwrap();
    println!("original goal {:?}", first.goal);
    println!(
        "goal of the 5-step prefix {:?} (achieved after step 5)",
        prefix.goal
    );
    assert!(augmented.trajectories.len() == demos.len() + demos.total_timesteps());
}
