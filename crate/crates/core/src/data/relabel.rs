use super::trajectory::{Dataset, Provenance};
use super::DataError;

/// Hindsight relabeling.
///
/// Every original trajectory of length `T` yields `T` relabeled trajectories:
/// for each `t` in `1..=T`, the first `t` steps with the goal replaced by the
/// goal achieved after step `t`. The result holds the originals, in input
/// order, followed by all relabeled trajectories grouped by source.
pub fn hindsight_relabel(d: &Dataset) -> Result<Dataset, DataError> {
    if d.is_augmented() {
        return Err(DataError::AlreadyAugmented);
    }
    let mut out = Dataset::new(d.tasks.clone());
    out.trajectories.reserve(d.len() + d.total_timesteps());
    out.trajectories.extend(d.trajectories.iter().cloned());
    for traj in &d.trajectories {
        for t in 1..=traj.len() {
            let mut relabeled = traj.prefix(t);
            relabeled.goal = traj.achieved_goal(t - 1).to_vec();
            relabeled.provenance = Provenance::Relabeled;
            out.trajectories.push(relabeled);
        }
    }
    Ok(out)
}
