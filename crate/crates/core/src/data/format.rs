//! JSON-Lines dataset files.
//!
//! One trajectory per line with keys `task`, `obs`, `act`, `goal`, `achieved`,
//! plus `provenance` on augmented files. Task specs live in a sidecar
//! `<name>.tasks.json` mapping task id to [`TaskSpec`].

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trajectory::{Dataset, Provenance, TaskRegistry, Trajectory};
use super::DataError;
use crate::io::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    task: String,
    obs: Vec<Vec<f32>>,
    act: Vec<Vec<f32>>,
    goal: Vec<f32>,
    achieved: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl Record {
    fn from_trajectory(t: &Trajectory, with_provenance: bool) -> Self {
        let rows = |flat: &[f32], dim: usize| flat.chunks(dim).map(<[f32]>::to_vec).collect();
        Record {
            task: t.task_id.clone(),
            obs: rows(&t.observations, t.obs_dim),
            act: rows(&t.actions, t.act_dim),
            goal: t.goal.clone(),
            achieved: rows(&t.achieved_goals, t.goal_dim),
            provenance: with_provenance.then_some(t.provenance),
        }
    }
}

/// `d.jsonl` -> `d.tasks.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.tasks.json"))
}

pub fn read_task_registry(path: &Path) -> Result<TaskRegistry, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let tasks: TaskRegistry = serde_json::from_str(&text).map_err(|e| DataError::Sidecar {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    for (id, spec) in &tasks {
        if id != &spec.task_id {
            return Err(DataError::Sidecar {
                path: path.to_path_buf(),
                msg: format!("entry {id} holds a spec for {}", spec.task_id),
            });
        }
        spec.validate()?;
    }
    Ok(tasks)
}

/// Whether a dataset file carries provenance flags, checked on the first line only.
pub fn file_has_provenance(path: &Path) -> Result<bool, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DataError::Line {
                line: 1,
                msg: e.to_string(),
            })?;
        return Ok(value.get("provenance").is_some());
    }
    Ok(false)
}

/// Loads a dataset and its sidecar. A missing sidecar is only acceptable for
/// an empty file.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let sidecar = sidecar_path(path);
    let tasks = if sidecar.exists() {
        read_task_registry(&sidecar)?
    } else {
        TaskRegistry::new()
    };
    load_dataset_with(path, tasks)
}

pub fn load_dataset_with(path: &Path, tasks: TaskRegistry) -> Result<Dataset, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut dataset = Dataset::new(tasks);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| DataError::Line {
            line: line_no,
            msg: e.to_string(),
        })?;
        let spec = dataset
            .tasks
            .get(&rec.task)
            .ok_or_else(|| DataError::Line {
                line: line_no,
                msg: format!("unknown task_id {}", rec.task),
            })?;
        let traj = Trajectory::from_rows(
            spec,
            &rec.obs,
            &rec.act,
            rec.goal,
            &rec.achieved,
            rec.provenance.unwrap_or(Provenance::Original),
        )
        .map_err(|msg| DataError::Line { line: line_no, msg })?;
        dataset.trajectories.push(traj);
    }
    Ok(dataset)
}

/// Serializes trajectories as JSON Lines. Provenance flags are written when the
/// dataset contains relabeled trajectories.
pub fn to_jsonl(dataset: &Dataset) -> String {
    let with_provenance = dataset.is_augmented();
    let mut out = String::new();
    for t in &dataset.trajectories {
        out.push_str(
            &serde_json::to_string(&Record::from_trajectory(t, with_provenance))
                .expect("record serializes"),
        );
        out.push('\n');
    }
    out
}

/// Writes the dataset and its sidecar, each through a temp file and rename.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let sidecar = sidecar_path(path);
    let specs = serde_json::to_string_pretty(&dataset.tasks).expect("task specs serialize") + "\n";
    write_atomic(path, to_jsonl(dataset).as_bytes()).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_atomic(&sidecar, specs.as_bytes()).map_err(|e| DataError::Io {
        path: sidecar.clone(),
        source: e,
    })?;
    Ok(())
}
