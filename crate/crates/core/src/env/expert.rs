use super::{distance, Env, EnvKind, ATTACH_RADIUS, HOVER_HEIGHT, STEP_SIZE, SUCCESS_THRESHOLD};

/// Phases of the pick-and-place script.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpertPhase {
    /// Move to the hover point above the object, gripper open.
    Approach,
    /// Descend onto the object and close once within the attach radius.
    Descend,
    /// Carry the held object to the goal.
    Carry,
    /// Object at the goal: open the gripper.
    Release,
}

/// Horizontal misalignment tolerated before descending.
const ALIGN_TOLERANCE: f32 = 0.01;

/// `clamp((target - pos) / STEP_SIZE, -1, 1)` per axis.
fn toward(pos: [f32; 3], target: [f32; 3]) -> [f32; 3] {
    let mut a = [0.0; 3];
    for i in 0..3 {
        a[i] = ((target[i] - pos[i]) / STEP_SIZE).clamp(-1.0, 1.0);
    }
    a
}

pub(super) fn phase(env: &Env) -> Option<ExpertPhase> {
    if env.kind() != EnvKind::PickPlace3d {
        return None;
    }
    let state = env.state();
    let ee = state.arms[0].pos;
    let obj = state.objects[0];
    Some(if obj.held_by == Some(0) {
        if distance(&obj.pos, env.goal()) < SUCCESS_THRESHOLD {
            ExpertPhase::Release
        } else {
            ExpertPhase::Carry
        }
    } else {
        let xy = ((ee[0] - obj.pos[0]).powi(2) + (ee[1] - obj.pos[1]).powi(2)).sqrt();
        if xy < ALIGN_TOLERANCE && ee[2] <= obj.pos[2] + HOVER_HEIGHT + ALIGN_TOLERANCE {
            ExpertPhase::Descend
        } else {
            ExpertPhase::Approach
        }
    })
}

pub(super) fn expert_action(env: &Env) -> Vec<f32> {
    let state = env.state();
    let goal = env.goal();
    match env.kind() {
        EnvKind::Reach3d | EnvKind::BiReach3d => {
            let mut a = Vec::with_capacity(env.kind().act_dim());
            for (arm, g) in state.arms.iter().zip(goal.chunks(3)) {
                a.extend(toward(arm.pos, [g[0], g[1], g[2]]));
                a.push(0.0);
            }
            a
        }
        EnvKind::PickPlace3d => {
            let ee = state.arms[0].pos;
            let obj = state.objects[0].pos;
            let goal = [goal[0], goal[1], goal[2]];
            let (mv, grip) = match phase(env).unwrap() {
                ExpertPhase::Approach => {
                    let hover = [obj[0], obj[1], (obj[2] + HOVER_HEIGHT).min(1.0)];
                    (toward(ee, hover), 1.0)
                }
                ExpertPhase::Descend => {
                    let mv = toward(ee, obj);
                    let next: Vec<f32> = (0..3)
                        .map(|i| (ee[i] + STEP_SIZE * mv[i]).clamp(0.0, 1.0))
                        .collect();
                    let grip = if distance(&next, &obj) < ATTACH_RADIUS {
                        -1.0
                    } else {
                        1.0
                    };
                    (mv, grip)
                }
                ExpertPhase::Carry => (toward(ee, goal), -1.0),
                ExpertPhase::Release => ([0.0; 3], 1.0),
            };
            vec![mv[0], mv[1], mv[2], grip]
        }
    }
}
