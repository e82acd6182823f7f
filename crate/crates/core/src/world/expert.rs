use std::f64::consts::PI;

use super::agent::{forward_blocked, segment_clear};
use super::geodesic::DistanceField;
use super::{wrap_pi, Action, AgentPose, Scene, Vec2, AGENT_RADIUS, FORWARD_STEP, SUCCESS_RADIUS, TURN_ANGLE};
use crate::error::{Error, Result};

/// Clearance demanded of a waypoint line: any forward step within one turn
/// increment of that line then stays clear of walls.
fn waypoint_clearance() -> f64 {
    AGENT_RADIUS + FORWARD_STEP * TURN_ANGLE.sin()
}

/// Picks the point the expert steers toward: the farthest shortest-path cell
/// center (or the target itself) reachable in a straight, well-clear line.
pub(crate) fn waypoint(scene: &Scene, field: &DistanceField, pos: Vec2, target: Vec2) -> Result<Vec2> {
    let cell = scene.cell_of(pos);
    let path = field.path_to_source(scene, cell)?;
    if path.len() == 1 {
        return Ok(target);
    }
    let clearance = waypoint_clearance();
    if segment_clear(scene, pos, target, clearance) {
        return Ok(target);
    }
    for &(c, r) in path[1..].iter().rev() {
        let w = Scene::cell_center(c, r);
        if segment_clear(scene, pos, w, clearance) {
            return Ok(w);
        }
    }
    Ok(Scene::cell_center(path[1].0, path[1].1))
}

/// Action of the shortest-path expert for a given distance field to the
/// target's cell.
pub fn expert_action_with(scene: &Scene, field: &DistanceField, pose: &AgentPose, target: Vec2) -> Result<Action> {
    let d = field.distance_from(scene, pose.position, target)?;
    if d <= SUCCESS_RADIUS {
        return Ok(Action::Stop);
    }
    let w = waypoint(scene, field, pose.position, target)?;
    let err = wrap_pi((w - pose.position).angle() - pose.theta);
    if err.abs() <= TURN_ANGLE + 1e-9 && !forward_blocked(scene, pose) {
        return Ok(Action::Forward);
    }
    if err >= 0.0 || err <= -PI + 1e-9 {
        Ok(Action::TurnLeft)
    } else {
        Ok(Action::TurnRight)
    }
}

pub fn expert_action(scene: &Scene, pose: &AgentPose, target: Vec2) -> Result<Action> {
    if !scene.is_free_point(target) {
        return Err(Error::Contract("expert target is not in free space".into()));
    }
    let field = DistanceField::from_cell(scene, scene.cell_of(target))?;
    expert_action_with(scene, &field, pose, target)
}
