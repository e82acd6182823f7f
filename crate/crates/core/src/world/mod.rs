//! Procedural 2D grid world: scenes, raycast sensing, kinematics,
//! geodesic distances and the shortest-path expert.

mod agent;
mod episode;
mod expert;
mod geodesic;
mod ray;
mod scene;

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

pub use agent::{forward_blocked, segment_clear, step_agent};
pub use episode::{sample_episode, Episode, StepRecord, Tier};
pub use expert::{expert_action, expert_action_with};
pub use geodesic::{geodesic_distance, DistanceField};
pub use ray::{cast_ray, ray_angles, render_observation, Camera, Face, RayHit, ObservationStrip};
pub use scene::{Scene, SceneConfig, PALETTE};

/// Distance covered by one `Forward` action.
pub const FORWARD_STEP: f64 = 0.25;
/// Rotation applied by `TurnLeft` / `TurnRight`.
pub const TURN_ANGLE: f64 = PI / 6.0;
pub const AGENT_RADIUS: f64 = 0.1;
/// An episode succeeds once the geodesic distance to the target is within this.
pub const SUCCESS_RADIUS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2 { x: theta.cos(), y: theta.sin() }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_tau(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(theta: f64) -> f64 {
    let t = wrap_tau(theta);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Vec2,
    pub theta: f64,
}

impl AgentPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        AgentPose { position: Vec2::new(x, y), theta: wrap_tau(theta) }
    }
}

/// Discrete action set; the discriminant is the policy-head index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Stop = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Stop];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "left",
            Action::TurnRight => "right",
            Action::Stop => "stop",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wrapping() {
        assert_eq!(wrap_tau(-0.5), TAU - 0.5);
        assert!(wrap_tau(TAU) < 1e-12);
        assert!((wrap_pi(PI) - PI).abs() < 1e-12);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-12);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((0..100).all(|i| {
            let t = wrap_tau(-50.0 + i as f64 * 1.7);
            (0.0..TAU).contains(&t)
        }));
    }

    #[test]
    fn action_indices_are_fixed() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
        }
        assert_eq!(Action::from_index(4), None);
    }
}
