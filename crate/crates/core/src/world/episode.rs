use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::geodesic::DistanceField;
use super::ray::{render_observation, Camera, ObservationStrip};
use super::{Action, AgentPose, Scene, Vec2, TURN_ANGLE};
use crate::error::{Error, Result};
use crate::rng::Rng;

const MAX_ATTEMPTS: usize = 2000;

/// Difficulty band on the start-to-target geodesic distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Medium, Tier::Hard];

    pub fn band(self) -> (f64, f64) {
        match self {
            Tier::Easy => (1.5, 3.0),
            Tier::Medium => (3.0, 5.0),
            Tier::Hard => (5.0, 10.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tier> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Tier::Easy),
            "medium" => Ok(Tier::Medium),
            "hard" => Ok(Tier::Hard),
            _ => Err(Error::Parse(format!("unknown tier `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub tier: Tier,
    pub start: AgentPose,
    pub target: Vec2,
    pub target_heading: f64,
    pub target_image: ObservationStrip,
    /// Geodesic distance from start to target.
    pub shortest: f64,
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: AgentPose,
    pub action: Action,
    pub collided: bool,
}

fn random_heading(rng: &mut Rng) -> f64 {
    let k = rng.gen_range(0..(std::f64::consts::TAU / TURN_ANGLE).round() as u32);
    k as f64 * TURN_ANGLE
}

/// Draws a start pose and target at cell centers whose geodesic distance
/// falls inside the tier band.
pub fn sample_episode(scene: &Scene, tier: Tier, camera: &Camera, rng: &mut Rng) -> Result<Episode> {
    let free = scene.free_cells();
    let (lo, hi) = tier.band();
    for _ in 0..MAX_ATTEMPTS {
        let start_cell = free[rng.gen_range(0..free.len())];
        let field = DistanceField::from_cell(scene, start_cell)?;
        let candidates: Vec<(i64, i64)> = free
            .iter()
            .copied()
            .filter(|&c| {
                let d = field.cell_distance(c);
                d >= lo && d <= hi
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let target_cell = candidates[rng.gen_range(0..candidates.len())];
        let start_heading = random_heading(rng);
        let target_heading = random_heading(rng);
        let start = Scene::cell_center(start_cell.0, start_cell.1);
        let target = Scene::cell_center(target_cell.0, target_cell.1);
        let target_pose = AgentPose::new(target.x, target.y, target_heading);
        return Ok(Episode {
            tier,
            start: AgentPose::new(start.x, start.y, start_heading),
            target,
            target_heading: target_pose.theta,
            target_image: render_observation(scene, &target_pose, camera)?,
            shortest: field.cell_distance(target_cell),
        });
    }
    Err(Error::TierInfeasible { tier: tier.name(), attempts: MAX_ATTEMPTS })
}
