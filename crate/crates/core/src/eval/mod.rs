//! Episode execution, navigation metrics and reference controllers.

mod controllers;
mod grid;

pub use controllers::{
    AlwaysStop, ExpertController, PolicyController, RandomWalk, UncertaintyGreedy,
};
pub use grid::{
    evaluate_config, evaluate_grid, grid_to_csv, sample_grid_episodes, summarize as summarize_rows, EpisodeSpec, GridRow,
    GridSettings,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, OnlineField};
use crate::render::Maps;
use rand::Rng as _;

use crate::rng::{self, Rng};
use crate::world::{
    render_observation, step_agent, Action, AgentPose, Camera, DistanceField, Episode, ObservationStrip, Scene,
    SceneConfig, StepRecord, Vec2, SUCCESS_RADIUS,
};

/// Everything fixed for a batch of rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub max_steps: usize,
    /// Field optimizer steps after each observation.
    pub field_steps: usize,
    pub width: usize,
    /// Horizontal field of view in radians.
    pub fov: f64,
    pub field: FieldConfig,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            max_steps: 800,
            field_steps: 4,
            width: 64,
            fov: std::f64::consts::FRAC_PI_2,
            field: FieldConfig::default(),
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.width == 0 {
            return Err(Error::Config("max_steps and width must be positive".into()));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("field of view {} must lie in (0, pi)", self.fov)));
        }
        self.field.validate()
    }

    /// The agent camera for `scene`; rays clip at the scene diagonal.
    pub fn camera(&self, scene: &Scene) -> Camera {
        Camera::new(self.width, self.fov, scene.diagonal())
    }
}

/// The goal of a navigation episode, with its precomputed distance field.
#[derive(Debug, Clone, Copy)]
pub struct Goal<'a> {
    pub episode: &'a Episode,
    pub distances: &'a DistanceField,
}

impl Goal<'_> {
    pub fn distance(&self, scene: &Scene, p: Vec2) -> Result<f64> {
        self.distances.distance_from(scene, p, self.episode.target)
    }

    /// Bearing of the target relative to the heading, in `(-pi, pi]`.
    pub fn bearing(&self, pose: &AgentPose) -> f64 {
        crate::world::wrap_pi((self.episode.target - pose.position).angle() - pose.theta)
    }
}

/// What a controller sees before choosing an action.
pub struct StepContext<'a> {
    pub scene: &'a Scene,
    pub camera: &'a Camera,
    pub step: usize,
    pub pose: AgentPose,
    pub observation: &'a ObservationStrip,
    pub field: Option<&'a OnlineField>,
    pub goal: Option<Goal<'a>>,
}

impl StepContext<'_> {
    pub fn require_field(&self) -> Result<&OnlineField> {
        self.field.ok_or_else(|| Error::Contract("controller needs a field but none was trained".into()))
    }

    pub fn require_goal(&self) -> Result<Goal<'_>> {
        self.goal.ok_or_else(|| Error::Contract("controller needs a navigation goal".into()))
    }

    pub fn render_maps(&self) -> Result<Maps> {
        self.require_field()?.render(&self.pose, self.camera)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub action: Option<Action>,
    /// Circular error of the predicted target bearing, when one exists.
    pub angle_error: Option<f64>,
    pub probs: Option<[f64; 4]>,
    /// Optional visual dumps for this step.
    pub uncertainty: Option<Vec<f64>>,
    pub saliency: Option<Vec<f64>>,
}

impl Decision {
    pub fn act(action: Action) -> Self {
        Decision { action: Some(action), ..Decision::default() }
    }
}

pub trait Controller {
    /// Whether the online field is needed; it is skipped otherwise.
    fn needs_field(&self) -> bool {
        false
    }

    fn act(&mut self, ctx: &StepContext<'_>, rng: &mut Rng) -> Result<Decision>;

    /// Called once after the rollout ends.
    fn finish(&mut self, _result: &EpisodeResult) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub path_length: f64,
    pub shortest: f64,
    pub final_distance: f64,
    pub collisions: usize,
    /// Pose and action at each step, then the final pose.
    pub trajectory: Vec<StepRecord>,
    pub final_pose: AgentPose,
    /// Per-step bearing errors reported by the controller.
    pub angle_errors: Vec<f64>,
}

impl EpisodeResult {
    pub fn poses(&self) -> Vec<AgentPose> {
        self.trajectory.iter().map(|r| r.pose).chain(std::iter::once(self.final_pose)).collect()
    }
}

/// Per-step capture used for visual dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDump {
    pub step: usize,
    pub uncertainty: Vec<f64>,
    pub saliency: Vec<f64>,
    /// Mean field loss over this step's optimizer updates.
    pub field_loss: Option<f64>,
}

/// Builds the online field for one rollout from its seed.
pub fn episode_field(scene: &Scene, config: &RolloutConfig, seed: u64) -> Result<OnlineField> {
    let extent = (scene.width() as f64, scene.height() as f64);
    let mut init = rng::stream(seed, "field-init", 0);
    OnlineField::new(config.field, extent, scene.diagonal(), &mut init, rng::stream(seed, "field-train", 0))
}

/// Runs one navigation episode.
pub fn run_episode(
    controller: &mut dyn Controller,
    scene: &Scene,
    episode: &Episode,
    config: &RolloutConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    run_episode_with_dumps(controller, scene, episode, config, seed, None)
}

pub fn run_episode_with_dumps(
    controller: &mut dyn Controller,
    scene: &Scene,
    episode: &Episode,
    config: &RolloutConfig,
    seed: u64,
    dumps: Option<&mut Vec<StepDump>>,
) -> Result<EpisodeResult> {
    let distances = DistanceField::from_cell(scene, scene.cell_of(episode.target))?;
    let goal = Goal { episode, distances: &distances };
    let result = rollout(controller, scene, episode.start, Some(goal), config, seed, dumps)?;
    controller.finish(&result)?;
    Ok(result)
}

/// Runs `steps` actions from `start` with no goal; used for exploration.
pub fn explore(
    controller: &mut dyn Controller,
    scene: &Scene,
    start: AgentPose,
    steps: usize,
    config: &RolloutConfig,
    seed: u64,
) -> Result<Vec<AgentPose>> {
    let cfg = RolloutConfig { max_steps: steps, ..*config };
    Ok(rollout(controller, scene, start, None, &cfg, seed, None)?.poses())
}

fn rollout(
    controller: &mut dyn Controller,
    scene: &Scene,
    start: AgentPose,
    goal: Option<Goal<'_>>,
    config: &RolloutConfig,
    seed: u64,
    mut dumps: Option<&mut Vec<StepDump>>,
) -> Result<EpisodeResult> {
    config.validate()?;
    let camera = config.camera(scene);
    let mut field = if controller.needs_field() { Some(episode_field(scene, config, seed)?) } else { None };
    let mut rng = rng::stream(seed, "sampling", 0);
    let distance = |p: Vec2| -> Result<f64> {
        match goal {
            Some(g) => g.distance(scene, p),
            None => Ok(f64::INFINITY),
        }
    };

    let mut pose = start;
    let mut dist = distance(pose.position)?;
    let mut trajectory = Vec::new();
    let mut angle_errors = Vec::new();
    let mut path_length = 0.0;
    let mut collisions = 0;
    for step in 0..config.max_steps {
        let observation = render_observation(scene, &pose, &camera)?;
        let mut field_loss = None;
        if let Some(f) = field.as_mut() {
            f.observe(&pose, &observation, &camera)?;
            let mut sum = 0.0;
            for _ in 0..config.field_steps {
                sum += f.train_step()?;
            }
            if config.field_steps > 0 {
                field_loss = Some(sum / config.field_steps as f64);
            }
        }
        let ctx = StepContext {
            scene,
            camera: &camera,
            step,
            pose,
            observation: &observation,
            field: field.as_ref(),
            goal,
        };
        let decision = controller.act(&ctx, &mut rng)?;
        let action = decision
            .action
            .ok_or_else(|| Error::Contract(format!("controller returned no action at step {step}")))?;
        if let Some(p) = decision.probs {
            let total: f64 = p.iter().sum();
            if p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::NonFinite { what: "action distribution", index: step });
            }
        }
        if let Some(e) = decision.angle_error {
            angle_errors.push(e);
        }
        if let Some(d) = dumps.as_deref_mut() {
            if decision.uncertainty.is_some() || decision.saliency.is_some() {
                d.push(StepDump {
                    step,
                    uncertainty: decision.uncertainty.unwrap_or_default(),
                    saliency: decision.saliency.unwrap_or_default(),
                    field_loss,
                });
            }
        }
        let (next, collided) = step_agent(scene, &pose, action);
        trajectory.push(StepRecord { step, pose, action, collided });
        path_length += next.position.distance(pose.position);
        collisions += usize::from(collided);
        pose = next;
        dist = distance(pose.position)?;
        if action == Action::Stop || dist <= SUCCESS_RADIUS {
            break;
        }
    }
    Ok(EpisodeResult {
        success: dist <= SUCCESS_RADIUS,
        steps: trajectory.len(),
        path_length,
        shortest: goal.map_or(0.0, |g| g.episode.shortest),
        final_distance: dist,
        collisions,
        trajectory,
        final_pose: pose,
        angle_errors,
    })
}

/// Success rate, success weighted by path length, distance to success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sr: f64,
    pub spl: f64,
    pub dts: f64,
    pub n: usize,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::Contract("metrics need at least one episode".into()));
    }
    let n = results.len() as f64;
    let mut sr = 0.0;
    let mut spl = 0.0;
    let mut dts = 0.0;
    for r in results {
        if r.success {
            sr += 1.0;
            let denom = r.path_length.max(r.shortest);
            spl += if denom > 0.0 { r.shortest / denom } else { 1.0 };
        }
        dts += (r.final_distance - SUCCESS_RADIUS).max(0.0);
    }
    Ok(Metrics { sr: sr / n, spl: spl / n, dts: dts / n, n: results.len() })
}

/// Fraction of free cells whose centre lies within 0.5 of some pose.
pub fn coverage(trajectory: &[AgentPose], scene: &Scene) -> f64 {
    let free = scene.free_cells();
    if free.is_empty() {
        return 0.0;
    }
    let mut seen = HashSet::new();
    for pose in trajectory {
        let (c, r) = scene.cell_of(pose.position);
        for dc in -1..=1 {
            for dr in -1..=1 {
                let cell = (c + dc, r + dr);
                if !scene.is_wall(cell.0, cell.1)
                    && Scene::cell_center(cell.0, cell.1).distance(pose.position) <= 0.5
                {
                    seen.insert(cell);
                }
            }
        }
    }
    seen.len() as f64 / free.len() as f64
}

/// Coverage of the uncertainty-greedy and random-walk explorers from the
/// same start in the same scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPair {
    pub seed: u64,
    pub greedy: f64,
    pub random: f64,
}

pub fn exploration_pair(
    scene_config: &SceneConfig,
    rollout: &RolloutConfig,
    steps: usize,
    seed: u64,
) -> Result<ExplorationPair> {
    let scene = Scene::generate(rng::derive_seed(seed, "explore-scene", 0), scene_config)?;
    let mut pick = rng::stream(seed, "explore-start", 0);
    let free = scene.free_cells();
    let (c, r) = free[pick.gen_range(0..free.len())];
    let center = Scene::cell_center(c, r);
    let start = AgentPose::new(center.x, center.y, pick.gen_range(0..12) as f64 * crate::world::TURN_ANGLE);
    let greedy = explore(&mut UncertaintyGreedy, &scene, start, steps, rollout, seed)?;
    let random = explore(&mut RandomWalk, &scene, start, steps, rollout, seed)?;
    Ok(ExplorationPair { seed, greedy: coverage(&greedy, &scene), random: coverage(&random, &scene) })
}
