use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{action_probabilities, policy_inputs, select_action, PolicyNet, SelectMode};
use crate::error::{Error, Result};
use crate::eval::{run_episode, Controller, Decision, EpisodeResult, RolloutConfig, StepContext};
use crate::extract::circular_l1_value;
use crate::rng::{self, Rng};
use crate::tensor::{adam_step, checkpoint, AdamConfig, OptimizerState, Tape, Tensor};
use crate::world::{expert_action_with, sample_episode, Scene, Tier};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Step cap for training rollouts.
    pub max_steps: usize,
    pub tiers: Vec<Tier>,
    pub expert_start: f64,
    pub expert_end: f64,
    /// Fraction of training over which the expert probability anneals.
    pub anneal_fraction: f64,
    /// Always execute the expert's action.
    pub pure_bc: bool,
    /// Take an optimizer step after every action instead of once per episode.
    pub per_step_update: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 400,
            max_steps: 150,
            tiers: Tier::ALL.to_vec(),
            expert_start: 1.0,
            expert_end: 0.25,
            anneal_fraction: 0.5,
            pure_bc: false,
            per_step_update: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.tiers.is_empty() {
            return Err(Error::Config("training needs max_steps > 0 and at least one tier".into()));
        }
        for p in [self.expert_start, self.expert_end] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("expert probability {p} outside [0, 1]")));
            }
        }
        if !(self.anneal_fraction > 0.0 && self.anneal_fraction <= 1.0) {
            return Err(Error::Config("anneal_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Chance that the expert's action is executed in episode `episode`.
pub fn expert_probability(cfg: &TrainConfig, episode: usize) -> f64 {
    if cfg.pure_bc {
        return 1.0;
    }
    let span = (cfg.anneal_fraction * cfg.episodes as f64).max(1.0);
    let t = (episode as f64 / span).min(1.0);
    cfg.expert_start + (cfg.expert_end - cfg.expert_start) * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    /// Mean per-step cross-entropy.
    pub ce_loss: f64,
    /// Mean per-step circular bearing error.
    pub aux_loss: f64,
    /// `ce_loss + lambda * aux_loss` with the weight actually used.
    pub total_loss: f64,
    pub success: bool,
    pub steps: usize,
    pub expert_probability: f64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str = "episode,ce_loss,aux_loss,total_loss,success,steps,expert_probability";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{},{},{:.6}",
            self.episode,
            self.ce_loss,
            self.aux_loss,
            self.total_loss,
            u8::from(self.success),
            self.steps,
            self.expert_probability
        )
    }
}

/// Accumulates the imitation loss while acting with an expert/policy mix.
pub struct LearnerController<'a> {
    pub net: &'a mut PolicyNet,
    pub optimizer: &'a mut OptimizerState,
    pub expert_probability: f64,
    pub per_step_update: bool,
    ce_sum: f64,
    aux_sum: f64,
    count: usize,
}

impl<'a> LearnerController<'a> {
    pub fn new(net: &'a mut PolicyNet, optimizer: &'a mut OptimizerState, expert_probability: f64) -> Self {
        net.params.zero_grad();
        LearnerController {
            net,
            optimizer,
            expert_probability,
            per_step_update: false,
            ce_sum: 0.0,
            aux_sum: 0.0,
            count: 0,
        }
    }

    /// Mean cross-entropy and bearing error over the steps seen so far.
    pub fn mean_losses(&self) -> (f64, f64) {
        if self.count == 0 {
            (0.0, 0.0)
        } else {
            (self.ce_sum / self.count as f64, self.aux_sum / self.count as f64)
        }
    }
}

impl Controller for LearnerController<'_> {
    fn needs_field(&self) -> bool {
        true
    }

    fn act(&mut self, ctx: &StepContext<'_>, rng: &mut Rng) -> Result<Decision> {
        let goal = ctx.require_goal()?;
        let maps = ctx.render_maps()?;
        let expert = expert_action_with(ctx.scene, goal.distances, &ctx.pose, goal.episode.target)?;
        let bearing = goal.bearing(&ctx.pose);

        let mut tape = Tape::new();
        let bind = self.net.params.bind(&mut tape);
        let inputs = policy_inputs(&mut tape, &maps, ctx.observation, &goal.episode.target_image, false)?;
        let out = self.net.forward(&mut tape, &bind, &inputs)?;
        let loss = self.net.step_loss(&mut tape, &out, expert, bearing)?;
        if !tape.item(loss.total).is_finite() {
            return Err(Error::NonFinite { what: "imitation loss", index: ctx.step });
        }
        let grads = tape.backward(loss.total)?;
        self.net.params.accumulate(&bind, &grads)?;
        self.ce_sum += loss.cross_entropy;
        self.aux_sum += loss.aux;
        self.count += 1;
        if self.per_step_update {
            adam_step(&mut self.net.params, self.optimizer)?;
            self.net.params.zero_grad();
        }

        let probs = action_probabilities(&tape, &out);
        let use_expert = rng.gen::<f64>() < self.expert_probability;
        let policy_action = select_action(&probs, SelectMode::Sample, rng);
        Ok(Decision {
            action: Some(if use_expert { expert } else { policy_action }),
            angle_error: Some(circular_l1_value(tape.item(out.angle), bearing)),
            probs: Some(probs),
            ..Decision::default()
        })
    }

    fn finish(&mut self, _result: &EpisodeResult) -> Result<()> {
        if self.per_step_update || self.count == 0 {
            return Ok(());
        }
        self.net.params.scale_grads(1.0 / self.count as f64);
        adam_step(&mut self.net.params, self.optimizer)?;
        self.net.params.zero_grad();
        Ok(())
    }
}

/// Optimizer moments, progress and the log so far; enough to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub optimizer: OptimizerState,
    /// Next episode to run.
    pub episode: usize,
    pub log: Vec<TrainLogRow>,
}

impl TrainingState {
    pub fn new(net: &PolicyNet) -> Self {
        TrainingState {
            optimizer: OptimizerState::new(&net.params, AdamConfig { lr: net.config.lr, ..AdamConfig::default() }),
            episode: 0,
            log: Vec::new(),
        }
    }
}

/// Draws the scene and episode for training episode `index`.
fn training_episode(
    scenes: &[Scene],
    cfg: &TrainConfig,
    rollout: &RolloutConfig,
    seed: u64,
    index: usize,
) -> Result<(usize, crate::world::Episode)> {
    let mut rng = rng::stream(seed, "train-episode", index as u64);
    let first = rng.gen_range(0..scenes.len());
    let tier = cfg.tiers[rng.gen_range(0..cfg.tiers.len())];
    for k in 0..scenes.len() {
        let si = (first + k) % scenes.len();
        let camera = rollout.camera(&scenes[si]);
        match sample_episode(&scenes[si], tier, &camera, &mut rng) {
            Ok(ep) => return Ok((si, ep)),
            Err(Error::TierInfeasible { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::TierInfeasible { tier: tier.name(), attempts: scenes.len() })
}

/// Runs training episodes `state.episode..cfg.episodes`, calling
/// `after_episode` once each episode has been applied.
pub fn train_policy(
    net: &mut PolicyNet,
    scenes: &[Scene],
    cfg: &TrainConfig,
    rollout: &RolloutConfig,
    seed: u64,
    state: &mut TrainingState,
    mut after_episode: impl FnMut(&PolicyNet, &TrainingState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::Contract("training needs at least one scene".into()));
    }
    if rollout.width != net.config.width {
        return Err(Error::Config(format!(
            "rollout width {} differs from the policy width {}",
            rollout.width, net.config.width
        )));
    }
    let rollout = RolloutConfig { max_steps: cfg.max_steps, ..*rollout };
    let lambda = if net.ablation.use_auxiliary { net.config.lambda_aux } else { 0.0 };
    while state.episode < cfg.episodes {
        let e = state.episode;
        let (si, episode) = training_episode(scenes, cfg, &rollout, seed, e)?;
        let p = expert_probability(cfg, e);
        let mut learner = LearnerController::new(net, &mut state.optimizer, p);
        learner.per_step_update = cfg.per_step_update;
        let result = run_episode(&mut learner, &scenes[si], &episode, &rollout, rng::derive_seed(seed, "train-rollout", e as u64))?;
        let (ce, aux) = learner.mean_losses();
        state.log.push(TrainLogRow {
            episode: e,
            ce_loss: ce,
            aux_loss: aux,
            total_loss: ce + lambda * aux,
            success: result.success,
            steps: result.steps,
            expert_probability: p,
        });
        state.episode += 1;
        after_episode(net, state)?;
    }
    Ok(())
}

const LOG_COLUMNS: usize = 6;

/// Writes parameters, optimizer moments, progress and log as one checkpoint.
pub fn save_training_state(net: &PolicyNet, state: &TrainingState, w: impl Write) -> Result<()> {
    let mut owned: Vec<(String, Tensor)> = Vec::new();
    for ((name, t), (m, v)) in
        net.params.iter().zip(state.optimizer.first_moment.iter().zip(&state.optimizer.second_moment))
    {
        owned.push((format!("adam.m.{name}"), Tensor::new(t.shape().to_vec(), m.clone())?));
        owned.push((format!("adam.v.{name}"), Tensor::new(t.shape().to_vec(), v.clone())?));
    }
    owned.push(("train.step".into(), Tensor::scalar(state.optimizer.step as f64)));
    owned.push(("train.episode".into(), Tensor::scalar(state.episode as f64)));
    let mut rows = Vec::with_capacity(state.log.len() * LOG_COLUMNS);
    for r in &state.log {
        rows.extend([
            r.ce_loss,
            r.aux_loss,
            r.total_loss,
            f64::from(u8::from(r.success)),
            r.steps as f64,
            r.expert_probability,
        ]);
    }
    owned.push(("train.log".into(), Tensor::new(vec![state.log.len(), LOG_COLUMNS], rows)?));
    let entries = net.params.iter().chain(owned.iter().map(|(n, t)| (n.as_str(), t)));
    let mut w = w;
    w.write_all(&checkpoint::encode(entries))?;
    Ok(())
}

/// Restores what [`save_training_state`] wrote into `net` and returns the
/// rest.
pub fn load_training_state(net: &mut PolicyNet, r: impl Read) -> Result<TrainingState> {
    let entries = checkpoint::read_entries(r)?;
    let n = net.params.len();
    if entries.len() != 3 * n + 3 {
        return Err(Error::Parse(format!("training checkpoint has {} entries, expected {}", entries.len(), 3 * n + 3)));
    }
    let mut it = entries.into_iter();
    let params: Vec<(String, Tensor)> = it.by_ref().take(n).collect();
    net.params.load(params)?;
    let mut state = TrainingState::new(net);
    for i in 0..n {
        let name = &net.params.names()[i];
        for (prefix, slot) in [("adam.m.", &mut state.optimizer.first_moment[i]), ("adam.v.", &mut state.optimizer.second_moment[i])] {
            let (entry, t) = it.next().expect("entry count checked");
            if entry != format!("{prefix}{name}") || t.numel() != slot.len() {
                return Err(Error::Parse(format!("unexpected optimizer entry {entry}")));
            }
            slot.copy_from_slice(t.data());
        }
    }
    let mut scalar = |want: &str| -> Result<Tensor> {
        let (name, t) = it.next().expect("entry count checked");
        if name != want {
            return Err(Error::Parse(format!("expected {want}, found {name}")));
        }
        Ok(t)
    };
    let count = |t: &Tensor, what: &str| -> Result<usize> {
        let v = t.data().first().copied().unwrap_or(-1.0);
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::Parse(format!("{what} is not a count: {v}")));
        }
        Ok(v as usize)
    };
    state.optimizer.step = count(&scalar("train.step")?, "optimizer step")? as u64;
    state.episode = count(&scalar("train.episode")?, "episode")?;
    let log = scalar("train.log")?;
    if log.shape().len() != 2 || log.shape()[1] != LOG_COLUMNS || log.shape()[0] != state.episode {
        return Err(Error::Parse(format!("training log has shape {:?}", log.shape())));
    }
    state.log = log
        .data()
        .chunks_exact(LOG_COLUMNS)
        .enumerate()
        .map(|(i, c)| TrainLogRow {
            episode: i,
            ce_loss: c[0],
            aux_loss: c[1],
            total_loss: c[2],
            success: c[3] != 0.0,
            steps: c[4] as usize,
            expert_probability: c[5],
        })
        .collect();
    Ok(state)
}
