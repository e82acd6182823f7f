//! Flat `key = value` run configuration covering every tunable.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{GridSettings, RolloutConfig};
use crate::policy::{AblationConfig, PolicyConfig, SelectMode, TrainConfig};
use crate::world::{SceneConfig, Tier};

/// Upper bound on config text, so hostile input cannot balloon memory.
pub const MAX_CONFIG_BYTES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub rollout: RolloutConfig,
    pub policy: PolicyConfig,
    pub ablation: AblationConfig,
    pub train: TrainConfig,
    /// Save a resumable checkpoint every this many episodes.
    pub checkpoint_every: usize,
    pub eval_episodes_per_tier: usize,
    pub eval_tiers: Vec<Tier>,
    pub eval_mode: SelectMode,
    pub workers: usize,
    /// Episodes per configuration that get visual dumps.
    pub dump_episodes: usize,
    pub explore_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scene: SceneConfig::default(),
            train_scenes: 21,
            val_scenes: 14,
            rollout: RolloutConfig::default(),
            policy: PolicyConfig::default(),
            ablation: AblationConfig::FULL,
            train: TrainConfig::default(),
            checkpoint_every: 25,
            eval_episodes_per_tier: 50,
            eval_tiers: Tier::ALL.to_vec(),
            eval_mode: SelectMode::Sample,
            workers: 1,
            dump_episodes: 0,
            explore_steps: 400,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn tiers(key: &str, value: &str) -> Result<Vec<Tier>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let t: Tier = part.parse().map_err(|_| Error::Config(format!("`{key}`: unknown tier `{part}`")))?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("`{key}` lists no tiers")));
    }
    Ok(out)
}

fn tier_list(ts: &[Tier]) -> String {
    ts.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = &mut self.rollout.field;
        match key {
            "seed" => self.seed = num(key, v)?,
            "scene.height" => self.scene.height = num(key, v)?,
            "scene.width" => self.scene.width = num(key, v)?,
            "scene.wall_density" => self.scene.wall_density = num(key, v)?,
            "scenes.train" => self.train_scenes = num(key, v)?,
            "scenes.val" => self.val_scenes = num(key, v)?,
            "camera.width" => {
                self.rollout.width = num(key, v)?;
                self.policy.width = self.rollout.width;
            }
            "camera.fov" => self.rollout.fov = num(key, v)?,
            "field.pos_freqs" => f.pos_freqs = num(key, v)?,
            "field.dir_freqs" => f.dir_freqs = num(key, v)?,
            "field.hidden" => f.hidden = num(key, v)?,
            "field.feature_dim" => {
                f.feature_dim = num(key, v)?;
                self.policy.feature_dim = f.feature_dim;
            }
            "field.samples" => f.samples = num(key, v)?,
            "field.near" => f.near = num(key, v)?,
            "field.far" => {
                let far: f64 = num(key, v)?;
                f.far = if far == 0.0 { None } else { Some(far) };
            }
            "field.beta_min" => f.beta_min = num(key, v)?,
            "field.batch" => f.batch = num(key, v)?,
            "field.lr" => f.lr = num(key, v)?,
            "field.buffer_capacity" => f.buffer_capacity = num(key, v)?,
            "field.steps_per_action" => self.rollout.field_steps = num(key, v)?,
            "policy.lambda_aux" => self.policy.lambda_aux = num(key, v)?,
            "policy.lr" => self.policy.lr = num(key, v)?,
            "policy.use_f_u" => self.ablation.use_f_u = boolean(key, v)?,
            "policy.use_auxiliary" => self.ablation.use_auxiliary = boolean(key, v)?,
            "policy.use_cbam" => self.ablation.use_cbam = boolean(key, v)?,
            "train.episodes" => self.train.episodes = num(key, v)?,
            "train.max_steps" => self.train.max_steps = num(key, v)?,
            "train.tiers" => self.train.tiers = tiers(key, v)?,
            "train.expert_start" => self.train.expert_start = num(key, v)?,
            "train.expert_end" => self.train.expert_end = num(key, v)?,
            "train.anneal_fraction" => self.train.anneal_fraction = num(key, v)?,
            "train.pure_bc" => self.train.pure_bc = boolean(key, v)?,
            "train.per_step_update" => self.train.per_step_update = boolean(key, v)?,
            "train.checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "eval.max_steps" => self.rollout.max_steps = num(key, v)?,
            "eval.episodes_per_tier" => self.eval_episodes_per_tier = num(key, v)?,
            "eval.tiers" => self.eval_tiers = tiers(key, v)?,
            "eval.mode" => self.eval_mode = v.parse().map_err(|_| Error::Config(format!("`{key}`: `{v}`")))?,
            "eval.workers" => self.workers = num(key, v)?,
            "eval.dump_episodes" => self.dump_episodes = num(key, v)?,
            "explore.steps" => self.explore_steps = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(Error::Config(format!("config is {} bytes, limit {MAX_CONFIG_BYTES}", text.len())));
        }
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` given twice", i + 1)));
            }
            cfg.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rollout.validate()?;
        self.policy.validate()?;
        self.train.validate()?;
        if self.policy.width != self.rollout.width || self.policy.feature_dim != self.rollout.field.feature_dim {
            return Err(Error::Config("policy and rollout disagree on width or feature size".into()));
        }
        if self.scene.height < 8 || self.scene.width < 8 || !(0.0..=1.0).contains(&self.scene.wall_density) {
            return Err(Error::Config("scenes must be at least 8x8 with wall density in [0, 1]".into()));
        }
        if self.train_scenes == 0 || self.val_scenes == 0 {
            return Err(Error::Config("both scene splits need at least one scene".into()));
        }
        if self.workers == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("workers and checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its current value; [`RunConfig::parse`] reads it back
    /// to an equal config.
    pub fn to_text(&self) -> String {
        let f = &self.rollout.field;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("scene.height", self.scene.height.to_string());
        kv("scene.width", self.scene.width.to_string());
        kv("scene.wall_density", self.scene.wall_density.to_string());
        kv("scenes.train", self.train_scenes.to_string());
        kv("scenes.val", self.val_scenes.to_string());
        kv("camera.width", self.rollout.width.to_string());
        kv("camera.fov", self.rollout.fov.to_string());
        kv("field.pos_freqs", f.pos_freqs.to_string());
        kv("field.dir_freqs", f.dir_freqs.to_string());
        kv("field.hidden", f.hidden.to_string());
        kv("field.feature_dim", f.feature_dim.to_string());
        kv("field.samples", f.samples.to_string());
        kv("field.near", f.near.to_string());
        kv("field.far", f.far.unwrap_or(0.0).to_string());
        kv("field.beta_min", f.beta_min.to_string());
        kv("field.batch", f.batch.to_string());
        kv("field.lr", f.lr.to_string());
        kv("field.buffer_capacity", f.buffer_capacity.to_string());
        kv("field.steps_per_action", self.rollout.field_steps.to_string());
        kv("policy.lambda_aux", self.policy.lambda_aux.to_string());
        kv("policy.lr", self.policy.lr.to_string());
        kv("policy.use_f_u", self.ablation.use_f_u.to_string());
        kv("policy.use_auxiliary", self.ablation.use_auxiliary.to_string());
        kv("policy.use_cbam", self.ablation.use_cbam.to_string());
        kv("train.episodes", self.train.episodes.to_string());
        kv("train.max_steps", self.train.max_steps.to_string());
        kv("train.tiers", tier_list(&self.train.tiers));
        kv("train.expert_start", self.train.expert_start.to_string());
        kv("train.expert_end", self.train.expert_end.to_string());
        kv("train.anneal_fraction", self.train.anneal_fraction.to_string());
        kv("train.pure_bc", self.train.pure_bc.to_string());
        kv("train.per_step_update", self.train.per_step_update.to_string());
        kv("train.checkpoint_every", self.checkpoint_every.to_string());
        kv("eval.max_steps", self.rollout.max_steps.to_string());
        kv("eval.episodes_per_tier", self.eval_episodes_per_tier.to_string());
        kv("eval.tiers", tier_list(&self.eval_tiers));
        kv("eval.mode", match self.eval_mode {
            SelectMode::Sample => "sample".into(),
            SelectMode::Greedy => "greedy".into(),
        });
        kv("eval.workers", self.workers.to_string());
        kv("eval.dump_episodes", self.dump_episodes.to_string());
        kv("explore.steps", self.explore_steps.to_string());
        s
    }

    pub fn grid_settings(&self) -> GridSettings {
        GridSettings { rollout: self.rollout, mode: self.eval_mode, workers: self.workers }
    }
}
