use super::{add_observation, FieldConfig, FieldNet, ReplayBuffer};
use crate::error::{shape_err, Error, Result};
use crate::render::{render_maps, sample_depths, tape_render_rays, DepthMode, Maps};
use crate::rng::Rng;
use crate::tensor::{adam_step, AdamConfig, OptimizerState, Tape, Var};
use crate::world::{AgentPose, Camera, ObservationStrip, Vec2};

/// Mean over rays of `|gt - mean|^2 / (2 var) + log(var) / 2`.
/// Shapes: `mean [R, 3]`, `variance [R, 1]`, `gt [R, 3]`.
pub fn nll_loss(tape: &mut Tape, mean: Var, variance: Var, gt: Var) -> Result<Var> {
    let r = tape.shape(mean)[0];
    if tape.shape(variance) != [r, 1] || tape.shape(gt) != tape.shape(mean) {
        return Err(shape_err("nll", format!("mean {:?}, variance {:?}", tape.shape(mean), tape.shape(variance))));
    }
    if let Some(i) = tape.value(variance).iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Contract(format!("variance of ray {i} is not positive")));
    }
    let diff = tape.sub(mean, gt)?;
    let sq = tape.square(diff)?;
    let resid = tape.sum_axis(sq, 1)?;
    let var = tape.reshape(variance, &[r])?;
    let two_var = tape.scale(var, 2.0)?;
    let fit = tape.div(resid, two_var)?;
    let logv = tape.log(var)?;
    let half_log = tape.scale(logv, 0.5)?;
    let per_ray = tape.add(fit, half_log)?;
    tape.mean(per_ray)
}

/// Plain-value version of [`nll_loss`] for one ray.
pub fn nll_loss_value(mean: [f64; 3], variance: f64, gt: [f64; 3]) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Contract(format!("variance {variance} is not positive")));
    }
    let r: f64 = (0..3).map(|k| (gt[k] - mean[k]).powi(2)).sum();
    Ok(r / (2.0 * variance) + variance.ln() / 2.0)
}

/// One optimizer step on a uniformly sampled batch of stored rays.
pub fn train_step(
    net: &mut FieldNet,
    buffer: &ReplayBuffer,
    batch: usize,
    far: f64,
    opt: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<f64> {
    let rays = buffer.sample(batch, rng)?;
    let cfg = net.config;
    let mut depths = Vec::with_capacity(rays.len());
    for _ in &rays {
        depths.push(sample_depths(cfg.near, far, cfg.samples, DepthMode::Stratified, Some(rng))?);
    }
    let origins: Vec<(Vec2, f64)> = rays.iter().map(|r| (r.origin, r.angle())).collect();
    let mut tape = Tape::new();
    let bind = net.params.bind(&mut tape);
    let out = tape_render_rays(&mut tape, net, &bind, &origins, &depths, far)?;
    let gt = tape.constant(&[rays.len(), 3], rays.iter().flat_map(|r| r.color).collect())?;
    let loss = nll_loss(&mut tape, out.color, out.loss_variance, gt)?;
    let value = tape.item(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "field loss", index: 0 });
    }
    let grads = tape.backward(loss)?;
    net.params.zero_grad();
    net.params.accumulate(&bind, &grads)?;
    adam_step(&mut net.params, opt)?;
    Ok(value)
}

/// A field trained online from the rays an agent observes in one scene.
#[derive(Debug, Clone)]
pub struct OnlineField {
    pub net: FieldNet,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
    pub far: f64,
    rng: Rng,
    steps: usize,
}

impl OnlineField {
    /// `extent` is the scene's `(width, height)`; `far` its ray clip.
    pub fn new(config: FieldConfig, extent: (f64, f64), far: f64, init_rng: &mut Rng, train_rng: Rng) -> Result<Self> {
        let net = FieldNet::new(config, extent, init_rng)?;
        let optimizer = OptimizerState::new(&net.params, AdamConfig { lr: config.lr, ..AdamConfig::default() });
        Ok(OnlineField {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            far: config.far_for(far),
            net,
            optimizer,
            rng: train_rng,
            steps: 0,
        })
    }

    pub fn observe(&mut self, pose: &AgentPose, strip: &ObservationStrip, camera: &Camera) -> Result<()> {
        add_observation(&mut self.buffer, pose, strip, camera)
    }

    pub fn train_step(&mut self) -> Result<f64> {
        let batch = self.net.config.batch;
        let loss = train_step(&mut self.net, &self.buffer, batch, self.far, &mut self.optimizer, &mut self.rng)?;
        self.steps += 1;
        Ok(loss)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn render(&self, pose: &AgentPose, camera: &Camera) -> Result<Maps> {
        render_maps(&self.net, pose, camera)
    }
}
