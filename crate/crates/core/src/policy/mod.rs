//! Perception encoder, adaptive feature fusion, action head and the
//! imitation objective.

mod train;

pub use train::{
    expert_probability, load_training_state, save_training_state, train_policy, LearnerController, TrainConfig,
    TrainLogRow, TrainingState,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{shape_err, Error, Result};
use crate::extract::{circular_l1, spatial_encoder, uncertainty_encoder, AngleHead, MapEncoder, FEATURE_LEN};
use crate::render::Maps;
use crate::rng::Rng;
use crate::tensor::{checkpoint, Binding, Conv1d, Linear, ParamSet, Tape, Tensor, Var};
use crate::world::{Action, ObservationStrip};

/// Which of the three optional components are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AblationConfig {
    pub use_f_u: bool,
    pub use_auxiliary: bool,
    pub use_cbam: bool,
}

impl AblationConfig {
    pub const FULL: AblationConfig = AblationConfig { use_f_u: true, use_auxiliary: true, use_cbam: true };

    /// The six rows of the ablation table, fully ablated first.
    pub const TABLE: [AblationConfig; 6] = [
        AblationConfig { use_f_u: false, use_auxiliary: false, use_cbam: false },
        AblationConfig { use_f_u: true, use_auxiliary: false, use_cbam: false },
        AblationConfig { use_f_u: false, use_auxiliary: true, use_cbam: true },
        AblationConfig { use_f_u: true, use_auxiliary: false, use_cbam: true },
        AblationConfig { use_f_u: true, use_auxiliary: true, use_cbam: false },
        AblationConfig::FULL,
    ];

    /// `full`, or `no-` followed by the disabled parts, e.g. `no-fu-cbam`.
    pub fn label(&self) -> String {
        let mut off = Vec::new();
        if !self.use_f_u {
            off.push("fu");
        }
        if !self.use_auxiliary {
            off.push("at");
        }
        if !self.use_cbam {
            off.push("cbam");
        }
        if off.is_empty() {
            "full".into()
        } else {
            format!("no-{}", off.join("-"))
        }
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig::FULL
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts `none`/`full`, a label such as `no-fu-at`, or a comma list of
/// single ablations such as `no-fu,no-cbam`.
impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = AblationConfig::FULL;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let part = part.to_ascii_lowercase();
            if part == "none" || part == "full" {
                continue;
            }
            let rest = part
                .strip_prefix("no-")
                .ok_or_else(|| Error::Parse(format!("unknown ablation `{part}`")))?;
            for name in rest.split('-') {
                match name {
                    "fu" => cfg.use_f_u = false,
                    "at" => cfg.use_auxiliary = false,
                    "cbam" => cfg.use_cbam = false,
                    other => return Err(Error::Parse(format!("unknown ablation component `{other}`"))),
                }
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Strip width; must be divisible by 16.
    pub width: usize,
    /// Channel count of the spatial feature map.
    pub feature_dim: usize,
    pub lambda_aux: f64,
    pub lr: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { width: 64, feature_dim: 16, lambda_aux: 0.5, lr: 1e-3 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width % 16 != 0 {
            return Err(Error::Config(format!("strip width {} must be a positive multiple of 16", self.width)));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.lambda_aux >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::Config("lambda_aux must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

/// Two stride-4 convolutions over the `[4, W]` RGB-D strip, then linear.
#[derive(Debug, Clone, Copy)]
pub struct PerceptionEncoder {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub head: Linear,
}

impl PerceptionEncoder {
    pub fn new(p: &mut ParamSet, width: usize, rng: &mut Rng) -> Self {
        PerceptionEncoder {
            conv1: Conv1d::new(p, "perception.conv1", 4, 16, 3, 4, 1, rng),
            conv2: Conv1d::new(p, "perception.conv2", 16, 16, 3, 4, 1, rng),
            head: Linear::new(p, "perception.head", 16 * (width / 16), FEATURE_LEN, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, obs: Var) -> Result<Var> {
        let h = self.conv1.forward(tape, bind, obs)?;
        let h = tape.relu(h)?;
        let h = self.conv2.forward(tape, bind, h)?;
        let h = tape.relu(h)?;
        let n = tape.shape(h).iter().product();
        let flat = tape.reshape(h, &[1, n])?;
        self.head.forward(tape, bind, flat)
    }
}

/// Channel-major `[4, W]`: RGB then depth divided by the far clip.
pub fn observation_values(strip: &ObservationStrip) -> Vec<f64> {
    let mut v = strip.rgb_channels();
    v.extend(strip.depth.iter().map(|d| d / strip.far));
    v
}

/// Places the rendered maps, the observation and the target image on the
/// tape. The uncertainty map becomes a gradient leaf when `track_uncertainty`
/// is set so its saliency can be read back.
pub fn policy_inputs(
    tape: &mut Tape,
    maps: &Maps,
    observation: &ObservationStrip,
    target: &ObservationStrip,
    track_uncertainty: bool,
) -> Result<PolicyInputs> {
    let w = maps.width();
    if observation.width() != w || target.width() != w {
        return Err(shape_err(
            "policy inputs",
            format!("maps {w} wide, observation {}, target {}", observation.width(), target.width()),
        ));
    }
    let uncertainty = if track_uncertainty {
        tape.variable(&[1, w], maps.uncertainty.clone())?
    } else {
        tape.constant(&[1, w], maps.uncertainty.clone())?
    };
    Ok(PolicyInputs {
        uncertainty,
        features: tape.constant(&[maps.feature_dim, w], maps.features.clone())?,
        target: tape.constant(&[3, w], target.rgb_channels())?,
        observation: tape.constant(&[4, w], observation_values(observation))?,
    })
}

/// Tape inputs for one decision.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInputs {
    /// `[1, W]`.
    pub uncertainty: Var,
    /// `[D_f, W]`.
    pub features: Var,
    /// `[3, W]`.
    pub target: Var,
    /// `[4, W]`.
    pub observation: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyOutputs {
    pub f_cog: Var,
    pub f_u: Var,
    pub f_p: Var,
    /// Fusion weights over the concatenated features, `[1, 192]`.
    pub weights: Var,
    pub f_cat2: Var,
    pub logits: Var,
    pub log_probs: Var,
    /// Predicted target bearing, `[1, 1]`.
    pub angle: Var,
}

#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub config: PolicyConfig,
    pub ablation: AblationConfig,
    pub params: ParamSet,
    pub uncertainty: MapEncoder,
    pub spatial: MapEncoder,
    pub angle: AngleHead,
    pub perception: PerceptionEncoder,
    pub fuse_attention: Linear,
    pub fuse_mlp: Linear,
    pub action_head: Linear,
}

impl PolicyNet {
    pub fn new(config: PolicyConfig, ablation: AblationConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let uncertainty = uncertainty_encoder(&mut p, config.width, rng);
        let spatial = spatial_encoder(&mut p, config.feature_dim, config.width, rng);
        let angle = AngleHead::new(&mut p, rng);
        let perception = PerceptionEncoder::new(&mut p, config.width, rng);
        let fuse_attention = Linear::new(&mut p, "fuse.attention", 3 * FEATURE_LEN, 3 * FEATURE_LEN, rng);
        let fuse_mlp = Linear::new(&mut p, "fuse.mlp", 3 * FEATURE_LEN, FEATURE_LEN, rng);
        let action_head = Linear::new(&mut p, "action", FEATURE_LEN, Action::COUNT, rng);
        Ok(PolicyNet {
            config,
            ablation,
            params: p,
            uncertainty,
            spatial,
            angle,
            perception,
            fuse_attention,
            fuse_mlp,
            action_head,
        })
    }

    /// `f_cat2 = relu(MLP(w * f_cat1))` with `w = sigmoid(MLP(f_cat1))`.
    pub fn fuse(&self, tape: &mut Tape, bind: &Binding, f_cog: Var, f_u: Var, f_p: Var) -> Result<(Var, Var)> {
        for v in [f_cog, f_u, f_p] {
            if tape.shape(v) != [1, FEATURE_LEN] {
                return Err(shape_err("fuse", format!("feature {:?} is not [1, {FEATURE_LEN}]", tape.shape(v))));
            }
        }
        let cat = tape.concat(&[f_cog, f_u, f_p], 1)?;
        let a = self.fuse_attention.forward(tape, bind, cat)?;
        let w = tape.sigmoid(a)?;
        let weighted = tape.mul(w, cat)?;
        let h = self.fuse_mlp.forward(tape, bind, weighted)?;
        Ok((tape.relu(h)?, w))
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, inputs: &PolicyInputs) -> Result<PolicyOutputs> {
        let cbam = self.ablation.use_cbam;
        let f_u = if self.ablation.use_f_u {
            self.uncertainty.forward(tape, bind, inputs.uncertainty, cbam)?
        } else {
            tape.constant(&[1, FEATURE_LEN], vec![0.0; FEATURE_LEN])?
        };
        let cog_in = tape.concat(&[inputs.features, inputs.target], 0)?;
        let f_cog = self.spatial.forward(tape, bind, cog_in, cbam)?;
        let f_p = self.perception.forward(tape, bind, inputs.observation)?;
        let (f_cat2, weights) = self.fuse(tape, bind, f_cog, f_u, f_p)?;
        let logits = self.action_head.forward(tape, bind, f_cat2)?;
        let log_probs = tape.log_softmax(logits)?;
        let angle = self.angle.forward(tape, bind, f_cog)?;
        Ok(PolicyOutputs { f_cog, f_u, f_p, weights, f_cat2, logits, log_probs, angle })
    }

    /// Imitation loss for one step: cross-entropy on the expert action plus
    /// the weighted circular bearing error (skipped when ablated).
    pub fn step_loss(&self, tape: &mut Tape, out: &PolicyOutputs, expert: Action, bearing: f64) -> Result<StepLoss> {
        let mut onehot = vec![0.0; Action::COUNT];
        onehot[expert.index()] = -1.0;
        let sel = tape.constant(&[1, Action::COUNT], onehot)?;
        let picked = tape.mul(out.log_probs, sel)?;
        let ce = tape.sum(picked)?;
        let aux = circular_l1(tape, out.angle, bearing)?;
        let aux_value = tape.item(aux);
        let lambda = if self.ablation.use_auxiliary { self.config.lambda_aux } else { 0.0 };
        let total = if lambda > 0.0 {
            let weighted = tape.scale(aux, lambda)?;
            tape.add(ce, weighted)?
        } else {
            ce
        };
        Ok(StepLoss { total, cross_entropy: tape.item(ce), aux: aux_value })
    }
}

const ABLATION_ENTRY: &str = "meta.ablation";

/// Writes the parameters followed by the ablation flags.
pub fn save_policy(net: &PolicyNet, mut w: impl std::io::Write) -> Result<()> {
    let a = net.ablation;
    let flags = Tensor::from_vec(vec![f64::from(u8::from(a.use_f_u)), f64::from(u8::from(a.use_auxiliary)), f64::from(u8::from(a.use_cbam))]);
    let entries = net.params.iter().chain(std::iter::once((ABLATION_ENTRY, &flags)));
    w.write_all(&checkpoint::encode(entries))?;
    Ok(())
}

/// Rebuilds a policy from [`save_policy`] output. The stored flags must
/// match `ablation`.
pub fn load_policy(config: PolicyConfig, ablation: AblationConfig, r: impl std::io::Read) -> Result<PolicyNet> {
    let mut entries = checkpoint::read_entries(r)?;
    let (name, flags) = entries.pop().ok_or_else(|| Error::Parse("empty policy checkpoint".into()))?;
    if name != ABLATION_ENTRY || flags.numel() != 3 {
        return Err(Error::Parse("policy checkpoint lacks its ablation flags".into()));
    }
    let stored = AblationConfig {
        use_f_u: flags.data()[0] != 0.0,
        use_auxiliary: flags.data()[1] != 0.0,
        use_cbam: flags.data()[2] != 0.0,
    };
    if stored != ablation {
        return Err(Error::Config(format!("checkpoint was trained as `{stored}`, requested `{ablation}`")));
    }
    let mut net = PolicyNet::new(config, ablation, &mut crate::rng::seeded(0))?;
    net.params.load(entries)?;
    Ok(net)
}

#[derive(Debug, Clone, Copy)]
pub struct StepLoss {
    pub total: Var,
    pub cross_entropy: f64,
    /// Circular bearing error, reported even when it is not optimized.
    pub aux: f64,
}

pub fn action_probabilities(tape: &Tape, out: &PolicyOutputs) -> [f64; 4] {
    let lp = tape.value(out.log_probs);
    [lp[0].exp(), lp[1].exp(), lp[2].exp(), lp[3].exp()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Sample,
    Greedy,
}

impl FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(SelectMode::Sample),
            "greedy" => Ok(SelectMode::Greedy),
            _ => Err(Error::Parse(format!("unknown selection mode `{s}`"))),
        }
    }
}

/// Draws from `probs` (sample mode) or takes the first maximum (greedy).
pub fn select_action(probs: &[f64; 4], mode: SelectMode, rng: &mut Rng) -> Action {
    let idx = match mode {
        SelectMode::Greedy => {
            let mut best = 0;
            for i in 1..4 {
                if probs[i] > probs[best] {
                    best = i;
                }
            }
            best
        }
        SelectMode::Sample => {
            let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
            let mut acc = 0.0;
            let mut pick = 3;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            // never land on a zero-probability tail entry through rounding
            while probs[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        }
    };
    Action::from_index(idx).expect("index below 4")
}
