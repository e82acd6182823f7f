//! Feature extraction from the rendered maps: residual compression, channel
//! and spatial attention, the exploration and exploitation features, the
//! target-bearing head and input-gradient saliency.

use std::f64::consts::{PI, TAU};

use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::tensor::{Binding, Conv1d, Linear, ParamSet, Tape, Var};
use crate::world::wrap_pi;

/// Length of every extracted feature vector.
pub const FEATURE_LEN: usize = 64;

/// `relu(conv(relu(conv_s4(x))) + proj_s4(x))`; shrinks length by 4.
#[derive(Debug, Clone, Copy)]
pub struct ResidualBlock {
    pub down: Conv1d,
    pub refine: Conv1d,
    pub skip: Conv1d,
}

impl ResidualBlock {
    pub fn new(p: &mut ParamSet, name: &str, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        ResidualBlock {
            down: Conv1d::new(p, &format!("{name}.down"), cin, cout, 3, 4, 1, rng),
            refine: Conv1d::new(p, &format!("{name}.refine"), cout, cout, 3, 1, 1, rng),
            skip: Conv1d::new(p, &format!("{name}.skip"), cin, cout, 1, 4, 0, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        let h = self.down.forward(tape, bind, x)?;
        let h = tape.relu(h)?;
        let h = self.refine.forward(tape, bind, h)?;
        let s = self.skip.forward(tape, bind, x)?;
        let y = tape.add(h, s)?;
        tape.relu(y)
    }
}

/// Two cascaded residual blocks; `[C_in, L] -> [C_out, L / 16]`.
#[derive(Debug, Clone, Copy)]
pub struct ResidualStack {
    pub blocks: [ResidualBlock; 2],
}

impl ResidualStack {
    pub fn new(p: &mut ParamSet, name: &str, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let a = ResidualBlock::new(p, &format!("{name}.0"), cin, cout, rng);
        let b = ResidualBlock::new(p, &format!("{name}.1"), cout, cout, rng);
        ResidualStack { blocks: [a, b] }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        let len = tape.shape(x).get(1).copied().unwrap_or(0);
        if tape.shape(x).len() != 2 || len == 0 || len % 16 != 0 {
            return Err(shape_err("residual", format!("input {:?} needs a length divisible by 16", tape.shape(x))));
        }
        let h = self.blocks[0].forward(tape, bind, x)?;
        self.blocks[1].forward(tape, bind, h)
    }
}

/// Channel weights from a perceptron shared between the average- and
/// max-pooled descriptors; `[C, L] -> [C, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelAttention {
    pub squeeze: Linear,
    pub expand: Linear,
}

impl ChannelAttention {
    pub fn new(p: &mut ParamSet, name: &str, channels: usize, rng: &mut Rng) -> Self {
        let mid = (channels / 4).max(1);
        ChannelAttention {
            squeeze: Linear::new(p, &format!("{name}.squeeze"), channels, mid, rng),
            expand: Linear::new(p, &format!("{name}.expand"), mid, channels, rng),
        }
    }

    fn mlp(&self, tape: &mut Tape, bind: &Binding, v: Var) -> Result<Var> {
        let row = tape.transpose(v)?;
        let h = self.squeeze.forward(tape, bind, row)?;
        let h = tape.relu(h)?;
        self.expand.forward(tape, bind, h)
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, f: Var) -> Result<Var> {
        let avg = tape.avg_pool(f, 1)?;
        let max = tape.max_pool(f, 1)?;
        let a = self.mlp(tape, bind, avg)?;
        let m = self.mlp(tape, bind, max)?;
        let s = tape.add(a, m)?;
        let w = tape.sigmoid(s)?;
        tape.transpose(w)
    }
}

/// Position weights from a convolution over the channel-pooled
/// `[avg, max]` maps; `[C, L] -> [1, L]`.
#[derive(Debug, Clone, Copy)]
pub struct SpatialAttention {
    pub conv: Conv1d,
}

impl SpatialAttention {
    pub fn new(p: &mut ParamSet, name: &str, rng: &mut Rng) -> Self {
        SpatialAttention { conv: Conv1d::new(p, &format!("{name}.conv"), 2, 1, 7, 1, 3, rng) }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, f: Var) -> Result<Var> {
        let avg = tape.avg_pool(f, 0)?;
        let max = tape.max_pool(f, 0)?;
        let both = tape.concat(&[avg, max], 0)?;
        let s = self.conv.forward(tape, bind, both)?;
        tape.sigmoid(s)
    }
}

/// Channel attention followed by spatial attention on the refined map.
#[derive(Debug, Clone, Copy)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

impl Cbam {
    pub fn new(p: &mut ParamSet, name: &str, channels: usize, rng: &mut Rng) -> Self {
        Cbam {
            channel: ChannelAttention::new(p, &format!("{name}.channel"), channels, rng),
            spatial: SpatialAttention::new(p, &format!("{name}.spatial"), rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, f: Var) -> Result<Var> {
        let mc = self.channel.forward(tape, bind, f)?;
        let refined = tape.mul(mc, f)?;
        let ms = self.spatial.forward(tape, bind, refined)?;
        tape.mul(ms, refined)
    }
}

/// Residual compression, optional attention, flatten, linear to 64.
#[derive(Debug, Clone, Copy)]
pub struct MapEncoder {
    pub stack: ResidualStack,
    pub cbam: Cbam,
    pub head: Linear,
    pub in_channels: usize,
    pub width: usize,
}

impl MapEncoder {
    pub fn new(p: &mut ParamSet, name: &str, cin: usize, cout: usize, width: usize, rng: &mut Rng) -> Self {
        MapEncoder {
            stack: ResidualStack::new(p, &format!("{name}.res"), cin, cout, rng),
            cbam: Cbam::new(p, &format!("{name}.cbam"), cout, rng),
            head: Linear::new(p, &format!("{name}.head"), cout * (width / 16), FEATURE_LEN, rng),
            in_channels: cin,
            width,
        }
    }

    /// `[C_in, W] -> [1, 64]`.
    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var, use_cbam: bool) -> Result<Var> {
        if tape.shape(x) != [self.in_channels, self.width] {
            return Err(shape_err(
                "extract",
                format!("expected [{}, {}], got {:?}", self.in_channels, self.width, tape.shape(x)),
            ));
        }
        let f = self.stack.forward(tape, bind, x)?;
        let f = if use_cbam { self.cbam.forward(tape, bind, f)? } else { f };
        let n = tape.shape(f).iter().product();
        let flat = tape.reshape(f, &[1, n])?;
        self.head.forward(tape, bind, flat)
    }
}

/// Exploration feature from the `[1, W]` uncertainty map.
pub fn uncertainty_encoder(p: &mut ParamSet, width: usize, rng: &mut Rng) -> MapEncoder {
    MapEncoder::new(p, "uncertainty", 1, 16, width, rng)
}

/// Exploitation feature from the spatial feature map stacked with the
/// target image, `[D_f + 3, W]`.
pub fn spatial_encoder(p: &mut ParamSet, feature_dim: usize, width: usize, rng: &mut Rng) -> MapEncoder {
    MapEncoder::new(p, "spatial", feature_dim + 3, 32, width, rng)
}

/// Regresses the bearing of the target relative to the heading.
#[derive(Debug, Clone, Copy)]
pub struct AngleHead {
    pub hidden: Linear,
    pub out: Linear,
}

impl AngleHead {
    pub fn new(p: &mut ParamSet, rng: &mut Rng) -> Self {
        AngleHead {
            hidden: Linear::new(p, "angle.hidden", FEATURE_LEN, 32, rng),
            out: Linear::new(p, "angle.out", 32, 1, rng),
        }
    }

    /// `[1, 64] -> [1, 1]`, wrapped into `(-pi, pi]`.
    pub fn forward(&self, tape: &mut Tape, bind: &Binding, f_cog: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, bind, f_cog)?;
        let h = tape.relu(h)?;
        let raw = self.out.forward(tape, bind, h)?;
        let v = tape.item(raw);
        tape.shift(raw, wrap_pi(v) - v)
    }
}

/// `min_k |pred - target + 2 pi k|`, `k` in `{-1, 0, 1}`.
pub fn circular_l1_value(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    [-TAU, 0.0, TAU].iter().map(|k| (d + k).abs()).fold(f64::INFINITY, f64::min)
}

/// Tape form of [`circular_l1_value`] for a `[1, 1]` prediction.
pub fn circular_l1(tape: &mut Tape, pred: Var, target: f64) -> Result<Var> {
    let d = tape.item(pred) - target;
    let k = [-TAU, 0.0, TAU]
        .into_iter()
        .min_by(|a, b| (d + a).abs().total_cmp(&(d + b).abs()))
        .expect("three candidates");
    let shifted = tape.shift(pred, k - target)?;
    let a = tape.abs(shifted)?;
    tape.sum(a)
}

/// Absolute input gradient normalized by its maximum; all zeros when no
/// gradient reached the input.
pub fn saliency(gradient: Option<&[f64]>, width: usize) -> Vec<f64> {
    let Some(g) = gradient else { return vec![0.0; width] };
    let abs: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        abs.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; width]
    }
}

/// Largest possible circular error.
pub const MAX_ANGLE_ERROR: f64 = PI;
