//! Uncertainty-aware implicit radiance field over the 2D world.

mod buffer;
mod online;

pub use buffer::{add_observation, RayRecord, ReplayBuffer};
pub use online::{nll_loss, nll_loss_value, train_step, OnlineField};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Binding, Linear, ParamSet, Tape, Var};
use crate::world::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    /// Frequencies in the position encoding.
    pub pos_freqs: usize,
    /// Frequencies in the view-direction encoding.
    pub dir_freqs: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub samples: usize,
    pub near: f64,
    /// `None` puts the far bound at the scene diagonal.
    pub far: Option<f64>,
    pub beta_min: f64,
    /// Rays per optimizer step.
    pub batch: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            pos_freqs: 8,
            dir_freqs: 4,
            hidden: 64,
            feature_dim: 16,
            samples: 32,
            near: 0.05,
            far: None,
            beta_min: 0.01,
            batch: 64,
            lr: 1e-3,
            buffer_capacity: 50_000,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples < 2 {
            return bad(format!("samples per ray must be >= 2, got {}", self.samples));
        }
        if !(self.near >= 0.0) {
            return bad(format!("near must be >= 0, got {}", self.near));
        }
        if let Some(far) = self.far {
            if !(far > self.near) {
                return bad(format!("far {far} must exceed near {}", self.near));
            }
        }
        if !(self.beta_min > 0.0) {
            return bad(format!("beta_min must be positive, got {}", self.beta_min));
        }
        if self.hidden == 0 || self.feature_dim == 0 || self.batch == 0 || self.buffer_capacity == 0 {
            return bad("hidden, feature_dim, batch and buffer_capacity must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("field lr must be positive, got {}", self.lr));
        }
        Ok(())
    }

    pub fn far_for(&self, diagonal: f64) -> f64 {
        self.far.unwrap_or(diagonal)
    }

    pub fn pos_encoding_len(&self) -> usize {
        2 * (1 + 2 * self.pos_freqs)
    }

    pub fn dir_encoding_len(&self) -> usize {
        1 + 2 * self.dir_freqs
    }
}

/// Raw components followed by `sin(2^k pi v), cos(2^k pi v)` pairs,
/// component by component.
pub fn positional_encode(v: &[f64], freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() * (1 + 2 * freqs));
    for &x in v {
        out.push(x);
        let mut scale = PI;
        for _ in 0..freqs {
            out.push((scale * x).sin());
            out.push((scale * x).cos());
            scale *= 2.0;
        }
    }
    out
}

/// Per-point outputs of the field on a tape; all have `N` rows.
#[derive(Debug, Clone, Copy)]
pub struct FieldOutputs {
    pub sigma: Var,
    pub feature: Var,
    pub beta2: Var,
    /// Hidden representation of the color head, composited into the
    /// spatial feature map.
    pub color_feature: Var,
    pub color: Var,
}

/// Plain values of [`FieldOutputs`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValues {
    pub sigma: Vec<f64>,
    pub feature: Vec<f64>,
    pub beta2: Vec<f64>,
    pub color_feature: Vec<f64>,
    pub color: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FieldNet {
    pub config: FieldConfig,
    /// World extent `(width, height)` mapped onto `[-1, 1]^2`.
    pub extent: (f64, f64),
    pub params: ParamSet,
    trunk1: Linear,
    trunk2: Linear,
    density: Linear,
    feature: Linear,
    variance: Linear,
    color_hidden: Linear,
    color_out: Linear,
}

impl FieldNet {
    pub fn new(config: FieldConfig, extent: (f64, f64), rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let h = config.hidden;
        let df = config.feature_dim;
        let trunk1 = Linear::new(&mut p, "field.trunk1", config.pos_encoding_len(), h, rng);
        let trunk2 = Linear::new(&mut p, "field.trunk2", h, h, rng);
        let density = Linear::new(&mut p, "field.density", h, 1, rng);
        let feature = Linear::new(&mut p, "field.feature", h, df, rng);
        let variance = Linear::new(&mut p, "field.variance", h, 1, rng);
        let color_hidden = Linear::new(&mut p, "field.color_hidden", df + config.dir_encoding_len(), df, rng);
        let color_out = Linear::new(&mut p, "field.color_out", df, 3, rng);
        Ok(FieldNet { config, extent, params: p, trunk1, trunk2, density, feature, variance, color_hidden, color_out })
    }

    pub fn normalize(&self, p: Vec2) -> [f64; 2] {
        [2.0 * p.x / self.extent.0 - 1.0, 2.0 * p.y / self.extent.1 - 1.0]
    }

    /// Encoded inputs as `([N, pos_len], [N, dir_len])` row-major buffers.
    pub fn encode(&self, points: &[Vec2], angles: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(points.len() * self.config.pos_encoding_len());
        let mut ds = Vec::with_capacity(points.len() * self.config.dir_encoding_len());
        for (&p, &a) in points.iter().zip(angles) {
            xs.extend(positional_encode(&self.normalize(p), self.config.pos_freqs));
            ds.extend(positional_encode(&[crate::world::wrap_pi(a) / PI], self.config.dir_freqs));
        }
        (xs, ds)
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, points: &[Vec2], angles: &[f64]) -> Result<FieldOutputs> {
        if points.len() != angles.len() {
            return Err(crate::error::shape_err(
                "field",
                format!("{} points but {} directions", points.len(), angles.len()),
            ));
        }
        let n = points.len();
        let (xs, ds) = self.encode(points, angles);
        let x = tape.constant(&[n, self.config.pos_encoding_len()], xs)?;
        let d = tape.constant(&[n, self.config.dir_encoding_len()], ds)?;
        let h = self.trunk1.forward(tape, bind, x)?;
        let h = tape.relu(h)?;
        let h = self.trunk2.forward(tape, bind, h)?;
        let h = tape.relu(h)?;
        let s = self.density.forward(tape, bind, h)?;
        let sigma = tape.softplus(s)?;
        let feature = self.feature.forward(tape, bind, h)?;
        let v = self.variance.forward(tape, bind, h)?;
        let v = tape.softplus(v)?;
        let beta2 = tape.shift(v, self.config.beta_min)?;
        let cin = tape.concat(&[feature, d], 1)?;
        let c = self.color_hidden.forward(tape, bind, cin)?;
        let color_feature = tape.relu(c)?;
        let c = self.color_out.forward(tape, bind, color_feature)?;
        let color = tape.sigmoid(c)?;
        Ok(FieldOutputs { sigma, feature, beta2, color_feature, color })
    }

    /// Forward pass without gradient tracking; errors on non-finite output.
    pub fn evaluate(&self, points: &[Vec2], angles: &[f64]) -> Result<FieldValues> {
        let mut tape = Tape::new();
        let bind = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &bind, points, angles)?;
        let values = FieldValues {
            sigma: tape.value(out.sigma).to_vec(),
            feature: tape.value(out.feature).to_vec(),
            beta2: tape.value(out.beta2).to_vec(),
            color_feature: tape.value(out.color_feature).to_vec(),
            color: tape.value(out.color).to_vec(),
        };
        for (what, vals) in [
            ("sigma", &values.sigma),
            ("feature", &values.feature),
            ("beta2", &values.beta2),
            ("color", &values.color),
        ] {
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index: i });
            }
        }
        Ok(values)
    }
}
