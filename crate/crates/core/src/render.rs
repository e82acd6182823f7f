//! Quadrature along rays: compositing weights, rendered color, the
//! uncertainty composites and the spatial feature map.
//!
//! Plain `f64` functions work on one ray; the `tape_*` variants work on a
//! batch of rays on an autodiff tape.

use rand::Rng as _;

use crate::error::{shape_err, Error, Result};
use crate::field::FieldNet;
use crate::rng::Rng;
use crate::tensor::{Binding, Tape, Var};
use crate::world::{AgentPose, Camera, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMode {
    /// Bin centers.
    Midpoint,
    /// One uniform draw inside each bin.
    Stratified,
}

pub fn sample_depths(near: f64, far: f64, n: usize, mode: DepthMode, rng: Option<&mut Rng>) -> Result<Vec<f64>> {
    if !(near < far) || n < 2 {
        return Err(Error::Contract(format!("need near < far and n >= 2, got {near}, {far}, {n}")));
    }
    let bin = (far - near) / n as f64;
    match (mode, rng) {
        (DepthMode::Midpoint, _) => Ok((0..n).map(|i| near + (i as f64 + 0.5) * bin).collect()),
        (DepthMode::Stratified, Some(rng)) => {
            Ok((0..n).map(|i| near + (i as f64 + rng.gen::<f64>().clamp(1e-9, 1.0 - 1e-9)) * bin).collect())
        }
        (DepthMode::Stratified, None) => Err(Error::Contract("stratified sampling needs an rng".into())),
    }
}

/// Gaps between consecutive depths; the last sample extends to `far`.
pub fn deltas(depths: &[f64], far: f64) -> Vec<f64> {
    let mut d: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = depths.last() {
        d.push(far - last);
    }
    d
}

/// `alpha_i = T_i (1 - exp(-sigma_i delta_i))` with transmittance
/// `T_i = exp(-sum_{j<i} sigma_j delta_j)`.
pub fn compute_alphas(sigma: &[f64], deltas: &[f64]) -> Vec<f64> {
    let mut acc = 0.0f64;
    sigma
        .iter()
        .zip(deltas)
        .map(|(&s, &d)| {
            let sd = s * d;
            let a = (-acc).exp() * -(-sd).exp_m1();
            acc += sd;
            a
        })
        .collect()
}

pub fn render_color(alphas: &[f64], colors: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (&a, col) in alphas.iter().zip(colors) {
        for k in 0..3 {
            c[k] += a * col[k];
        }
    }
    c
}

/// Linear composite of per-sample variance (the uncertainty map pixel).
pub fn render_uncertainty(alphas: &[f64], beta2: &[f64]) -> f64 {
    alphas.iter().zip(beta2).map(|(a, b)| a * b).sum()
}

/// Squared-weight composite used as the per-ray variance of the loss.
pub fn render_loss_variance(alphas: &[f64], beta2: &[f64], beta_min: f64) -> f64 {
    alphas.iter().zip(beta2).map(|(a, b)| a * a * b).sum::<f64>().max(beta_min)
}

/// Weighted sum of per-sample feature vectors, each of length `dim`.
pub fn render_feature(alphas: &[f64], features: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (a, f) in alphas.iter().zip(features.chunks(dim)) {
        for (o, v) in out.iter_mut().zip(f) {
            *o += a * v;
        }
    }
    out
}

/// Samples along one ray together with the field's outputs at them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRay {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub sigma: Vec<f64>,
    pub beta2: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    /// Per-sample color-head features, `depths.len() x feature_dim`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
}

impl SampledRay {
    pub fn alphas(&self) -> Vec<f64> {
        compute_alphas(&self.sigma, &self.deltas)
    }

    pub fn color(&self) -> [f64; 3] {
        render_color(&self.alphas(), &self.colors)
    }

    pub fn uncertainty(&self) -> f64 {
        render_uncertainty(&self.alphas(), &self.beta2)
    }

    pub fn loss_variance(&self, beta_min: f64) -> f64 {
        render_loss_variance(&self.alphas(), &self.beta2, beta_min)
    }

    pub fn spatial_feature(&self) -> Vec<f64> {
        render_feature(&self.alphas(), &self.features, self.feature_dim)
    }

    pub fn depth_proxy(&self) -> f64 {
        self.alphas().iter().zip(&self.depths).map(|(a, t)| a * t).sum()
    }
}

/// Rendered strip maps at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps {
    pub color: Vec<[f64; 3]>,
    /// Uncertainty map, one value per column.
    pub uncertainty: Vec<f64>,
    /// Spatial feature map, channel-major `[feature_dim, W]`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub depth: Vec<f64>,
}

impl Maps {
    pub fn width(&self) -> usize {
        self.uncertainty.len()
    }
}

/// Points and view angles for `rays x depths` samples, ray-major.
fn sample_points(rays: &[(Vec2, f64)], depths: &[Vec<f64>]) -> (Vec<Vec2>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut angles = Vec::new();
    for (&(o, a), ts) in rays.iter().zip(depths) {
        let d = Vec2::from_angle(a);
        for &t in ts {
            pts.push(o + d * t);
            angles.push(a);
        }
    }
    (pts, angles)
}

/// Samples the field along every ray of a strip and composites the maps.
pub fn render_maps(net: &FieldNet, pose: &AgentPose, camera: &Camera) -> Result<Maps> {
    let cfg = &net.config;
    let far = cfg.far_for(camera.far);
    let depths = sample_depths(cfg.near, far, cfg.samples, DepthMode::Midpoint, None)?;
    let dl = deltas(&depths, far);
    let rays: Vec<(Vec2, f64)> = camera.angles(pose.theta).into_iter().map(|a| (pose.position, a)).collect();
    let all_depths = vec![depths.clone(); rays.len()];
    let (pts, angles) = sample_points(&rays, &all_depths);
    let v = net.evaluate(&pts, &angles)?;
    let n = cfg.samples;
    let df = cfg.feature_dim;
    let w = rays.len();
    let mut maps = Maps {
        color: Vec::with_capacity(w),
        uncertainty: Vec::with_capacity(w),
        features: vec![0.0; df * w],
        feature_dim: df,
        depth: Vec::with_capacity(w),
    };
    for r in 0..w {
        let ray = SampledRay {
            depths: depths.clone(),
            deltas: dl.clone(),
            sigma: v.sigma[r * n..(r + 1) * n].to_vec(),
            beta2: v.beta2[r * n..(r + 1) * n].to_vec(),
            colors: v.color[r * n * 3..(r + 1) * n * 3].chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            features: v.color_feature[r * n * df..(r + 1) * n * df].to_vec(),
            feature_dim: df,
        };
        let alphas = ray.alphas();
        maps.color.push(render_color(&alphas, &ray.colors));
        maps.uncertainty.push(render_uncertainty(&alphas, &ray.beta2));
        for (k, f) in render_feature(&alphas, &ray.features, df).into_iter().enumerate() {
            maps.features[k * w + r] = f;
        }
        maps.depth.push(ray.depth_proxy());
    }
    Ok(maps)
}

/// Compositing weights for `[R, N]` densities and constant deltas.
pub fn tape_alphas(tape: &mut Tape, sigma: Var, deltas: Var) -> Result<Var> {
    let shape = tape.shape(deltas).to_vec();
    if shape.len() != 2 {
        return Err(shape_err("alphas", format!("deltas must be [R, N], got {shape:?}")));
    }
    let s = tape.reshape(sigma, &shape)?;
    let sd = tape.mul(s, deltas)?;
    let acc = tape.cumsum_exclusive(sd)?;
    let neg_acc = tape.scale(acc, -1.0)?;
    let trans = tape.exp(neg_acc)?;
    let neg_sd = tape.scale(sd, -1.0)?;
    let e = tape.exp(neg_sd)?;
    let e = tape.scale(e, -1.0)?;
    let opacity = tape.shift(e, 1.0)?;
    tape.mul(trans, opacity)
}

/// `sum_i w[r, i] * values[r * N + i, :]` for weights `[R, N]`; returns `[R, K]`.
pub fn tape_composite(tape: &mut Tape, weights: Var, values: Var) -> Result<Var> {
    let ws = tape.shape(weights).to_vec();
    let vs = tape.shape(values).to_vec();
    if ws.len() != 2 || vs.len() != 2 || vs[0] != ws[0] * ws[1] {
        return Err(shape_err("composite", format!("weights {ws:?} with values {vs:?}")));
    }
    let v = tape.reshape(values, &[ws[0], ws[1], vs[1]])?;
    let w = tape.reshape(weights, &[ws[0], ws[1], 1])?;
    let p = tape.mul(v, w)?;
    tape.sum_axis(p, 1)
}

/// Tape-side render products for a batch of rays.
#[derive(Debug, Clone, Copy)]
pub struct RayBatchVars {
    pub alphas: Var,
    /// `[R, 3]`.
    pub color: Var,
    /// `[R, 1]`, linear weights.
    pub uncertainty: Var,
    /// `[R, 1]`, squared weights, floored at `beta_min`.
    pub loss_variance: Var,
    /// `[R, feature_dim]`.
    pub features: Var,
}

/// Evaluates the field along `rays` (origin, angle) at the given depths
/// and composites every map on the tape.
pub fn tape_render_rays(
    tape: &mut Tape,
    net: &FieldNet,
    bind: &Binding,
    rays: &[(Vec2, f64)],
    depths: &[Vec<f64>],
    far: f64,
) -> Result<RayBatchVars> {
    let r = rays.len();
    let n = net.config.samples;
    if depths.len() != r || depths.iter().any(|d| d.len() != n) {
        return Err(shape_err("render", format!("need {r} depth lists of {n} samples")));
    }
    let (pts, angles) = sample_points(rays, depths);
    let out = net.forward(tape, bind, &pts, &angles)?;
    let dl: Vec<f64> = depths.iter().flat_map(|d| deltas(d, far)).collect();
    let dv = tape.constant(&[r, n], dl)?;
    let alphas = tape_alphas(tape, out.sigma, dv)?;
    let color = tape_composite(tape, alphas, out.color)?;
    let uncertainty = tape_composite(tape, alphas, out.beta2)?;
    let a2 = tape.square(alphas)?;
    let var = tape_composite(tape, a2, out.beta2)?;
    let loss_variance = tape.clamp_min(var, net.config.beta_min)?;
    let features = tape_composite(tape, alphas, out.color_feature)?;
    Ok(RayBatchVars { alphas, color, uncertainty, loss_variance, features })
}

/// Strip maps on the tape: uncertainty `[1, W]` and features `[D_f, W]`.
#[derive(Debug, Clone, Copy)]
pub struct MapVars {
    pub uncertainty: Var,
    pub features: Var,
    pub color: Var,
}

pub fn tape_render_maps(
    tape: &mut Tape,
    net: &FieldNet,
    bind: &Binding,
    pose: &AgentPose,
    camera: &Camera,
) -> Result<MapVars> {
    let cfg = &net.config;
    let far = cfg.far_for(camera.far);
    let depths = sample_depths(cfg.near, far, cfg.samples, DepthMode::Midpoint, None)?;
    let rays: Vec<(Vec2, f64)> = camera.angles(pose.theta).into_iter().map(|a| (pose.position, a)).collect();
    let all = vec![depths; rays.len()];
    let b = tape_render_rays(tape, net, bind, &rays, &all, far)?;
    let u = tape.reshape(b.uncertainty, &[1, rays.len()])?;
    let f = tape.transpose(b.features)?;
    Ok(MapVars { uncertainty: u, features: f, color: b.color })
}
