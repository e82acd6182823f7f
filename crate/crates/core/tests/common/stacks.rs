//! Finite-difference checks of every network stack on reduced sizes. Each
//! check returns the worst relative error over the probed parameters.
#![allow(dead_code)]

use navfield::extract::{spatial_encoder, uncertainty_encoder, Cbam, FEATURE_LEN};
use navfield::field::{nll_loss, FieldConfig, FieldNet};
use navfield::policy::{AblationConfig, PolicyConfig, PolicyInputs, PolicyNet};
use navfield::render::{sample_depths, tape_render_maps, tape_render_rays, DepthMode};
use navfield::rng::{self, Rng};
use navfield::tensor::{Binding, ParamSet, Tape, Var};
use navfield::world::{Action, AgentPose, Camera, Vec2};
use navfield::Result;
use rand::Rng as _;

pub const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;
/// Entries probed per parameter tensor.
const PROBES: usize = 6;

fn weighted_sum(tape: &mut Tape, v: Var, salt: f64) -> Result<Var> {
    let n = tape.value(v).len();
    let shape = tape.shape(v).to_vec();
    let w: Vec<f64> = (0..n).map(|i| 0.4 + 0.6 * ((i as f64) * 0.91 + salt).sin()).collect();
    let c = tape.constant(&shape, w)?;
    let p = tape.mul(v, c)?;
    tape.sum(p)
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

trait HasParams {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
}

impl HasParams for FieldNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl HasParams for PolicyNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl HasParams for ParamSet {
    fn params(&self) -> &ParamSet {
        self
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        self
    }
}

/// Compares analytic parameter gradients with central differences on a
/// random subset of entries of every tensor; returns the worst error.
fn check_params<M: HasParams>(model: &mut M, loss: impl Fn(&M, &mut Tape, &Binding) -> Result<Var>) -> f64 {
    let analytic = {
        let mut tape = Tape::new();
        let bind = model.params().bind(&mut tape);
        let l = loss(model, &mut tape, &bind).unwrap();
        let grads = tape.backward(l).unwrap();
        let ps = model.params_mut();
        ps.zero_grad();
        ps.accumulate(&bind, &grads).unwrap();
        ps.tensors().iter().map(|t| t.grad().unwrap().to_vec()).collect::<Vec<_>>()
    };
    let eval = |m: &M| {
        let mut tape = Tape::new();
        let bind = m.params().bind_frozen(&mut tape);
        let l = loss(m, &mut tape, &bind).unwrap();
        tape.item(l)
    };
    let mut pick = rng::seeded(11);
    let mut worst: f64 = 0.0;
    for ti in 0..model.params().len() {
        let n = model.params().tensors()[ti].numel();
        let idx: Vec<usize> = if n <= PROBES {
            (0..n).collect()
        } else {
            (0..PROBES).map(|_| pick.gen_range(0..n)).collect()
        };
        for j in idx {
            let orig = model.params().tensors()[ti].data()[j];
            model.params_mut().tensors_mut()[ti].data_mut()[j] = orig + STEP;
            let up = eval(model);
            model.params_mut().tensors_mut()[ti].data_mut()[j] = orig - STEP;
            let down = eval(model);
            model.params_mut().tensors_mut()[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let e = rel(analytic[ti][j], numeric);
            if e > TOL {
                eprintln!(
                    "{}[{j}]: analytic {} numeric {}",
                    model.params().names()[ti],
                    analytic[ti][j],
                    numeric
                );
            }
            worst = worst.max(e);
        }
    }
    worst
}

fn tiny_field(rng: &mut Rng) -> FieldNet {
    let cfg = FieldConfig {
        pos_freqs: 2,
        dir_freqs: 1,
        hidden: 6,
        feature_dim: 3,
        samples: 5,
        ..FieldConfig::default()
    };
    FieldNet::new(cfg, (6.0, 5.0), rng).unwrap()
}

pub fn field_and_ray_rendering() -> f64 {
    let mut r = rng::seeded(3);
    let mut net = tiny_field(&mut r);
    let rays = vec![(Vec2::new(1.3, 2.2), 0.4), (Vec2::new(4.1, 1.7), 2.9), (Vec2::new(2.5, 3.5), -1.2)];
    let mut dr = rng::seeded(4);
    let depths: Vec<Vec<f64>> = rays
        .iter()
        .map(|_| sample_depths(0.05, 7.0, 5, DepthMode::Stratified, Some(&mut dr)).unwrap())
        .collect();
    let gt = [0.2, 0.7, 0.1, 0.9, 0.3, 0.5, 0.4, 0.4, 0.8];
    let worst = check_params(&mut net, |n, tape, bind| {
        let out = tape_render_rays(tape, n, bind, &rays, &depths, 7.0)?;
        let g = tape.constant(&[3, 3], gt.to_vec())?;
        let nll = nll_loss(tape, out.color, out.loss_variance, g)?;
        let f = weighted_sum(tape, out.features, 0.3)?;
        let u = weighted_sum(tape, out.uncertainty, 1.1)?;
        let a = tape.add(nll, f)?;
        tape.add(a, u)
    });
    worst
}

pub fn field_maps_render() -> f64 {
    let mut r = rng::seeded(5);
    let mut net = tiny_field(&mut r);
    let cam = Camera::new(4, std::f64::consts::FRAC_PI_2, 7.0);
    let pose = AgentPose::new(2.2, 2.6, 0.7);
    let worst = check_params(&mut net, |n, tape, bind| {
        let maps = tape_render_maps(tape, n, bind, &pose, &cam)?;
        let u = weighted_sum(tape, maps.uncertainty, 0.2)?;
        let f = weighted_sum(tape, maps.features, 0.9)?;
        tape.add(u, f)
    });
    worst
}

fn map_input(r: &mut Rng, channels: usize, width: usize) -> Vec<f64> {
    (0..channels * width).map(|_| r.gen_range(0.05..1.0)).collect()
}

pub fn extractor_stacks() -> f64 {
    let mut all: f64 = 0.0;
    for use_cbam in [false, true] {
        let mut r = rng::seeded(7);
        let mut p = ParamSet::new();
        let unc = uncertainty_encoder(&mut p, 16, &mut r);
        let spa = spatial_encoder(&mut p, 2, 16, &mut r);
        let x_u = map_input(&mut r, 1, 16);
        let x_s = map_input(&mut r, 5, 16);
        let worst = check_params(&mut p, |_, tape, bind| {
            let xu = tape.constant(&[1, 16], x_u.clone())?;
            let xs = tape.constant(&[5, 16], x_s.clone())?;
            let a = unc.forward(tape, bind, xu, use_cbam)?;
            let b = spa.forward(tape, bind, xs, use_cbam)?;
            let la = weighted_sum(tape, a, 0.1)?;
            let lb = weighted_sum(tape, b, 0.7)?;
            tape.add(la, lb)
        });
        all = all.max(worst);
    }
    all
}

pub fn attention_block_alone() -> f64 {
    let mut r = rng::seeded(8);
    let mut p = ParamSet::new();
    let cbam = Cbam::new(&mut p, "cbam", 8, &mut r);
    let x = map_input(&mut r, 8, 6);
    let worst = check_params(&mut p, |_, tape, bind| {
        let v = tape.constant(&[8, 6], x.clone())?;
        let out = cbam.forward(tape, bind, v)?;
        weighted_sum(tape, out, 0.5)
    });
    worst
}

fn policy_inputs(tape: &mut Tape, r: &mut Rng, feature_dim: usize, width: usize) -> Result<PolicyInputs> {
    Ok(PolicyInputs {
        uncertainty: tape.constant(&[1, width], map_input(r, 1, width))?,
        features: tape.constant(&[feature_dim, width], map_input(r, feature_dim, width))?,
        target: tape.constant(&[3, width], map_input(r, 3, width))?,
        observation: tape.constant(&[4, width], map_input(r, 4, width))?,
    })
}

pub fn full_policy_loss() -> f64 {
    let mut all: f64 = 0.0;
    for ablation in [AblationConfig::FULL, "no-fu-cbam".parse().unwrap()] {
        let cfg = PolicyConfig {
            width: 16,
            feature_dim: 2,
            ..PolicyConfig::default()
        };
        let mut net = PolicyNet::new(cfg, ablation, &mut rng::seeded(9)).unwrap();
        let worst = check_params(&mut net, |n, tape, bind| {
            let inputs = policy_inputs(tape, &mut rng::seeded(10), 2, 16)?;
            let out = n.forward(tape, bind, &inputs)?;
            Ok(n.step_loss(tape, &out, Action::TurnLeft, 0.8)?.total)
        });
        all = all.max(worst);
    }
    all
}

pub fn fusion_inputs() -> f64 {
    let cfg = PolicyConfig {
        width: 16,
        feature_dim: 2,
        ..PolicyConfig::default()
    };
    let net = PolicyNet::new(cfg, AblationConfig::FULL, &mut rng::seeded(12)).unwrap();
    let mut r = rng::seeded(13);
    let feats: Vec<Vec<f64>> = (0..3).map(|_| (0..FEATURE_LEN).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let run = |fs: &[Vec<f64>], track: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let bind = net.params.bind_frozen(&mut tape);
        let vars: Vec<Var> = fs
            .iter()
            .map(|f| {
                if track {
                    tape.variable(&[1, FEATURE_LEN], f.clone())
                } else {
                    tape.constant(&[1, FEATURE_LEN], f.clone())
                }
                .unwrap()
            })
            .collect();
        let (out, _) = net.fuse(&mut tape, &bind, vars[0], vars[1], vars[2]).unwrap();
        let l = weighted_sum(&mut tape, out, 0.4).unwrap();
        let v = tape.item(l);
        if !track {
            return (v, Vec::new());
        }
        let g = tape.backward(l).unwrap();
        (v, vars.iter().map(|&x| g.get(x).unwrap().to_vec()).collect())
    };
    let (_, analytic) = run(&feats, true);
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        for j in (0..FEATURE_LEN).step_by(7) {
            let mut up = feats.clone();
            up[k][j] += STEP;
            let mut down = feats.clone();
            down[k][j] -= STEP;
            let numeric = (run(&up, false).0 - run(&down, false).0) / (2.0 * STEP);
            worst = worst.max(rel(analytic[k][j], numeric));
        }
    }
    worst
}

