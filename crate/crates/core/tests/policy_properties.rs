use navfield::extract::FEATURE_LEN;
use navfield::field::{FieldConfig, FieldNet};
use navfield::policy::{action_probabilities, PolicyConfig, PolicyInputs, PolicyNet};
use navfield::render::tape_render_maps;
use navfield::rng::{self, Rng};
use navfield::tensor::Tape;
use navfield::world::{Action, AgentPose, Camera};
use proptest::prelude::*;
use rand::Rng as _;

const WIDTH: usize = 16;
const FEATURES: usize = 2;

fn config() -> PolicyConfig {
    PolicyConfig { width: WIDTH, feature_dim: FEATURES, ..PolicyConfig::default() }
}

fn net(ablation: &str, seed: u64) -> PolicyNet {
    PolicyNet::new(config(), ablation.parse().unwrap(), &mut rng::seeded(seed)).unwrap()
}

struct Values {
    uncertainty: Vec<f64>,
    features: Vec<f64>,
    target: Vec<f64>,
    observation: Vec<f64>,
}

fn values(r: &mut Rng) -> Values {
    let mut draw = |n: usize| (0..n).map(|_| r.gen_range(0.0..1.0)).collect::<Vec<f64>>();
    Values {
        uncertainty: draw(WIDTH),
        features: draw(FEATURES * WIDTH),
        target: draw(3 * WIDTH),
        observation: draw(4 * WIDTH),
    }
}

fn inputs(tape: &mut Tape, v: &Values) -> PolicyInputs {
    PolicyInputs {
        uncertainty: tape.constant(&[1, WIDTH], v.uncertainty.clone()).unwrap(),
        features: tape.constant(&[FEATURES, WIDTH], v.features.clone()).unwrap(),
        target: tape.constant(&[3, WIDTH], v.target.clone()).unwrap(),
        observation: tape.constant(&[4, WIDTH], v.observation.clone()).unwrap(),
    }
}

fn probabilities(net: &PolicyNet, v: &Values) -> [f64; 4] {
    let mut tape = Tape::new();
    let bind = net.params.bind_frozen(&mut tape);
    let i = inputs(&mut tape, v);
    let out = net.forward(&mut tape, &bind, &i).unwrap();
    action_probabilities(&tape, &out)
}

fn zero(net: &mut PolicyNet, name: &str) {
    let id = net.params.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    net.params.get_mut(id).data_mut().fill(0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn uncertainty_is_ignored_without_its_branch(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let n = net("no-fu", 5);
        let base = values(&mut rng::seeded(seed));
        let mut changed = values(&mut rng::seeded(seed));
        let mut r = rng::seeded(seed + 1);
        changed.uncertainty = (0..WIDTH).map(|_| scale * r.gen_range(-1.0..1.0)).collect();
        let a = probabilities(&n, &base);
        let b = probabilities(&n, &changed);
        prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn distributions_are_valid(seed in 0u64..1000) {
        let n = net("full", seed % 7);
        let p = probabilities(&n, &values(&mut rng::seeded(seed)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn uncertainty_changes_the_full_model() {
    let n = net("full", 5);
    let base = values(&mut rng::seeded(1));
    let mut changed = values(&mut rng::seeded(1));
    changed.uncertainty.iter_mut().for_each(|u| *u *= 3.0);
    assert_ne!(probabilities(&n, &base), probabilities(&n, &changed));
}

#[test]
fn zero_attention_weights_halve_the_features() {
    let mut n = net("full", 3);
    zero(&mut n, "fuse.attention.weight");
    zero(&mut n, "fuse.attention.bias");
    let mut tape = Tape::new();
    let bind = n.params.bind_frozen(&mut tape);
    let mut r = rng::seeded(4);
    let feats: Vec<Vec<f64>> = (0..3).map(|_| (0..FEATURE_LEN).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let vars: Vec<_> = feats.iter().map(|f| tape.constant(&[1, FEATURE_LEN], f.clone()).unwrap()).collect();
    let (out, w) = n.fuse(&mut tape, &bind, vars[0], vars[1], vars[2]).unwrap();
    assert!(tape.value(w).iter().all(|&x| x == 0.5));

    // Independent evaluation of relu(0.5 * cat @ W + b).
    let cat: Vec<f64> = feats.concat();
    let weight = n.params.get(n.fuse_mlp.weight).data();
    let bias = n.params.get(n.fuse_mlp.bias).data();
    for (j, got) in tape.value(out).iter().enumerate() {
        let mut acc = bias[j];
        for (i, c) in cat.iter().enumerate() {
            acc += 0.5 * c * weight[i * FEATURE_LEN + j];
        }
        assert!((got - acc.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn loss_examples() {
    let mut n = net("full", 6);
    zero(&mut n, "action.weight");
    zero(&mut n, "action.bias");
    let v = values(&mut rng::seeded(2));
    let mut tape = Tape::new();
    let bind = n.params.bind_frozen(&mut tape);
    let i = inputs(&mut tape, &v);
    let out = n.forward(&mut tape, &bind, &i).unwrap();
    assert_eq!(action_probabilities(&tape, &out), [0.25; 4]);
    let predicted = tape.item(out.angle);
    let loss = n.step_loss(&mut tape, &out, Action::TurnRight, predicted).unwrap();
    assert!((loss.cross_entropy - 4f64.ln()).abs() < 1e-12);
    assert!(loss.aux.abs() < 1e-12);

    // All mass on the expert action and an exact bearing give zero loss.
    let id = n.params.find("action.bias").unwrap();
    n.params.get_mut(id).data_mut()[Action::Forward.index()] = 800.0;
    let mut tape = Tape::new();
    let bind = n.params.bind_frozen(&mut tape);
    let i = inputs(&mut tape, &v);
    let out = n.forward(&mut tape, &bind, &i).unwrap();
    let bearing = tape.item(out.angle);
    let loss = n.step_loss(&mut tape, &out, Action::Forward, bearing).unwrap();
    assert_eq!(tape.item(loss.total), 0.0);
}

fn grads(n: &mut PolicyNet, v: &Values, expert: Action, bearing: f64) {
    let mut tape = Tape::new();
    let bind = n.params.bind(&mut tape);
    let i = inputs(&mut tape, v);
    let out = n.forward(&mut tape, &bind, &i).unwrap();
    let loss = n.step_loss(&mut tape, &out, expert, bearing).unwrap();
    let g = tape.backward(loss.total).unwrap();
    n.params.zero_grad();
    n.params.accumulate(&bind, &g).unwrap();
}

fn grad_norm(n: &PolicyNet, prefix: &str) -> f64 {
    n.params
        .iter()
        .filter(|(name, _)| name.starts_with(prefix))
        .flat_map(|(_, t)| t.grad().unwrap().iter().map(|g| g * g).collect::<Vec<_>>())
        .sum::<f64>()
        .sqrt()
}

#[test]
fn auxiliary_head_gradient_follows_the_flag() {
    let v = values(&mut rng::seeded(8));
    let mut with = net("full", 9);
    grads(&mut with, &v, Action::TurnLeft, 2.0);
    assert!(grad_norm(&with, "angle.") > 0.0);
    assert!(grad_norm(&with, "fuse.") > 0.0);

    let mut without = net("no-at", 9);
    grads(&mut without, &v, Action::TurnLeft, 2.0);
    assert_eq!(grad_norm(&without, "angle."), 0.0);
    assert!(grad_norm(&without, "fuse.") > 0.0);
}

#[test]
fn depth_changes_the_perception_feature() {
    for seed in 0..10 {
        let n = net("full", seed);
        let v = values(&mut rng::seeded(100 + seed));
        let mut deeper = v.observation.clone();
        for d in &mut deeper[3 * WIDTH..] {
            *d = (*d + 0.37) % 1.0;
        }
        let f_p = |obs: &[f64]| {
            let mut tape = Tape::new();
            let bind = n.params.bind_frozen(&mut tape);
            let x = tape.constant(&[4, WIDTH], obs.to_vec()).unwrap();
            let out = n.perception.forward(&mut tape, &bind, x).unwrap();
            assert_eq!(tape.shape(out), [1, FEATURE_LEN]);
            tape.value(out).to_vec()
        };
        assert_ne!(f_p(&v.observation), f_p(&deeper), "seed {seed}");
    }
}

#[test]
fn loss_reaches_field_parameters_through_rendered_maps() {
    let cfg = FieldConfig { pos_freqs: 2, dir_freqs: 1, hidden: 8, feature_dim: FEATURES, samples: 6, ..FieldConfig::default() };
    let mut field = FieldNet::new(cfg, (6.0, 6.0), &mut rng::seeded(1)).unwrap();
    let n = net("full", 2);
    let v = values(&mut rng::seeded(3));
    let cam = Camera::new(WIDTH, std::f64::consts::FRAC_PI_2, 8.0);
    let mut tape = Tape::new();
    let field_bind = field.params.bind(&mut tape);
    let policy_bind = n.params.bind_frozen(&mut tape);
    let maps = tape_render_maps(&mut tape, &field, &field_bind, &AgentPose::new(3.0, 3.0, 0.4), &cam).unwrap();
    let i = PolicyInputs {
        uncertainty: maps.uncertainty,
        features: maps.features,
        target: tape.constant(&[3, WIDTH], v.target.clone()).unwrap(),
        observation: tape.constant(&[4, WIDTH], v.observation.clone()).unwrap(),
    };
    let out = n.forward(&mut tape, &policy_bind, &i).unwrap();
    let loss = n.step_loss(&mut tape, &out, Action::TurnLeft, 1.0).unwrap();
    let g = tape.backward(loss.total).unwrap();
    field.params.zero_grad();
    field.params.accumulate(&field_bind, &g).unwrap();
    let total: f64 = field.params.tensors().iter().flat_map(|t| t.grad().unwrap().to_vec()).map(f64::abs).sum();
    assert!(total > 0.0);
}

#[test]
fn policy_fits_a_fixed_batch() {
    use navfield::tensor::{adam_step, AdamConfig, OptimizerState};
    let mut n = net("full", 21);
    let batch: Vec<(Values, Action, f64)> = (0..8)
        .map(|i| (values(&mut rng::seeded(300 + i)), Action::from_index(i as usize % 4).unwrap(), 0.4 * i as f64 - 1.5))
        .collect();
    let mut opt = OptimizerState::new(&n.params, AdamConfig::default());
    let mut losses = Vec::new();
    for _ in 0..150 {
        let mut tape = Tape::new();
        let bind = n.params.bind(&mut tape);
        let mut total = None;
        let mut ce = 0.0;
        for (v, a, bearing) in &batch {
            let i = inputs(&mut tape, v);
            let out = n.forward(&mut tape, &bind, &i).unwrap();
            let l = n.step_loss(&mut tape, &out, *a, *bearing).unwrap();
            ce += l.cross_entropy / batch.len() as f64;
            total = Some(match total {
                None => l.total,
                Some(t) => tape.add(t, l.total).unwrap(),
            });
        }
        let g = tape.backward(total.unwrap()).unwrap();
        n.params.zero_grad();
        n.params.accumulate(&bind, &g).unwrap();
        adam_step(&mut n.params, &mut opt).unwrap();
        losses.push(ce);
    }
    assert!(losses[0] > 1.0, "{}", losses[0]);
    assert!(*losses.last().unwrap() < 0.1, "{losses:?}");
}
