mod common;

use common::{grad_check, random_tensor};
use navfield::tensor::{adam_step, AdamConfig, Linear, OptimizerState, ParamSet, Primitive, Tape, Tensor};
use navfield::{rng, Error};

const TOL: f64 = 1e-4;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Weighted sum of every output entry so each element gets a distinct
/// upstream gradient.
fn weighted_sum(tape: &mut Tape, v: navfield::tensor::Var) -> navfield::Result<navfield::tensor::Var> {
    let n = tape.value(v).len();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * ((i as f64) * 1.37).sin()).collect();
    let shape = tape.shape(v).to_vec();
    let c = tape.constant(&shape, w)?;
    let p = tape.mul(v, c)?;
    tape.sum(p)
}

#[test]
fn examples_from_hand_arithmetic() {
    let mut tape = Tape::new();
    let a = tape.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = tape.constant(&[2, 1], vec![1.0, 1.0]).unwrap();
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &[3.0, 7.0]);
    assert_eq!(tape.shape(c), &[2, 1]);

    let x = tape.constant(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r), &[0.0, 0.0, 2.0]);

    let z = tape.constant(&[2], vec![0.0, 0.0]).unwrap();
    let s = tape.softmax(z).unwrap();
    assert_eq!(tape.value(s), &[0.5, 0.5]);
}

#[test]
fn analytic_derivative_examples() {
    let mut tape = Tape::new();
    let x = tape.variable(&[], vec![3.0]).unwrap();
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap(), &[6.0]);

    let mut tape = Tape::new();
    let x = tape.variable(&[], vec![0.0]).unwrap();
    let y = tape.sigmoid(x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap(), &[0.25]);
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.variable(&[2], vec![1.0, 2.0]).unwrap();
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));

    let mut other = Tape::new();
    let y = other.variable(&[], vec![1.0]).unwrap();
    assert!(matches!(tape.backward(y), Err(Error::Graph(_))));
    assert!(matches!(tape.relu(y), Err(Error::Graph(_))));
}

#[test]
fn shape_and_kind_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = tape.constant(&[2, 3], vec![0.0; 6]).unwrap();
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    let c = tape.constant(&[4], vec![0.0; 4]).unwrap();
    assert!(matches!(tape.add(a, c), Err(Error::Shape { .. })));
    assert!(matches!(tape.sum_axis(a, 2), Err(Error::Shape { .. })));
    let w = tape.constant(&[1, 2, 3], vec![0.0; 6]).unwrap();
    assert!(matches!(tape.conv1d(a, w, None, 0, 0), Err(Error::Shape { .. })));
    assert!(matches!("fft".parse::<Primitive>(), Err(Error::UnsupportedPrimitive(_))));
    assert_eq!("conv1d:stride=4,padding=1".parse::<Primitive>().unwrap(), Primitive::Conv1d { stride: 4, padding: 1 });
}

#[test]
fn gradient_accumulates_across_uses() {
    let mut tape = Tape::new();
    let x = tape.variable(&[], vec![2.0]).unwrap();
    let a = tape.scale(x, 3.0).unwrap();
    let b = tape.square(x).unwrap();
    let s = tape.add(a, b).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &[3.0 + 4.0]);
}

#[test]
fn every_primitive_matches_finite_differences() {
    let cases: Vec<(&str, Vec<Tensor>, fn(&mut Tape, &[navfield::tensor::Var]) -> navfield::Result<navfield::tensor::Var>)> = vec![
        ("matmul", vec![random_tensor(&[3, 4], 1, -1.0, 1.0), random_tensor(&[4, 2], 2, -1.0, 1.0)], |tp, v| {
            let y = tp.matmul(v[0], v[1])?;
            weighted_sum(tp, y)
        }),
        ("conv1d", vec![random_tensor(&[3, 17], 3, -1.0, 1.0), random_tensor(&[4, 3, 3], 4, -1.0, 1.0), random_tensor(&[4], 5, -1.0, 1.0)], |tp, v| {
            let y = tp.conv1d(v[0], v[1], Some(v[2]), 4, 1)?;
            weighted_sum(tp, y)
        }),
        ("conv1d_same", vec![random_tensor(&[2, 8], 6, -1.0, 1.0), random_tensor(&[1, 2, 7], 7, -1.0, 1.0)], |tp, v| {
            let y = tp.conv1d(v[0], v[1], None, 1, 3)?;
            weighted_sum(tp, y)
        }),
        ("add_broadcast", vec![random_tensor(&[3, 4], 8, -1.0, 1.0), random_tensor(&[4], 9, -1.0, 1.0)], |tp, v| {
            let y = tp.add(v[0], v[1])?;
            weighted_sum(tp, y)
        }),
        ("sub", vec![random_tensor(&[3, 4], 10, -1.0, 1.0), random_tensor(&[3, 1], 11, -1.0, 1.0)], |tp, v| {
            let y = tp.sub(v[0], v[1])?;
            weighted_sum(tp, y)
        }),
        ("mul_broadcast", vec![random_tensor(&[4, 1], 12, -1.0, 1.0), random_tensor(&[1, 5], 13, -1.0, 1.0)], |tp, v| {
            let y = tp.mul(v[0], v[1])?;
            weighted_sum(tp, y)
        }),
        ("div", vec![random_tensor(&[2, 3], 14, -1.0, 1.0), random_tensor(&[2, 3], 15, 0.5, 2.0)], |tp, v| {
            let y = tp.div(v[0], v[1])?;
            weighted_sum(tp, y)
        }),
        ("relu", vec![random_tensor(&[10], 16, -1.0, 1.0)], |tp, v| {
            let y = tp.relu(v[0])?;
            weighted_sum(tp, y)
        }),
        ("sigmoid", vec![random_tensor(&[10], 17, -3.0, 3.0)], |tp, v| {
            let y = tp.sigmoid(v[0])?;
            weighted_sum(tp, y)
        }),
        ("softplus", vec![random_tensor(&[10], 18, -3.0, 3.0)], |tp, v| {
            let y = tp.softplus(v[0])?;
            weighted_sum(tp, y)
        }),
        ("exp", vec![random_tensor(&[6], 19, -2.0, 2.0)], |tp, v| {
            let y = tp.exp(v[0])?;
            weighted_sum(tp, y)
        }),
        ("log", vec![random_tensor(&[6], 20, 0.2, 3.0)], |tp, v| {
            let y = tp.log(v[0])?;
            weighted_sum(tp, y)
        }),
        ("square", vec![random_tensor(&[6], 21, -2.0, 2.0)], |tp, v| {
            let y = tp.square(v[0])?;
            weighted_sum(tp, y)
        }),
        ("abs", vec![random_tensor(&[6], 22, -2.0, 2.0)], |tp, v| {
            let y = tp.abs(v[0])?;
            weighted_sum(tp, y)
        }),
        ("scale_shift_clamp", vec![random_tensor(&[8], 23, -2.0, 2.0)], |tp, v| {
            let a = tp.scale(v[0], -1.5)?;
            let b = tp.shift(a, 0.25)?;
            let c = tp.clamp_min(b, 0.1)?;
            weighted_sum(tp, c)
        }),
        ("softmax", vec![random_tensor(&[3, 4], 24, -2.0, 2.0)], |tp, v| {
            let y = tp.softmax(v[0])?;
            weighted_sum(tp, y)
        }),
        ("log_softmax", vec![random_tensor(&[2, 5], 25, -2.0, 2.0)], |tp, v| {
            let y = tp.log_softmax(v[0])?;
            weighted_sum(tp, y)
        }),
        ("mean", vec![random_tensor(&[2, 5], 26, -2.0, 2.0)], |tp, v| {
            let y = tp.square(v[0])?;
            tp.mean(y)
        }),
        ("sum_axis", vec![random_tensor(&[2, 3, 4], 27, -2.0, 2.0)], |tp, v| {
            let y = tp.sum_axis(v[0], 1)?;
            weighted_sum(tp, y)
        }),
        ("avg_pool", vec![random_tensor(&[3, 5], 28, -2.0, 2.0)], |tp, v| {
            let y = tp.avg_pool(v[0], 0)?;
            weighted_sum(tp, y)
        }),
        ("max_pool", vec![random_tensor(&[3, 5], 29, -2.0, 2.0)], |tp, v| {
            let y = tp.max_pool(v[0], 1)?;
            weighted_sum(tp, y)
        }),
        ("concat", vec![random_tensor(&[2, 3], 30, -2.0, 2.0), random_tensor(&[2, 2], 31, -2.0, 2.0)], |tp, v| {
            let y = tp.concat(&[v[0], v[1], v[0]], 1)?;
            weighted_sum(tp, y)
        }),
        ("reshape_transpose", vec![random_tensor(&[2, 6], 32, -2.0, 2.0)], |tp, v| {
            let y = tp.reshape(v[0], &[3, 4])?;
            let z = tp.transpose(y)?;
            weighted_sum(tp, z)
        }),
        ("cumsum_exclusive", vec![random_tensor(&[2, 6], 33, -2.0, 2.0)], |tp, v| {
            let y = tp.cumsum_exclusive(v[0])?;
            weighted_sum(tp, y)
        }),
    ];
    for (name, inputs, f) in cases {
        let err = grad_check(&inputs, f);
        assert!(err < TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn two_layer_perceptron_matches_finite_differences() {
    let mut rng = rng::seeded(11);
    let mut params = ParamSet::new();
    let l1 = Linear::new(&mut params, "l1", 5, 7, &mut rng);
    let l2 = Linear::new(&mut params, "l2", 7, 3, &mut rng);
    let x = random_tensor(&[4, 5], 12, -1.0, 1.0);
    let mut inputs = params.tensors().to_vec();
    inputs.push(x);
    let err = grad_check(&inputs, |tp, v| {
        let bind_w1 = v[0];
        let h = tp.matmul(v[4], bind_w1)?;
        let h = tp.add(h, v[1])?;
        let h = tp.sigmoid(h)?;
        let o = tp.matmul(h, v[2])?;
        let o = tp.add(o, v[3])?;
        let o = tp.log_softmax(o)?;
        weighted_sum(tp, o)
    });
    assert!(err < TOL, "relative error {err:e}");

    // The same network through `Linear::forward` and the parameter binding.
    let mut tape = Tape::new();
    let bind = params.bind(&mut tape);
    let xv = tape.constant(&[4, 5], random_tensor(&[4, 5], 12, -1.0, 1.0).into_data()).unwrap();
    let h = l1.forward(&mut tape, &bind, xv).unwrap();
    let h = tape.sigmoid(h).unwrap();
    let o = l2.forward(&mut tape, &bind, h).unwrap();
    let loss = tape.sum(o).unwrap();
    let grads = tape.backward(loss).unwrap();
    params.zero_grad();
    params.accumulate(&bind, &grads).unwrap();
    assert!(params.tensors().iter().all(|t| t.grad().unwrap().iter().any(|g| *g != 0.0)));
}

#[test]
fn softmax_is_a_distribution() {
    for seed in 0..50 {
        let x = random_tensor(&[3, 6], seed, -30.0, 30.0);
        let mut tape = Tape::new();
        let v = tape.constant(&[3, 6], x.into_data()).unwrap();
        let s = tape.softmax(v).unwrap();
        for row in tape.value(s).chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }
}

#[test]
fn identical_graphs_are_bitwise_deterministic() {
    let run = || {
        let mut rng = rng::seeded(5);
        let mut params = ParamSet::new();
        let l = Linear::new(&mut params, "l", 6, 4, &mut rng);
        let mut tape = Tape::new();
        let bind = params.bind(&mut tape);
        let x = tape.constant(&[3, 6], random_tensor(&[3, 6], 9, -1.0, 1.0).into_data()).unwrap();
        let y = l.forward(&mut tape, &bind, x).unwrap();
        let y = tape.softplus(y).unwrap();
        let loss = tape.mean(y).unwrap();
        let g = tape.backward(loss).unwrap();
        (tape.item(loss).to_bits(), g.get(bind.var(l.weight)).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = ParamSet::new();
    let id = params.add("w", t(&[3], &[1.0, -2.0, 0.5]));
    let mut state = OptimizerState::new(&params, AdamConfig { lr: 0.01, ..AdamConfig::default() });
    params.zero_grad();
    params.get_mut(id).accumulate_grad(&[0.3, -4.0, 0.0]).unwrap();
    adam_step(&mut params, &mut state).unwrap();
    let w = params.get(id).data();
    assert!((w[0] - (1.0 - 0.01)).abs() < 1e-7);
    assert!((w[1] - (-2.0 + 0.01)).abs() < 1e-7);
    assert_eq!(w[2], 0.5, "zero gradient leaves the parameter unchanged");
    assert!(params.get(id).grad().is_none(), "grads cleared");
    assert_eq!(state.step, 1);
}

#[test]
fn adam_requires_gradients_and_is_deterministic() {
    let mut params = ParamSet::new();
    params.add("w", t(&[2], &[1.0, 2.0]));
    let mut state = OptimizerState::new(&params, AdamConfig::default());
    assert!(matches!(adam_step(&mut params, &mut state), Err(Error::Contract(_))));

    let step = |params: &mut ParamSet, state: &mut OptimizerState| {
        params.zero_grad();
        params.tensors_mut()[0].accumulate_grad(&[0.1, -0.2]).unwrap();
        adam_step(params, state).unwrap();
    };
    let (mut p1, mut s1) = (params.clone(), state.clone());
    let (mut p2, mut s2) = (params.clone(), state.clone());
    for _ in 0..3 {
        step(&mut p1, &mut s1);
        step(&mut p2, &mut s2);
    }
    assert_eq!(p1, p2);
    assert_eq!(s1, s2);
    assert_eq!(s1.step, 3);
}
