#![allow(dead_code)]
pub mod stacks;

use navfield::tensor::{Tape, Tensor, Var};
use navfield::Result;

/// Central finite-difference gradient of `f` with respect to each input.
pub fn numeric_grads<F>(inputs: &[Tensor], h: f64, f: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.shape(), t.data().to_vec()).unwrap()).collect();
        let loss = f(&mut tape, &vars).unwrap();
        tape.item(loss)
    };
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].numel());
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            g.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

pub fn analytic_grads<F>(inputs: &[Tensor], f: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.shape(), t.data().to_vec()).unwrap()).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect()
}

/// Largest relative error `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn max_rel_error(a: &[Vec<f64>], n: &[Vec<f64>], floor: f64) -> f64 {
    a.iter()
        .flatten()
        .zip(n.iter().flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn grad_check<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Copy,
{
    let a = analytic_grads(inputs, f);
    let n = numeric_grads(inputs, 1e-5, f);
    max_rel_error(&a, &n, 1e-3)
}

pub fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}
