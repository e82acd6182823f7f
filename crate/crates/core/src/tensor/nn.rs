use rand::Rng as _;

use super::{Gradients, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named trainable tensors of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Parameters of a [`ParamSet`] recorded as leaves on one tape.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor.with_grad());
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform init in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut Rng) -> ParamId {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding { vars: self.tensors.iter().map(|t| tape.leaf(t)).collect() }
    }

    /// Records the parameters as constants, so no gradient reaches them.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Binding {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.constant(t.shape(), t.data().to_vec()).expect("tensor shape is consistent"))
            .collect();
        Binding { vars }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn scale_grads(&mut self, c: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale_grad(c));
    }

    /// Adds the gradients of `binding`'s leaves into each parameter.
    pub fn accumulate(&mut self, binding: &Binding, grads: &Gradients) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&binding.vars) {
            if let Some(g) = grads.get(v) {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Replaces values with `other`'s, which must have identical names and
    /// shapes.
    pub fn load(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} parameters, model expects {}",
                entries.len(),
                self.tensors.len()
            )));
        }
        for ((name, t), (own_name, own)) in entries.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != own_name || t.shape() != own.shape() {
                return Err(Error::Parse(format!(
                    "checkpoint entry {name} {:?} does not match {own_name} {:?}",
                    t.shape(),
                    own.shape()
                )));
            }
        }
        for ((_, t), own) in entries.into_iter().zip(self.tensors.iter_mut()) {
            own.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}

/// `y = x W + b` for `x: [n, in]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = params.add_uniform(format!("{name}.weight"), &[inputs, outputs], bound, rng);
        let bias = params.add_uniform(format!("{name}.bias"), &[outputs], bound, rng);
        Linear { weight, bias, inputs, outputs }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        if tape.shape(x).last() != Some(&self.inputs) {
            return Err(shape_err("linear", format!("input {:?} for {} features", tape.shape(x), self.inputs)));
        }
        let h = tape.matmul(x, bind.var(self.weight))?;
        tape.add(h, bind.var(self.bias))
    }
}

/// 1D convolution over `[channels, length]` maps.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / ((in_channels * kernel) as f64).sqrt();
        let weight = params.add_uniform(format!("{name}.weight"), &[out_channels, in_channels, kernel], bound, rng);
        let bias = params.add_uniform(format!("{name}.bias"), &[out_channels], bound, rng);
        Conv1d { weight, bias, stride, padding }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        tape.conv1d(x, bind.var(self.weight), Some(bind.var(self.bias)), self.stride, self.padding)
    }
}
