use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use super::ops;
use super::{numel, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// A differentiable operation recorded on a [`Tape`].
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul,
    /// Input `[c_in, l]`, weight `[c_out, c_in, k]`, optional bias `[c_out]`.
    Conv1d { stride: usize, padding: usize },
    Add,
    Sub,
    Mul,
    Div,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Abs,
    Scale(f64),
    Shift(f64),
    ClampMin(f64),
    /// Softmax over the last axis.
    Softmax,
    LogSoftmax,
    Sum,
    Mean,
    /// Sum over one axis, removing it.
    SumAxis { axis: usize },
    /// Global average pool over one axis, kept with size 1.
    AvgPool { axis: usize },
    /// Global max pool over one axis, kept with size 1.
    MaxPool { axis: usize },
    Concat { axis: usize },
    Reshape { shape: Vec<usize> },
    Transpose,
    /// Exclusive prefix sum along the last axis.
    CumSumExclusive,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Conv1d { .. } => "conv1d",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Relu => "relu",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Softplus => "softplus",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Square => "square",
            Primitive::Abs => "abs",
            Primitive::Scale(_) => "scale",
            Primitive::Shift(_) => "shift",
            Primitive::ClampMin(_) => "clamp_min",
            Primitive::Softmax => "softmax",
            Primitive::LogSoftmax => "log_softmax",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::SumAxis { .. } => "sum_axis",
            Primitive::AvgPool { .. } => "avg_pool",
            Primitive::MaxPool { .. } => "max_pool",
            Primitive::Concat { .. } => "concat",
            Primitive::Reshape { .. } => "reshape",
            Primitive::Transpose => "transpose",
            Primitive::CumSumExclusive => "cumsum_exclusive",
        }
    }
}

fn attr<T: FromStr>(attrs: &[(&str, &str)], key: &str, default: Option<T>) -> Result<T> {
    match attrs.iter().find(|(k, _)| *k == key) {
        Some((_, v)) => v
            .parse()
            .map_err(|_| Error::Parse(format!("bad value `{v}` for attribute `{key}`"))),
        None => default.ok_or_else(|| Error::Parse(format!("missing attribute `{key}`"))),
    }
}

/// Parses `kind` or `kind:key=value,key=value`, e.g. `conv1d:stride=4,padding=1`.
impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let attrs: Vec<(&str, &str)> = rest
            .split(',')
            .filter(|p| !p.is_empty())
            .map(|p| p.split_once('=').unwrap_or((p, "")))
            .collect();
        Ok(match kind.trim() {
            "matmul" => Primitive::MatMul,
            "conv1d" => Primitive::Conv1d {
                stride: attr(&attrs, "stride", Some(1))?,
                padding: attr(&attrs, "padding", Some(0))?,
            },
            "add" => Primitive::Add,
            "sub" => Primitive::Sub,
            "mul" => Primitive::Mul,
            "div" => Primitive::Div,
            "relu" => Primitive::Relu,
            "sigmoid" => Primitive::Sigmoid,
            "softplus" => Primitive::Softplus,
            "exp" => Primitive::Exp,
            "log" => Primitive::Log,
            "square" => Primitive::Square,
            "abs" => Primitive::Abs,
            "scale" => Primitive::Scale(attr(&attrs, "c", None)?),
            "shift" => Primitive::Shift(attr(&attrs, "c", None)?),
            "clamp_min" => Primitive::ClampMin(attr(&attrs, "c", None)?),
            "softmax" => Primitive::Softmax,
            "log_softmax" => Primitive::LogSoftmax,
            "sum" => Primitive::Sum,
            "mean" => Primitive::Mean,
            "sum_axis" => Primitive::SumAxis { axis: attr(&attrs, "axis", None)? },
            "avg_pool" => Primitive::AvgPool { axis: attr(&attrs, "axis", None)? },
            "max_pool" => Primitive::MaxPool { axis: attr(&attrs, "axis", None)? },
            "concat" => Primitive::Concat { axis: attr(&attrs, "axis", Some(0))? },
            "transpose" => Primitive::Transpose,
            "cumsum_exclusive" => Primitive::CumSumExclusive,
            other => return Err(Error::UnsupportedPrimitive(other.to_string())),
        })
    }
}

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Op { prim: Primitive, inputs: Vec<usize>, aux: ops::Aux },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    needs_grad: bool,
    origin: Origin,
}

/// Records primitives in execution order so that [`Tape::backward`] can
/// replay them in reverse.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "variable {} of tape {} is not recorded on tape {}",
                v.index, v.tape, self.id
            )));
        }
        Ok(v.index)
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, needs_grad: bool, origin: Origin) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { shape, value, needs_grad, origin });
        Var { tape: self.id, index }
    }

    /// Records a leaf; it is differentiable iff the tensor requires grad.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Origin::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(crate::error::shape_err(
                "constant",
                format!("shape {:?} vs {} values", shape, data.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), data, false, Origin::Leaf))
    }

    /// A differentiable leaf that is not tied to a parameter.
    pub fn variable(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let v = self.constant(shape, data)?;
        self.nodes[v.index].needs_grad = true;
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.index].shape
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.index].needs_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.index];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape matches value")
    }

    /// Value of a single-element variable.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.index].value[0]
    }

    /// Records `prim` applied to `inputs`.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = inputs.iter().map(|&v| self.check(v)).collect::<Result<_>>()?;
        let args: Vec<ops::Arg<'_>> = idx
            .iter()
            .map(|&i| ops::Arg { shape: &self.nodes[i].shape, value: &self.nodes[i].value })
            .collect();
        let out = ops::forward(&prim, &args)?;
        let needs_grad = idx.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(out.shape, out.value, needs_grad, Origin::Op { prim, inputs: idx, aux: out.aux }))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[root].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Origin::Op { prim, inputs, aux } = &node.origin {
                let mask: Vec<bool> = inputs.iter().map(|&j| self.nodes[j].needs_grad).collect();
                if mask.iter().any(|&m| m) {
                    let args: Vec<ops::Arg<'_>> = inputs
                        .iter()
                        .map(|&j| ops::Arg { shape: &self.nodes[j].shape, value: &self.nodes[j].value })
                        .collect();
                    let out = ops::Arg { shape: &node.shape, value: &node.value };
                    let input_grads = ops::backward(prim, &args, out, &g, aux, &mask)?;
                    for (&j, ig) in inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        match &mut grads[j] {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                            slot @ None => *slot = Some(ig),
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let prim = Primitive::Conv1d { stride, padding };
        match b {
            Some(b) => self.apply(prim, &[x, w, b]),
            None => self.apply(prim, &[x, w]),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Div, &[a, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Softplus, &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Exp, &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Square, &[x])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Abs, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::Scale(c), &[x])
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::Shift(c), &[x])
    }

    pub fn clamp_min(&mut self, x: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::ClampMin(c), &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Softmax, &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::LogSoftmax, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[x])
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::SumAxis { axis }, &[x])
    }

    pub fn avg_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::AvgPool { axis }, &[x])
    }

    pub fn max_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::MaxPool { axis }, &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, xs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape { shape: shape.to_vec() }, &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[x])
    }

    pub fn cumsum_exclusive(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::CumSumExclusive, &[x])
    }
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if `v` is not differentiable
    /// or not upstream of the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_deref())
    }
}
