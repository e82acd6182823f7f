//! Forward and backward kernels for every [`Primitive`].

use super::numel;
use super::tape::Primitive;
use crate::error::{shape_err, Result};

pub(super) struct Arg<'a> {
    pub shape: &'a [usize],
    pub value: &'a [f64],
}

#[derive(Debug)]
pub(super) enum Aux {
    None,
    /// Flat source index chosen by a max pool, one per output element.
    Argmax(Vec<usize>),
}

pub(super) struct Output {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub aux: Aux,
}

fn out(shape: Vec<usize>, value: Vec<f64>) -> Output {
    Output { shape, value, aux: Aux::None }
}

fn arity(prim: &Primitive, args: &[Arg<'_>], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(shape_err(prim.name(), format!("expected {n} inputs, got {}", args.len())));
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `(outer, n, inner)` split of `shape` around `axis`.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok((numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..])))
}

/// Numpy-style broadcast of two shapes; returns the output shape and, for
/// each output element, the flat index into `a` and `b`.
fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut shape = Vec::with_capacity(rank);
    for (&x, &y) in pa.iter().zip(&pb) {
        if x == y || y == 1 {
            shape.push(x);
        } else if x == 1 {
            shape.push(y);
        } else {
            return Err(shape_err(op, format!("cannot broadcast {a:?} with {b:?}")));
        }
    }
    let strides = |s: &[usize]| {
        let mut st = vec![0; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            st[d] = if s[d] == 1 { 0 } else { acc };
            acc *= s[d];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let total = numel(&shape);
    let mut ia = Vec::with_capacity(total);
    let mut ib = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        ia.push(idx.iter().zip(&sa).map(|(i, s)| i * s).sum());
        ib.push(idx.iter().zip(&sb).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok((shape, ia, ib))
}

fn binary(prim: &Primitive, a: &Arg<'_>, b: &Arg<'_>, f: impl Fn(f64, f64) -> f64) -> Result<Output> {
    if a.shape == b.shape {
        let value = a.value.iter().zip(b.value).map(|(&x, &y)| f(x, y)).collect();
        return Ok(out(a.shape.to_vec(), value));
    }
    let (shape, ia, ib) = broadcast(prim.name(), a.shape, b.shape)?;
    let value = ia.iter().zip(&ib).map(|(&i, &j)| f(a.value[i], b.value[j])).collect();
    Ok(out(shape, value))
}

fn unary(x: &Arg<'_>, f: impl Fn(f64) -> f64) -> Output {
    out(x.shape.to_vec(), x.value.iter().map(|&v| f(v)).collect())
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (c, &b) in row.iter_mut().zip(brow) {
                *c += s * b;
            }
        }
    }
    c
}

fn conv_out_len(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

pub(super) fn forward(prim: &Primitive, args: &[Arg<'_>]) -> Result<Output> {
    let name = prim.name();
    match prim {
        Primitive::MatMul => {
            arity(prim, args, 2)?;
            let (a, b) = (&args[0], &args[1]);
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(shape_err(name, format!("{:?} x {:?}", a.shape, b.shape)));
            }
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            Ok(out(vec![m, n], matmul_kernel(a.value, b.value, m, k, n)))
        }
        Primitive::Conv1d { stride, padding } => {
            if args.len() != 2 && args.len() != 3 {
                return Err(shape_err(name, format!("expected 2 or 3 inputs, got {}", args.len())));
            }
            if *stride == 0 {
                return Err(shape_err(name, "stride must be at least 1"));
            }
            let (x, w) = (&args[0], &args[1]);
            if x.shape.len() != 2 || w.shape.len() != 3 || w.shape[1] != x.shape[0] {
                return Err(shape_err(name, format!("input {:?} with weight {:?}", x.shape, w.shape)));
            }
            let (cin, len) = (x.shape[0], x.shape[1]);
            let (cout, k) = (w.shape[0], w.shape[2]);
            let lout = conv_out_len(len, k, *stride, *padding)
                .ok_or_else(|| shape_err(name, format!("kernel {k} longer than padded input {len}")))?;
            let mut value = vec![0.0; cout * lout];
            if let Some(b) = args.get(2) {
                if b.shape != [cout] {
                    return Err(shape_err(name, format!("bias {:?} for {cout} outputs", b.shape)));
                }
                for o in 0..cout {
                    value[o * lout..(o + 1) * lout].iter_mut().for_each(|v| *v = b.value[o]);
                }
            }
            for o in 0..cout {
                for c in 0..cin {
                    for q in 0..k {
                        let wv = w.value[(o * cin + c) * k + q];
                        for t in 0..lout {
                            let pos = (t * stride + q) as isize - *padding as isize;
                            if pos >= 0 && (pos as usize) < len {
                                value[o * lout + t] += wv * x.value[c * len + pos as usize];
                            }
                        }
                    }
                }
            }
            Ok(out(vec![cout, lout], value))
        }
        Primitive::Add => {
            arity(prim, args, 2)?;
            binary(prim, &args[0], &args[1], |a, b| a + b)
        }
        Primitive::Sub => {
            arity(prim, args, 2)?;
            binary(prim, &args[0], &args[1], |a, b| a - b)
        }
        Primitive::Mul => {
            arity(prim, args, 2)?;
            binary(prim, &args[0], &args[1], |a, b| a * b)
        }
        Primitive::Div => {
            arity(prim, args, 2)?;
            binary(prim, &args[0], &args[1], |a, b| a / b)
        }
        Primitive::Relu => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], |v| v.max(0.0)))
        }
        Primitive::Sigmoid => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], sigmoid))
        }
        Primitive::Softplus => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], softplus))
        }
        Primitive::Exp => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], f64::exp))
        }
        Primitive::Log => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], f64::ln))
        }
        Primitive::Square => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], |v| v * v))
        }
        Primitive::Abs => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], f64::abs))
        }
        Primitive::Scale(c) => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], |v| v * c))
        }
        Primitive::Shift(c) => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], |v| v + c))
        }
        Primitive::ClampMin(c) => {
            arity(prim, args, 1)?;
            Ok(unary(&args[0], |v| v.max(*c)))
        }
        Primitive::Softmax | Primitive::LogSoftmax => {
            arity(prim, args, 1)?;
            let x = &args[0];
            let n = *x.shape.last().ok_or_else(|| shape_err(name, "needs rank >= 1"))?;
            if n == 0 {
                return Err(shape_err(name, "empty last axis"));
            }
            let mut value = vec![0.0; x.value.len()];
            for (src, dst) in x.value.chunks(n).zip(value.chunks_mut(n)) {
                let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = src.iter().map(|v| (v - max).exp()).sum();
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = if *prim == Primitive::Softmax {
                        (s - max).exp() / z
                    } else {
                        s - max - z.ln()
                    };
                }
            }
            Ok(out(x.shape.to_vec(), value))
        }
        Primitive::Sum | Primitive::Mean => {
            arity(prim, args, 1)?;
            let x = &args[0];
            let s: f64 = x.value.iter().sum();
            let v = if *prim == Primitive::Mean {
                if x.value.is_empty() {
                    return Err(shape_err(name, "mean of empty tensor"));
                }
                s / x.value.len() as f64
            } else {
                s
            };
            Ok(out(Vec::new(), vec![v]))
        }
        Primitive::SumAxis { axis } | Primitive::AvgPool { axis } | Primitive::MaxPool { axis } => {
            arity(prim, args, 1)?;
            let x = &args[0];
            let (outer, n, inner) = split_axis(name, x.shape, *axis)?;
            if n == 0 {
                return Err(shape_err(name, "empty reduction axis"));
            }
            let mut value = vec![0.0; outer * inner];
            let mut argmax = Vec::new();
            if let Primitive::MaxPool { .. } = prim {
                argmax = vec![0usize; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = o * n * inner + i;
                        for j in 1..n {
                            let idx = (o * n + j) * inner + i;
                            if x.value[idx] > x.value[best] {
                                best = idx;
                            }
                        }
                        value[o * inner + i] = x.value[best];
                        argmax[o * inner + i] = best;
                    }
                }
            } else {
                for o in 0..outer {
                    for j in 0..n {
                        let src = &x.value[(o * n + j) * inner..(o * n + j + 1) * inner];
                        let dst = &mut value[o * inner..(o + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                if let Primitive::AvgPool { .. } = prim {
                    value.iter_mut().for_each(|v| *v /= n as f64);
                }
            }
            let mut shape = x.shape.to_vec();
            if let Primitive::SumAxis { .. } = prim {
                shape.remove(*axis);
            } else {
                shape[*axis] = 1;
            }
            let aux = if argmax.is_empty() { Aux::None } else { Aux::Argmax(argmax) };
            Ok(Output { shape, value, aux })
        }
        Primitive::Concat { axis } => {
            let first = args.first().ok_or_else(|| shape_err(name, "needs at least one input"))?;
            let rank = first.shape.len();
            if *axis >= rank {
                return Err(shape_err(name, format!("axis {axis} out of range for rank {rank}")));
            }
            for a in args {
                let same = a.shape.len() == rank
                    && a.shape.iter().zip(first.shape).enumerate().all(|(d, (x, y))| d == *axis || x == y);
                if !same {
                    return Err(shape_err(name, format!("{:?} vs {:?} along axis {axis}", a.shape, first.shape)));
                }
            }
            let outer = numel(&first.shape[..*axis]);
            let inner = numel(&first.shape[axis + 1..]);
            let total: usize = args.iter().map(|a| a.shape[*axis]).sum();
            let mut value = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for a in args {
                    let blk = a.shape[*axis] * inner;
                    value.extend_from_slice(&a.value[o * blk..(o + 1) * blk]);
                }
            }
            let mut shape = first.shape.to_vec();
            shape[*axis] = total;
            Ok(out(shape, value))
        }
        Primitive::Reshape { shape } => {
            arity(prim, args, 1)?;
            if numel(shape) != args[0].value.len() {
                return Err(shape_err(name, format!("{:?} -> {:?}", args[0].shape, shape)));
            }
            Ok(out(shape.clone(), args[0].value.to_vec()))
        }
        Primitive::Transpose => {
            arity(prim, args, 1)?;
            let x = &args[0];
            if x.shape.len() != 2 {
                return Err(shape_err(name, format!("needs rank 2, got {:?}", x.shape)));
            }
            let (r, c) = (x.shape[0], x.shape[1]);
            let mut value = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    value[j * r + i] = x.value[i * c + j];
                }
            }
            Ok(out(vec![c, r], value))
        }
        Primitive::CumSumExclusive => {
            arity(prim, args, 1)?;
            let x = &args[0];
            let n = *x.shape.last().ok_or_else(|| shape_err(name, "needs rank >= 1"))?;
            let mut value = vec![0.0; x.value.len()];
            if n > 0 {
                for (src, dst) in x.value.chunks(n).zip(value.chunks_mut(n)) {
                    let mut acc = 0.0;
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = acc;
                        acc += s;
                    }
                }
            }
            Ok(out(x.shape.to_vec(), value))
        }
    }
}

/// Reduces a gradient over the broadcast output back onto `shape`.
fn unbroadcast(len: usize, index: &[usize], grad: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut g = vec![0.0; len];
    for (&i, v) in index.iter().zip(grad) {
        g[i] += v;
    }
    g
}

fn binary_backward(
    prim: &Primitive,
    a: &Arg<'_>,
    b: &Arg<'_>,
    g: &[f64],
    mask: &[bool],
    da: impl Fn(f64, f64, f64) -> f64,
    db: impl Fn(f64, f64, f64) -> f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    if a.shape == b.shape {
        let ga = mask[0].then(|| {
            a.value.iter().zip(b.value).zip(g).map(|((&x, &y), &gv)| da(x, y, gv)).collect()
        });
        let gb = mask[1].then(|| {
            a.value.iter().zip(b.value).zip(g).map(|((&x, &y), &gv)| db(x, y, gv)).collect()
        });
        return Ok(vec![ga, gb]);
    }
    let (_, ia, ib) = broadcast(prim.name(), a.shape, b.shape)?;
    let pairs = || ia.iter().zip(&ib).zip(g).map(|((&i, &j), &gv)| (a.value[i], b.value[j], gv));
    let ga = mask[0].then(|| unbroadcast(a.value.len(), &ia, pairs().map(|(x, y, gv)| da(x, y, gv))));
    let gb = mask[1].then(|| unbroadcast(b.value.len(), &ib, pairs().map(|(x, y, gv)| db(x, y, gv))));
    Ok(vec![ga, gb])
}

fn unary_backward(x: &Arg<'_>, y: &Arg<'_>, g: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Vec<Option<Vec<f64>>> {
    let gx = x.value.iter().zip(y.value).zip(g).map(|((&xv, &yv), &gv)| f(xv, yv, gv)).collect();
    vec![Some(gx)]
}

pub(super) fn backward(
    prim: &Primitive,
    args: &[Arg<'_>],
    y: Arg<'_>,
    g: &[f64],
    aux: &Aux,
    mask: &[bool],
) -> Result<Vec<Option<Vec<f64>>>> {
    Ok(match prim {
        Primitive::MatMul => {
            let (a, b) = (&args[0], &args[1]);
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            let ga = mask[0].then(|| {
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &b.value[p * n..(p + 1) * n];
                        ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                ga
            });
            let gb = mask[1].then(|| {
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s = a.value[i * k + p];
                        if s == 0.0 {
                            continue;
                        }
                        let dst = &mut gb[p * n..(p + 1) * n];
                        dst.iter_mut().zip(grow).for_each(|(d, gv)| *d += s * gv);
                    }
                }
                gb
            });
            vec![ga, gb]
        }
        Primitive::Conv1d { stride, padding } => {
            let (x, w) = (&args[0], &args[1]);
            let (cin, len) = (x.shape[0], x.shape[1]);
            let (cout, k) = (w.shape[0], w.shape[2]);
            let lout = y.shape[1];
            let mut gx = mask[0].then(|| vec![0.0; x.value.len()]);
            let mut gw = mask[1].then(|| vec![0.0; w.value.len()]);
            for o in 0..cout {
                for c in 0..cin {
                    for q in 0..k {
                        let widx = (o * cin + c) * k + q;
                        let wv = w.value[widx];
                        let mut wacc = 0.0;
                        for t in 0..lout {
                            let pos = (t * stride + q) as isize - *padding as isize;
                            if pos < 0 || pos as usize >= len {
                                continue;
                            }
                            let xi = c * len + pos as usize;
                            let gv = g[o * lout + t];
                            if let Some(gx) = gx.as_mut() {
                                gx[xi] += wv * gv;
                            }
                            wacc += x.value[xi] * gv;
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += wacc;
                        }
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if args.len() == 3 {
                grads.push(mask[2].then(|| (0..cout).map(|o| g[o * lout..(o + 1) * lout].iter().sum()).collect()));
            }
            grads
        }
        Primitive::Add => binary_backward(prim, &args[0], &args[1], g, mask, |_, _, g| g, |_, _, g| g)?,
        Primitive::Sub => binary_backward(prim, &args[0], &args[1], g, mask, |_, _, g| g, |_, _, g| -g)?,
        Primitive::Mul => binary_backward(prim, &args[0], &args[1], g, mask, |_, b, g| g * b, |a, _, g| g * a)?,
        Primitive::Div => {
            binary_backward(prim, &args[0], &args[1], g, mask, |_, b, g| g / b, |a, b, g| -g * a / (b * b))?
        }
        Primitive::Relu => unary_backward(&args[0], &y, g, |x, _, g| if x > 0.0 { g } else { 0.0 }),
        Primitive::Sigmoid => unary_backward(&args[0], &y, g, |_, s, g| g * s * (1.0 - s)),
        Primitive::Softplus => unary_backward(&args[0], &y, g, |x, _, g| g * sigmoid(x)),
        Primitive::Exp => unary_backward(&args[0], &y, g, |_, e, g| g * e),
        Primitive::Log => unary_backward(&args[0], &y, g, |x, _, g| g / x),
        Primitive::Square => unary_backward(&args[0], &y, g, |x, _, g| 2.0 * x * g),
        Primitive::Abs => unary_backward(&args[0], &y, g, |x, _, g| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        }),
        Primitive::Scale(c) => unary_backward(&args[0], &y, g, |_, _, g| g * c),
        Primitive::Shift(_) => unary_backward(&args[0], &y, g, |_, _, g| g),
        Primitive::ClampMin(c) => unary_backward(&args[0], &y, g, |x, _, g| if x > *c { g } else { 0.0 }),
        Primitive::Softmax => {
            let n = *y.shape.last().expect("rank checked in forward");
            let mut gx = vec![0.0; g.len()];
            for ((yr, gr), dst) in y.value.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((d, &yv), &gv) in dst.iter_mut().zip(yr).zip(gr) {
                    *d = yv * (gv - dot);
                }
            }
            vec![Some(gx)]
        }
        Primitive::LogSoftmax => {
            let n = *y.shape.last().expect("rank checked in forward");
            let mut gx = vec![0.0; g.len()];
            for ((yr, gr), dst) in y.value.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)) {
                let total: f64 = gr.iter().sum();
                for ((d, &yv), &gv) in dst.iter_mut().zip(yr).zip(gr) {
                    *d = gv - yv.exp() * total;
                }
            }
            vec![Some(gx)]
        }
        Primitive::Sum => vec![Some(vec![g[0]; args[0].value.len()])],
        Primitive::Mean => {
            let n = args[0].value.len();
            vec![Some(vec![g[0] / n as f64; n])]
        }
        Primitive::SumAxis { axis } | Primitive::AvgPool { axis } => {
            let x = &args[0];
            let (outer, n, inner) = split_axis(prim.name(), x.shape, *axis)?;
            let scale = if let Primitive::AvgPool { .. } = prim { 1.0 / n as f64 } else { 1.0 };
            let mut gx = vec![0.0; x.value.len()];
            for o in 0..outer {
                for j in 0..n {
                    let dst = &mut gx[(o * n + j) * inner..(o * n + j + 1) * inner];
                    let src = &g[o * inner..(o + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * scale);
                }
            }
            vec![Some(gx)]
        }
        Primitive::MaxPool { .. } => {
            let Aux::Argmax(idx) = aux else {
                return Err(shape_err("max_pool", "missing argmax record"));
            };
            let mut gx = vec![0.0; args[0].value.len()];
            for (&i, &gv) in idx.iter().zip(g) {
                gx[i] += gv;
            }
            vec![Some(gx)]
        }
        Primitive::Concat { axis } => {
            let first = &args[0];
            let outer = numel(&first.shape[..*axis]);
            let inner = numel(&first.shape[axis + 1..]);
            let total = y.shape[*axis];
            let mut grads = Vec::with_capacity(args.len());
            let mut offset = 0;
            for (a, &m) in args.iter().zip(mask) {
                let blk = a.shape[*axis] * inner;
                grads.push(m.then(|| {
                    let mut ga = Vec::with_capacity(a.value.len());
                    for o in 0..outer {
                        let start = o * total * inner + offset;
                        ga.extend_from_slice(&g[start..start + blk]);
                    }
                    ga
                }));
                offset += blk;
            }
            grads
        }
        Primitive::Reshape { .. } => vec![Some(g.to_vec())],
        Primitive::Transpose => {
            let (r, c) = (args[0].shape[0], args[0].shape[1]);
            let mut gx = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    gx[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(gx)]
        }
        Primitive::CumSumExclusive => {
            let n = *y.shape.last().expect("rank checked in forward");
            let mut gx = vec![0.0; g.len()];
            if n > 0 {
                for (src, dst) in g.chunks(n).zip(gx.chunks_mut(n)) {
                    let mut acc = 0.0;
                    for j in (0..n).rev() {
                        dst[j] = acc;
                        acc += src[j];
                    }
                }
            }
            vec![Some(gx)]
        }
    })
}
