//! Differentiable operations and their backward rules.

use super::conv::{self, ConvGeom};
use super::tape::Node;
use super::{Element, Shape, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub(crate) enum Op<T: Element> {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: ConvGeom,
    },
    PixelShuffle {
        input: usize,
        r: usize,
    },
    PixelUnshuffle {
        input: usize,
        r: usize,
    },
    GlobalAvgPool {
        input: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Relu {
        input: usize,
    },
    Sigmoid {
        input: usize,
    },
    Scale {
        input: usize,
        factor: T,
    },
    ScaleChannels {
        input: usize,
        gate: usize,
    },
    StackPooled {
        inputs: Vec<usize>,
    },
    SoftmaxFeatures {
        input: usize,
    },
    WeightedSum {
        features: Vec<usize>,
        weights: usize,
    },
    ConcatChannels {
        inputs: Vec<usize>,
    },
    L1 {
        a: usize,
        b: usize,
        weight: Option<Vec<T>>,
        norm: f64,
    },
    Mse {
        a: usize,
        b: usize,
    },
    Mean {
        input: usize,
    },
    Sum {
        input: usize,
    },
}

impl<T: Element> Op<T> {
    pub fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::PixelShuffle { input, .. }
            | Op::PixelUnshuffle { input, .. }
            | Op::GlobalAvgPool { input }
            | Op::Relu { input }
            | Op::Sigmoid { input }
            | Op::Scale { input, .. }
            | Op::SoftmaxFeatures { input }
            | Op::Mean { input }
            | Op::Sum { input } => vec![*input],
            Op::Add { a, b } | Op::Mul { a, b } | Op::L1 { a, b, .. } | Op::Mse { a, b } => {
                vec![*a, *b]
            }
            Op::ScaleChannels { input, gate } => vec![*input, *gate],
            Op::StackPooled { inputs } | Op::ConcatChannels { inputs } => inputs.clone(),
            Op::WeightedSum { features, weights } => {
                let mut v = features.clone();
                v.push(*weights);
                v
            }
        }
    }

    /// Pushes the output gradient `g` back into the gradients of this op's inputs.
    pub fn propagate(
        &self,
        nodes: &[Node<T>],
        out: &Tensor<T>,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let val = |i: usize| &nodes[i].value;
        let tracked = |i: usize| nodes[i].tracked;
        match self {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = (
                    tracked(*input),
                    tracked(*weight),
                    bias.is_some_and(tracked),
                );
                let cg = conv::backward(val(*input), val(*weight), geom, g, need);
                add_into(grads, nodes, *input, cg.input);
                add_into(grads, nodes, *weight, cg.weight);
                if let Some(b) = bias {
                    add_into(grads, nodes, *b, cg.bias);
                }
            }
            Op::PixelShuffle { input, r } => {
                let s = val(*input).shape();
                accumulate(grads, nodes, *input, |gx| {
                    for_each_shuffle(s, *r, |src, dst| gx[src] += g[dst])
                });
            }
            Op::PixelUnshuffle { input, r } => {
                let s = out.shape();
                accumulate(grads, nodes, *input, |gx| {
                    for_each_shuffle(s, *r, |src, dst| gx[dst] += g[src])
                });
            }
            Op::GlobalAvgPool { input } => {
                let plane = val(*input).shape().plane();
                let inv = T::one() / T::from_usize(plane).unwrap();
                accumulate(grads, nodes, *input, |gx| {
                    for (chunk, &go) in gx.chunks_mut(plane).zip(g) {
                        let v = go * inv;
                        chunk.iter_mut().for_each(|x| *x += v);
                    }
                });
            }
            Op::Add { a, b } => {
                for i in [*a, *b] {
                    accumulate(grads, nodes, i, |gx| {
                        gx.iter_mut().zip(g).for_each(|(x, &v)| *x += v)
                    });
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                accumulate(grads, nodes, *a, |gx| {
                    for ((x, &go), &o) in gx.iter_mut().zip(g).zip(vb) {
                        *x += go * o;
                    }
                });
                accumulate(grads, nodes, *b, |gx| {
                    for ((x, &go), &o) in gx.iter_mut().zip(g).zip(va) {
                        *x += go * o;
                    }
                });
            }
            Op::Relu { input } => {
                let x = val(*input).data();
                accumulate(grads, nodes, *input, |gx| {
                    for ((d, &go), &xi) in gx.iter_mut().zip(g).zip(x) {
                        if xi > T::zero() {
                            *d += go;
                        }
                    }
                });
            }
            Op::Sigmoid { input } => {
                let y = out.data();
                accumulate(grads, nodes, *input, |gx| {
                    for ((d, &go), &yi) in gx.iter_mut().zip(g).zip(y) {
                        *d += go * yi * (T::one() - yi);
                    }
                });
            }
            Op::Scale { input, factor } => {
                accumulate(grads, nodes, *input, |gx| {
                    gx.iter_mut().zip(g).for_each(|(d, &go)| *d += go * *factor)
                });
            }
            Op::ScaleChannels { input, gate } => {
                let x = val(*input);
                let plane = x.shape().plane();
                let gt = val(*gate).data();
                accumulate(grads, nodes, *input, |gx| {
                    for (nc, (chunk, gchunk)) in gx.chunks_mut(plane).zip(g.chunks(plane)).enumerate() {
                        for (d, &go) in chunk.iter_mut().zip(gchunk) {
                            *d += go * gt[nc];
                        }
                    }
                });
                accumulate(grads, nodes, *gate, |gg| {
                    for (nc, (xchunk, gchunk)) in x.data().chunks(plane).zip(g.chunks(plane)).enumerate() {
                        gg[nc] += dot(xchunk, gchunk);
                    }
                });
            }
            Op::StackPooled { inputs } => {
                let s = out.shape();
                for (f, &i) in inputs.iter().enumerate() {
                    accumulate(grads, nodes, i, |gx| {
                        for n in 0..s.n {
                            for c in 0..s.w {
                                gx[n * s.w + c] += g[s.index(n, 0, f, c)];
                            }
                        }
                    });
                }
            }
            Op::SoftmaxFeatures { input } => {
                let s = out.shape();
                let y = out.data();
                accumulate(grads, nodes, *input, |gx| {
                    for n in 0..s.n {
                        for c in 0..s.w {
                            let mut inner = T::zero();
                            for f in 0..s.h {
                                let i = s.index(n, 0, f, c);
                                inner += g[i] * y[i];
                            }
                            for f in 0..s.h {
                                let i = s.index(n, 0, f, c);
                                gx[i] += y[i] * (g[i] - inner);
                            }
                        }
                    }
                });
            }
            Op::WeightedSum { features, weights } => {
                let ws = val(*weights);
                let wsh = ws.shape();
                let fs = out.shape();
                let plane = fs.plane();
                for (f, &i) in features.iter().enumerate() {
                    accumulate(grads, nodes, i, |gx| {
                        for n in 0..fs.n {
                            for c in 0..fs.c {
                                let wv = ws.data()[wsh.index(n, 0, f, c)];
                                let off = (n * fs.c + c) * plane;
                                for (d, &go) in gx[off..off + plane].iter_mut().zip(&g[off..off + plane]) {
                                    *d += go * wv;
                                }
                            }
                        }
                    });
                }
                accumulate(grads, nodes, *weights, |gw| {
                    for (f, &i) in features.iter().enumerate() {
                        let x = val(i).data();
                        for n in 0..fs.n {
                            for c in 0..fs.c {
                                let off = (n * fs.c + c) * plane;
                                gw[wsh.index(n, 0, f, c)] += dot(&x[off..off + plane], &g[off..off + plane]);
                            }
                        }
                    }
                });
            }
            Op::ConcatChannels { inputs } => {
                let s = out.shape();
                let mut c0 = 0;
                for &i in inputs {
                    let si = val(i).shape();
                    accumulate(grads, nodes, i, |gx| {
                        for n in 0..s.n {
                            let src = (n * s.c + c0) * s.plane();
                            let dst = n * si.item();
                            for (d, &go) in gx[dst..dst + si.item()].iter_mut().zip(&g[src..src + si.item()]) {
                                *d += go;
                            }
                        }
                    });
                    c0 += si.c;
                }
            }
            Op::L1 { a, b, weight, norm } => {
                if *norm == 0.0 {
                    return;
                }
                let scale = g[0] / T::from_f64(*norm).unwrap();
                let (va, vb) = (val(*a).data(), val(*b).data());
                let coef = |k: usize| {
                    let s = sign(va[k] - vb[k]) * scale;
                    match weight {
                        Some(w) => s * w[k],
                        None => s,
                    }
                };
                accumulate(grads, nodes, *a, |gx| {
                    gx.iter_mut().enumerate().for_each(|(k, d)| *d += coef(k))
                });
                accumulate(grads, nodes, *b, |gx| {
                    gx.iter_mut().enumerate().for_each(|(k, d)| *d -= coef(k))
                });
            }
            Op::Mse { a, b } => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                let scale = g[0] * T::lit(2.0) / T::from_usize(va.len()).unwrap();
                accumulate(grads, nodes, *a, |gx| {
                    for (k, d) in gx.iter_mut().enumerate() {
                        *d += (va[k] - vb[k]) * scale;
                    }
                });
                accumulate(grads, nodes, *b, |gx| {
                    for (k, d) in gx.iter_mut().enumerate() {
                        *d -= (va[k] - vb[k]) * scale;
                    }
                });
            }
            Op::Mean { input } => {
                let v = g[0] / T::from_usize(val(*input).numel()).unwrap();
                accumulate(grads, nodes, *input, |gx| gx.iter_mut().for_each(|d| *d += v));
            }
            Op::Sum { input } => {
                accumulate(grads, nodes, *input, |gx| gx.iter_mut().for_each(|d| *d += g[0]));
            }
        }
    }
}

fn sign<T: Element>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn sum_f64<T: Element>(values: impl Iterator<Item = T>) -> f64 {
    values.map(|v| v.to_f64().unwrap()).sum()
}

fn accumulate<T: Element>(
    grads: &mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    idx: usize,
    f: impl FnOnce(&mut [T]),
) {
    if !nodes[idx].tracked {
        return;
    }
    let len = nodes[idx].value.numel();
    f(grads[idx].get_or_insert_with(|| vec![T::zero(); len]));
}

fn add_into<T: Element>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], idx: usize, g: Option<Vec<T>>) {
    let Some(g) = g else { return };
    if !nodes[idx].tracked {
        return;
    }
    match &mut grads[idx] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(d, v)| *d += v),
        slot @ None => *slot = Some(g),
    }
}

/// Visits `(source index in the (N, C*r*r, H, W) tensor, index in the (N, C, H*r, W*r) tensor)`.
fn for_each_shuffle(src: Shape, r: usize, mut f: impl FnMut(usize, usize)) {
    let c_out = src.c / (r * r);
    let (ho, wo) = (src.h * r, src.w * r);
    for n in 0..src.n {
        for c in 0..c_out {
            for i in 0..r {
                for j in 0..r {
                    let sc = c * r * r + i * r + j;
                    for h in 0..src.h {
                        for w in 0..src.w {
                            let s = src.index(n, sc, h, w);
                            let d = ((n * c_out + c) * ho + h * r + i) * wo + w * r + j;
                            f(s, d);
                        }
                    }
                }
            }
        }
    }
}

fn same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { op, lhs: a, rhs: b });
    }
    Ok(())
}

impl<T: Element> Tape<T> {
    fn shape_of(&self, v: Var) -> Result<Shape> {
        Ok(self.node(v)?.value.shape())
    }

    /// 2-D cross-correlation with symmetric zero padding.
    ///
    /// `weight` is `(out_ch, in_ch, kh, kw)`; `bias`, if any, has `out_ch` entries.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var> {
        self.conv2d_padded(input, weight, bias, stride, (padding, padding), dilation)
    }

    /// Like [`conv2d`](Self::conv2d) with separate vertical and horizontal padding.
    pub fn conv2d_padded(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        (pad_h, pad_w): (usize, usize),
        dilation: usize,
    ) -> Result<Var> {
        let geom = ConvGeom {
            stride,
            pad_h,
            pad_w,
            dilation,
        };
        let b = match bias {
            Some(b) => Some(&self.node(b)?.value),
            None => None,
        };
        let out = conv::forward(&self.node(input)?.value, &self.node(weight)?.value, b, &geom)?;
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                input: input.idx,
                weight: weight.idx,
                bias: bias.map(|b| b.idx),
                geom,
            },
        )
    }

    /// `(N, C*r*r, H, W) -> (N, C, H*r, W*r)`.
    pub fn pixel_shuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let s = self.shape_of(input)?;
        if r == 0 || s.c % (r * r) != 0 {
            return Err(Error::contract(
                "pixel_shuffle",
                format!("channel count {} is not divisible by r^2 = {}", s.c, r * r),
            ));
        }
        let x = self.value(input).data();
        let mut out = vec![T::zero(); s.numel()];
        for_each_shuffle(s, r, |src, dst| out[dst] = x[src]);
        let value = Tensor::new((s.n, s.c / (r * r), s.h * r, s.w * r), out)?;
        self.push("pixel_shuffle", value, Op::PixelShuffle { input: input.idx, r })
    }

    /// Inverse of [`pixel_shuffle`](Self::pixel_shuffle): `(N, C, H*r, W*r) -> (N, C*r*r, H, W)`.
    pub fn pixel_unshuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let s = self.shape_of(input)?;
        if r == 0 || s.h % r != 0 || s.w % r != 0 {
            return Err(Error::contract(
                "pixel_unshuffle",
                format!("spatial size {}x{} is not divisible by {r}", s.h, s.w),
            ));
        }
        let packed = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
        let x = self.value(input).data();
        let mut out = vec![T::zero(); s.numel()];
        for_each_shuffle(packed, r, |src, dst| out[src] = x[dst]);
        let value = Tensor::new(packed, out)?;
        self.push("pixel_unshuffle", value, Op::PixelUnshuffle { input: input.idx, r })
    }

    /// `(N, C, H, W) -> (N, C, 1, 1)` spatial mean.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let s = self.shape_of(input)?;
        if s.plane() == 0 {
            return Err(Error::contract("global_avg_pool", format!("empty spatial extent in {s}")));
        }
        let x = self.value(input).data();
        let inv = 1.0 / s.plane() as f64;
        let out: Vec<T> = x
            .chunks(s.plane())
            .map(|p| T::from_f64(sum_f64(p.iter().copied()) * inv).unwrap())
            .collect();
        let value = Tensor::new((s.n, s.c, 1, 1), out)?;
        self.push("global_avg_pool", value, Op::GlobalAvgPool { input: input.idx })
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, usize, usize)> {
        let (sa, sb) = (self.shape_of(a)?, self.shape_of(b)?);
        same_shape(name, sa, sb)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((Tensor::new(sa, data)?, a.idx, b.idx))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, a, b) = self.binary("add", a, b, |x, y| x + y)?;
        self.push("add", v, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, a, b) = self.binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", v, Op::Mul { a, b })
    }

    fn unary(&mut self, input: Var, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
        let x = &self.node(input)?.value;
        Tensor::new(x.shape(), x.data().iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let v = self.unary(input, |x| x.max(T::zero()))?;
        self.push("relu", v, Op::Relu { input: input.idx })
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let v = self.unary(input, |x| {
            // Branch keeps exp() from overflowing on large |x|.
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        })?;
        self.push("sigmoid", v, Op::Sigmoid { input: input.idx })
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let v = self.unary(input, |x| x * factor)?;
        self.push("scale", v, Op::Scale { input: input.idx, factor })
    }

    /// Multiplies every `(n, c)` plane of `input` by `gate[n, c]`, gate shaped `(N, C, 1, 1)`.
    pub fn scale_channels(&mut self, input: Var, gate: Var) -> Result<Var> {
        let (s, sg) = (self.shape_of(input)?, self.shape_of(gate)?);
        same_shape("scale_channels", Shape::new(s.n, s.c, 1, 1), sg)?;
        let gt = self.value(gate).data();
        let data = self
            .value(input)
            .data()
            .chunks(s.plane())
            .zip(gt)
            .flat_map(|(p, &gv)| p.iter().map(move |&x| x * gv))
            .collect();
        let v = Tensor::new(s, data)?;
        self.push(
            "scale_channels",
            v,
            Op::ScaleChannels {
                input: input.idx,
                gate: gate.idx,
            },
        )
    }

    /// Stacks F pooled `(N, C, 1, 1)` vectors into `(N, 1, F, C)` so the
    /// feature axis becomes the height axis.
    pub fn stack_pooled(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("stack_pooled", "no inputs"))?;
        let s = self.shape_of(first)?;
        if s.h != 1 || s.w != 1 {
            return Err(Error::contract("stack_pooled", format!("expected pooled (N, C, 1, 1), got {s}")));
        }
        for &v in inputs {
            same_shape("stack_pooled", s, self.shape_of(v)?)?;
        }
        let f = inputs.len();
        let out_shape = Shape::new(s.n, 1, f, s.c);
        let mut out = vec![T::zero(); out_shape.numel()];
        for (fi, &v) in inputs.iter().enumerate() {
            let x = self.value(v).data();
            for n in 0..s.n {
                for c in 0..s.c {
                    out[out_shape.index(n, 0, fi, c)] = x[n * s.c + c];
                }
            }
        }
        let v = Tensor::new(out_shape, out)?;
        self.push(
            "stack_pooled",
            v,
            Op::StackPooled {
                inputs: inputs.iter().map(|v| v.idx).collect(),
            },
        )
    }

    /// Softmax over the feature (height) axis of an `(N, 1, F, C)` tensor.
    pub fn softmax_features(&mut self, input: Var) -> Result<Var> {
        let s = self.shape_of(input)?;
        if s.c != 1 {
            return Err(Error::contract("softmax_features", format!("expected (N, 1, F, C), got {s}")));
        }
        let x = self.value(input).data();
        let mut out = vec![T::zero(); s.numel()];
        for n in 0..s.n {
            for c in 0..s.w {
                let idx = |f| s.index(n, 0, f, c);
                let max = (0..s.h).map(|f| x[idx(f)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for f in 0..s.h {
                    let e = (x[idx(f)] - max).exp();
                    out[idx(f)] = e;
                    total += e;
                }
                for f in 0..s.h {
                    out[idx(f)] = out[idx(f)] / total;
                }
            }
        }
        let v = Tensor::new(s, out)?;
        self.push("softmax_features", v, Op::SoftmaxFeatures { input: input.idx })
    }

    /// `sum_f weights[n, 0, f, c] * features[f][n, c, h, w]`.
    pub fn weighted_sum(&mut self, features: &[Var], weights: Var) -> Result<Var> {
        let first = *features
            .first()
            .ok_or_else(|| Error::contract("weighted_sum", "no features"))?;
        let s = self.shape_of(first)?;
        for &v in features {
            same_shape("weighted_sum", s, self.shape_of(v)?)?;
        }
        let ws = self.shape_of(weights)?;
        same_shape("weighted_sum weights", Shape::new(s.n, 1, features.len(), s.c), ws)?;
        let wd = self.value(weights).data();
        let plane = s.plane();
        let mut out = vec![T::zero(); s.numel()];
        for (f, &v) in features.iter().enumerate() {
            let x = self.value(v).data();
            for n in 0..s.n {
                for c in 0..s.c {
                    let wv = wd[ws.index(n, 0, f, c)];
                    let off = (n * s.c + c) * plane;
                    for (o, &xi) in out[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                        *o += wv * xi;
                    }
                }
            }
        }
        let v = Tensor::new(s, out)?;
        self.push(
            "weighted_sum",
            v,
            Op::WeightedSum {
                features: features.iter().map(|v| v.idx).collect(),
                weights: weights.idx,
            },
        )
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("concat_channels", "no inputs"))?;
        let s0 = self.shape_of(first)?;
        let mut c = 0;
        for &v in inputs {
            let s = self.shape_of(v)?;
            if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
                return Err(Error::ShapeMismatch {
                    op: "concat_channels",
                    lhs: s0,
                    rhs: s,
                });
            }
            c += s.c;
        }
        let out_shape = Shape::new(s0.n, c, s0.h, s0.w);
        let mut out = Vec::with_capacity(out_shape.numel());
        for n in 0..s0.n {
            for &v in inputs {
                let t = self.value(v);
                let item = t.shape().item();
                out.extend_from_slice(&t.data()[n * item..(n + 1) * item]);
            }
        }
        let v = Tensor::new(out_shape, out)?;
        self.push(
            "concat_channels",
            v,
            Op::ConcatChannels {
                inputs: inputs.iter().map(|v| v.idx).collect(),
            },
        )
    }

    /// Mean absolute error, or `sum(w * |a - b|) / sum(w)` with a weight map.
    /// A weight map summing to zero gives a zero loss with zero gradients.
    pub fn l1_loss(&mut self, a: Var, b: Var, weight: Option<&[T]>) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a)?, self.shape_of(b)?);
        same_shape("l1_loss", sa, sb)?;
        if let Some(w) = weight {
            if w.len() != sa.numel() {
                return Err(Error::contract(
                    "l1_loss",
                    format!("weight map has {} entries, expected {}", w.len(), sa.numel()),
                ));
            }
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let diffs = va.iter().zip(vb).map(|(&x, &y)| (x - y).abs());
        let (total, norm) = match weight {
            Some(w) => (
                sum_f64(diffs.zip(w).map(|(d, &wi)| d * wi)),
                sum_f64(w.iter().copied()),
            ),
            None => (sum_f64(diffs), sa.numel() as f64),
        };
        let loss = if norm == 0.0 { 0.0 } else { total / norm };
        let v = Tensor::scalar(T::from_f64(loss).unwrap());
        self.push(
            "l1_loss",
            v,
            Op::L1 {
                a: a.idx,
                b: b.idx,
                weight: weight.map(<[T]>::to_vec),
                norm,
            },
        )
    }

    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape_of(a)?, self.shape_of(b)?);
        same_shape("mse_loss", sa, sb)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let total = sum_f64(va.iter().zip(vb).map(|(&x, &y)| (x - y) * (x - y)));
        let v = Tensor::scalar(T::from_f64(total / sa.numel() as f64).unwrap());
        self.push("mse_loss", v, Op::Mse { a: a.idx, b: b.idx })
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        if x.numel() == 0 {
            return Err(Error::contract("mean", "empty tensor"));
        }
        let m = sum_f64(x.data().iter().copied()) / x.numel() as f64;
        let v = Tensor::scalar(T::from_f64(m).unwrap());
        self.push("mean", v, Op::Mean { input: input.idx })
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        let v = Tensor::scalar(T::from_f64(sum_f64(x.data().iter().copied())).unwrap());
        self.push("sum", v, Op::Sum { input: input.idx })
    }
}
