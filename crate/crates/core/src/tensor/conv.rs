//! im2col convolution kernels. Batch items run in parallel; weight gradients
//! are reduced in batch order so results do not depend on the thread count.

use rayon::prelude::*;

use super::{gemm, Element, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub dilation: usize,
}

/// `floor((size + 2*padding - dilation*(kernel-1) - 1) / stride) + 1`, or `None`
/// when the window does not fit.
pub fn conv_output_size(
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Option<usize> {
    let span = dilation * (kernel.checked_sub(1)?) + 1;
    let padded = size + 2 * padding;
    if padded < span || stride == 0 {
        return None;
    }
    Some((padded - span) / stride + 1)
}

#[derive(Clone, Copy)]
struct Dims {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl Dims {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn hw_out(&self) -> usize {
        self.ho * self.wo
    }
}

fn pointwise(d: &Dims, g: &ConvGeom) -> bool {
    d.kh == 1 && d.kw == 1 && g.stride == 1 && g.pad_h == 0 && g.pad_w == 0
}

/// Input row/column hit by output `o` and kernel tap `k`, if inside the image.
#[inline]
fn source(o: usize, k: usize, stride: usize, pad: usize, dilation: usize, len: usize) -> Option<usize> {
    let pos = (o * stride + k * dilation) as isize - pad as isize;
    (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
}

fn im2col<T: Element>(x: &[T], d: &Dims, g: &ConvGeom, cols: &mut [T]) {
    let hw = d.hw_out();
    for c in 0..d.c {
        let plane = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..d.ho {
                    let line = &mut dst[oy * d.wo..(oy + 1) * d.wo];
                    match source(oy, ki, g.stride, g.pad_h, g.dilation, d.h) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match source(ox, kj, g.stride, g.pad_w, g.dilation, d.w) {
                                    Some(ix) => plane[iy * d.w + ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(cols: &[T], d: &Dims, g: &ConvGeom, dx: &mut [T]) {
    let hw = d.hw_out();
    for c in 0..d.c {
        let plane = &mut dx[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..d.ho {
                    let Some(iy) = source(oy, ki, g.stride, g.pad_h, g.dilation, d.h) else {
                        continue;
                    };
                    for ox in 0..d.wo {
                        if let Some(ix) = source(ox, kj, g.stride, g.pad_w, g.dilation, d.w) {
                            plane[iy * d.w + ix] += src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn dims(input: Shape, weight: Shape, g: &ConvGeom) -> Result<Dims> {
    if weight.c != input.c {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: input,
            rhs: weight,
        });
    }
    if g.stride == 0 || g.dilation == 0 {
        return Err(Error::contract("conv2d", "stride and dilation must be at least 1"));
    }
    let ho = conv_output_size(input.h, weight.h, g.stride, g.pad_h, g.dilation);
    let wo = conv_output_size(input.w, weight.w, g.stride, g.pad_w, g.dilation);
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 && weight.n > 0 && input.n > 0 => Ok(Dims {
            c: input.c,
            h: input.h,
            w: input.w,
            kh: weight.h,
            kw: weight.w,
            ho,
            wo,
        }),
        _ => Err(Error::DegenerateGeometry {
            op: "conv2d",
            msg: format!("input {input} with kernel {weight} and {g:?} yields an empty output"),
        }),
    }
}

pub(crate) fn forward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: &ConvGeom,
) -> Result<Tensor<T>> {
    let d = dims(input.shape(), weight.shape(), g)?;
    let cout = weight.shape().n;
    if let Some(b) = bias {
        if b.numel() != cout {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: weight.shape(),
                rhs: b.shape(),
            });
        }
    }
    let (k, hw) = (d.k(), d.hw_out());
    let item = input.shape().item();
    let x = input.data();
    let w = weight.data();
    let mut out = vec![T::zero(); input.shape().n * cout * hw];
    out.par_chunks_mut(cout * hw).enumerate().for_each(|(n, y)| {
        let xn = &x[n * item..(n + 1) * item];
        let owned;
        let cols: &[T] = if pointwise(&d, g) {
            xn
        } else {
            let mut buf = vec![T::zero(); k * hw];
            im2col(xn, &d, g, &mut buf);
            owned = buf;
            &owned
        };
        gemm(cout, k, hw, (w, k, 1), (cols, hw, 1), (y, hw, 1), false);
        if let Some(b) = bias {
            for (co, row) in y.chunks_mut(hw).enumerate() {
                let bv = b.data()[co];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    Tensor::new((input.shape().n, cout, d.ho, d.wo), out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    g: &ConvGeom,
    gout: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let d = dims(input.shape(), weight.shape(), g).expect("geometry validated in forward");
    let cout = weight.shape().n;
    let (k, hw) = (d.k(), d.hw_out());
    let item = input.shape().item();
    let batch = input.shape().n;
    let x = input.data();
    let w = weight.data();

    let dinput = need.0.then(|| {
        let mut dx = vec![T::zero(); x.len()];
        dx.par_chunks_mut(item).enumerate().for_each(|(n, dxn)| {
            let go = &gout[n * cout * hw..(n + 1) * cout * hw];
            if pointwise(&d, g) {
                // dx = W^T (k x cout) @ go (cout x hw)
                gemm(k, cout, hw, (w, 1, k), (go, hw, 1), (dxn, hw, 1), false);
            } else {
                let mut cols = vec![T::zero(); k * hw];
                gemm(k, cout, hw, (w, 1, k), (go, hw, 1), (&mut cols, hw, 1), false);
                col2im(&cols, &d, g, dxn);
            }
        });
        dx
    });

    let dweight = need.1.then(|| {
        let partials: Vec<Vec<T>> = (0..batch)
            .into_par_iter()
            .map(|n| {
                let xn = &x[n * item..(n + 1) * item];
                let go = &gout[n * cout * hw..(n + 1) * cout * hw];
                let mut dw = vec![T::zero(); cout * k];
                let owned;
                let cols: &[T] = if pointwise(&d, g) {
                    xn
                } else {
                    let mut buf = vec![T::zero(); k * hw];
                    im2col(xn, &d, g, &mut buf);
                    owned = buf;
                    &owned
                };
                // dW = go (cout x hw) @ cols^T (hw x k)
                gemm(cout, hw, k, (go, hw, 1), (cols, 1, hw), (&mut dw, k, 1), false);
                dw
            })
            .collect();
        let mut total = vec![T::zero(); cout * k];
        for p in partials {
            total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
        }
        total
    });

    let dbias = need.2.then(|| {
        let mut db = vec![T::zero(); cout];
        for n in 0..batch {
            for (co, acc) in db.iter_mut().enumerate() {
                let row = &gout[(n * cout + co) * hw..(n * cout + co + 1) * hw];
                *acc += row.iter().copied().sum::<T>();
            }
        }
        db
    });

    ConvGrads {
        input: dinput,
        weight: dweight,
        bias: dbias,
    }
}
