//! Layer primitives with hand-written backward passes.
//!
//! Convolutions are 3x3 with zero padding 1 and go through im2col + GEMM.

use crate::tensor::{gemm, MatRef, Scalar, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

pub fn conv_out_size(n: usize, stride: usize) -> usize {
    (n + 2 - KERNEL) / stride + 1
}

/// Unfold a CHW input into a `(c * 9) x (oh * ow)` patch matrix.
fn im2col<T: Scalar>(input: &[T], (c, h, w): (usize, usize, usize), stride: usize) -> Vec<T> {
    let (oh, ow) = (conv_out_size(h, stride), conv_out_size(w, stride));
    let n = oh * ow;
    let mut col = vec![T::zero(); c * TAPS * n];
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ci * TAPS) + ky * KERNEL + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if stride == 1 {
                        // ix = ox + kx - 1
                        let lo = if kx == 0 { 1 } else { 0 };
                        let hi = if kx == 2 { ow - 1 } else { ow };
                        let off = kx as isize - 1;
                        for ox in lo..hi {
                            dst[ox] = src[(ox as isize + off) as usize];
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Fold a patch-matrix gradient back onto the CHW input grid.
fn col2im<T: Scalar>(col: &[T], (c, h, w): (usize, usize, usize), stride: usize) -> Vec<T> {
    let (oh, ow) = (conv_out_size(h, stride), conv_out_size(w, stride));
    let n = oh * ow;
    let mut out = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ci * TAPS) + ky * KERNEL + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `weight: [c_out, c_in, 3, 3]`, `bias: [c_out]`, input `[c_in, h, w]`.
pub fn conv_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Tensor<T> {
    let (c, h, w) = input.chw();
    let c_out = weight.shape()[0];
    debug_assert_eq!(weight.shape()[1], c);
    let (oh, ow) = (conv_out_size(h, stride), conv_out_size(w, stride));
    let n = oh * ow;
    let col = im2col(input.data(), (c, h, w), stride);
    let mut out = vec![T::zero(); c_out * n];
    for (o, b) in bias.data().iter().enumerate() {
        out[o * n..(o + 1) * n].fill(*b);
    }
    gemm(
        MatRef::row_major(weight.data(), c_out, c * TAPS),
        MatRef::row_major(&col, c * TAPS, n),
        T::one(),
        &mut out,
    );
    Tensor::from_vec(&[c_out, oh, ow], out).expect("conv output shape")
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    need_input: bool,
) -> ConvGrads<T> {
    let (c, h, w) = input.chw();
    let c_out = weight.shape()[0];
    let (_, oh, ow) = grad_out.chw();
    let n = oh * ow;
    let k = c * TAPS;
    let col = im2col(input.data(), (c, h, w), stride);
    let dy = MatRef::row_major(grad_out.data(), c_out, n);

    let mut gw = vec![T::zero(); c_out * k];
    gemm(dy, MatRef::row_major(&col, k, n).t(), T::zero(), &mut gw);
    let gb = (0..c_out)
        .map(|o| grad_out.data()[o * n..(o + 1) * n].iter().copied().sum())
        .collect();

    let gin = need_input.then(|| {
        let mut gcol = vec![T::zero(); k * n];
        gemm(
            MatRef::row_major(weight.data(), c_out, k).t(),
            dy,
            T::zero(),
            &mut gcol,
        );
        Tensor::from_vec(&[c, h, w], col2im(&gcol, (c, h, w), stride)).expect("input grad shape")
    });
    ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    }
}

/// `y = W x + b` with `W: [out, in]`.
pub fn linear_forward<T: Scalar>(weight: &Tensor<T>, bias: &Tensor<T>, x: &[T]) -> Vec<T> {
    let (rows, cols) = (weight.shape()[0], weight.shape()[1]);
    debug_assert_eq!(cols, x.len());
    let mut y = bias.data().to_vec();
    gemm(
        MatRef::row_major(weight.data(), rows, cols),
        MatRef::row_major(x, cols, 1),
        T::one(),
        &mut y,
    );
    y
}

/// Returns `(dW, db)`; the input gradient is never needed for the projection layers.
pub fn linear_backward<T: Scalar>(x: &[T], grad_y: &[T]) -> (Vec<T>, Vec<T>) {
    let mut gw = Vec::with_capacity(grad_y.len() * x.len());
    for &g in grad_y {
        gw.extend(x.iter().map(|&xi| g * xi));
    }
    (gw, grad_y.to_vec())
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
}

pub fn relu_backward_inplace<T: Scalar>(activated: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn leaky_relu_inplace<T: Scalar>(t: &mut Tensor<T>, slope: T) {
    t.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v *= slope
        }
    });
}

pub fn leaky_relu_backward_inplace<T: Scalar>(activated: &Tensor<T>, grad: &mut Tensor<T>, slope: T) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if a < T::zero() {
            *g *= slope;
        }
    }
}

pub fn tanh_inplace<T: Scalar>(t: &mut Tensor<T>) {
    t.data_mut().iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward_inplace<T: Scalar>(activated: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        *g *= T::one() - a * a;
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
