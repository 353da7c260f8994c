//! Pooling, upsampling, and the adaptive average pool used to coerce
//! mismatched tensor shapes.

use super::{Shape, TensorData};
use crate::scalar::Scalar;

/// 2x2 max pooling with stride 2. Returns the output and the flat input
/// index of each window's argmax (for gradient routing).
pub fn max_pool_2x2<T: Scalar>(input: &TensorData<T>) -> (TensorData<T>, Vec<usize>) {
    let s = input.shape;
    assert!(s.h >= 2 && s.w >= 2, "max_pool_2x2 needs h,w >= 2");
    let out_shape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = TensorData::zeros(out_shape);
    let mut argmax = vec![0usize; out_shape.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for oh in 0..out_shape.h {
                for ow in 0..out_shape.w {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0;
                    for dh in 0..2 {
                        for dw in 0..2 {
                            let idx = s.index(n, c, oh * 2 + dh, ow * 2 + dw);
                            if input.data[idx] > best {
                                best = input.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oi = out_shape.index(n, c, oh, ow);
                    out.data[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

pub fn max_pool_2x2_backward<T: Scalar>(
    input_shape: Shape,
    argmax: &[usize],
    grad_out: &TensorData<T>,
) -> TensorData<T> {
    let mut gin = TensorData::zeros(input_shape);
    for (oi, &ii) in argmax.iter().enumerate() {
        gin.data[ii] += grad_out.data[oi];
    }
    gin
}

/// Nearest-neighbour 2x upscaling: each pixel becomes a 2x2 block.
pub fn upsample_nn_2x<T: Scalar>(input: &TensorData<T>) -> TensorData<T> {
    let s = input.shape;
    let out_shape = Shape::new(s.n, s.c, s.h * 2, s.w * 2);
    let mut out = TensorData::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for w in 0..s.w {
                    let v = input.at(n, c, h, w);
                    for dh in 0..2 {
                        for dw in 0..2 {
                            *out.at_mut(n, c, h * 2 + dh, w * 2 + dw) = v;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn upsample_nn_2x_backward<T: Scalar>(
    input_shape: Shape,
    grad_out: &TensorData<T>,
) -> TensorData<T> {
    let mut gin = TensorData::zeros(input_shape);
    for n in 0..input_shape.n {
        for c in 0..input_shape.c {
            for h in 0..input_shape.h {
                for w in 0..input_shape.w {
                    let mut acc = T::zero();
                    for dh in 0..2 {
                        for dw in 0..2 {
                            acc += grad_out.at(n, c, h * 2 + dh, w * 2 + dw);
                        }
                    }
                    *gin.at_mut(n, c, h, w) += acc;
                }
            }
        }
    }
    gin
}

/// Per-axis index windows for the adaptive pool. Downsampling (or equal
/// sizes) uses the boundary rule [floor(i*In/Out), ceil((i+1)*In/Out));
/// upsampling along an axis falls back to nearest-neighbour index mapping.
pub fn axis_windows(input_len: usize, output_len: usize) -> Vec<(usize, usize)> {
    (0..output_len)
        .map(|i| {
            if output_len > input_len {
                let idx = i * input_len / output_len;
                (idx, idx + 1)
            } else {
                let start = i * input_len / output_len;
                let end = ((i + 1) * input_len).div_ceil(output_len);
                (start, end)
            }
        })
        .collect()
}

/// Windows for all three pooled axes of one coercion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolWindows {
    pub c: Vec<(usize, usize)>,
    pub h: Vec<(usize, usize)>,
    pub w: Vec<(usize, usize)>,
}

impl PoolWindows {
    pub fn new(input: Shape, target: (usize, usize, usize)) -> Self {
        PoolWindows {
            c: axis_windows(input.c, target.0),
            h: axis_windows(input.h, target.1),
            w: axis_windows(input.w, target.2),
        }
    }
}

/// Adaptive average pooling over (channels, height, width); coerces an
/// input of any shape to the target shape.
pub fn adaptive_avg_pool3d<T: Scalar>(
    input: &TensorData<T>,
    target: (usize, usize, usize),
) -> (TensorData<T>, PoolWindows) {
    let windows = PoolWindows::new(input.shape, target);
    let out_shape = Shape::new(input.shape.n, target.0, target.1, target.2);
    let mut out = TensorData::zeros(out_shape);
    for n in 0..out_shape.n {
        for (oc, &(c0, c1)) in windows.c.iter().enumerate() {
            for (oh, &(h0, h1)) in windows.h.iter().enumerate() {
                for (ow, &(w0, w1)) in windows.w.iter().enumerate() {
                    let mut acc = T::zero();
                    for c in c0..c1 {
                        for h in h0..h1 {
                            for w in w0..w1 {
                                acc += input.at(n, c, h, w);
                            }
                        }
                    }
                    let count = (c1 - c0) * (h1 - h0) * (w1 - w0);
                    *out.at_mut(n, oc, oh, ow) = acc / crate::scalar::lit(count as f64);
                }
            }
        }
    }
    (out, windows)
}

pub fn adaptive_avg_pool3d_backward<T: Scalar>(
    input_shape: Shape,
    windows: &PoolWindows,
    grad_out: &TensorData<T>,
) -> TensorData<T> {
    let mut gin = TensorData::zeros(input_shape);
    for n in 0..grad_out.shape.n {
        for (oc, &(c0, c1)) in windows.c.iter().enumerate() {
            for (oh, &(h0, h1)) in windows.h.iter().enumerate() {
                for (ow, &(w0, w1)) in windows.w.iter().enumerate() {
                    let count = (c1 - c0) * (h1 - h0) * (w1 - w0);
                    let share = grad_out.at(n, oc, oh, ow) / crate::scalar::lit(count as f64);
                    for c in c0..c1 {
                        for h in h0..h1 {
                            for w in w0..w1 {
                                *gin.at_mut(n, c, h, w) += share;
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}
