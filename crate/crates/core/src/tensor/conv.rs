//! Direct-summation convolution kernels (regular, transposed, grouped).
//!
//! Weight layouts follow the usual convention: regular convs are
//! `[out_c, in_c/groups, k, k]`, transposed convs are
//! `[in_c, out_c/groups, k, k]`.

use super::{Shape, TensorData};
use crate::scalar::Scalar;

/// A convolution with every hyperparameter resolved to concrete numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedConv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub transposed: bool,
    pub groups: usize,
}

impl ResolvedConv {
    /// Same-style padding, (k-1)/2 on every side.
    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Output padding for transposed convs: 1 at stride 2, 0 otherwise.
    pub fn output_padding(&self) -> usize {
        if self.transposed && self.stride == 2 {
            1
        } else {
            0
        }
    }

    pub fn weight_shape(&self) -> Shape {
        if self.transposed {
            Shape::new(
                self.in_channels,
                self.out_channels / self.groups,
                self.kernel,
                self.kernel,
            )
        } else {
            Shape::new(
                self.out_channels,
                self.in_channels / self.groups,
                self.kernel,
                self.kernel,
            )
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel;
        let s = self.stride;
        let p = self.padding();
        if self.transposed {
            let op = self.output_padding();
            ((h - 1) * s + k - 2 * p + op, (w - 1) * s + k - 2 * p + op)
        } else {
            ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1)
        }
    }

    pub fn out_shape(&self, input: Shape) -> Shape {
        let (oh, ow) = self.out_spatial(input.h, input.w);
        Shape::new(input.n, self.out_channels, oh, ow)
    }
}

pub fn forward<T: Scalar>(
    input: &TensorData<T>,
    weights: &TensorData<T>,
    bias: Option<&TensorData<T>>,
    rc: &ResolvedConv,
) -> TensorData<T> {
    if rc.transposed {
        forward_transposed(input, weights, bias, rc)
    } else {
        forward_regular(input, weights, bias, rc)
    }
}

fn forward_regular<T: Scalar>(
    input: &TensorData<T>,
    weights: &TensorData<T>,
    bias: Option<&TensorData<T>>,
    rc: &ResolvedConv,
) -> TensorData<T> {
    let out_shape = rc.out_shape(input.shape);
    let mut out = TensorData::zeros(out_shape);
    let k = rc.kernel;
    let s = rc.stride;
    let p = rc.padding() as isize;
    let icg = rc.in_channels / rc.groups;
    let ocg = rc.out_channels / rc.groups;
    for n in 0..input.shape.n {
        for g in 0..rc.groups {
            for ocl in 0..ocg {
                let oc = g * ocg + ocl;
                for oh in 0..out_shape.h {
                    for ow in 0..out_shape.w {
                        let mut acc = T::zero();
                        for icl in 0..icg {
                            let ic = g * icg + icl;
                            for kh in 0..k {
                                let ih = (oh * s + kh) as isize - p;
                                if ih < 0 || ih >= input.shape.h as isize {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * s + kw) as isize - p;
                                    if iw < 0 || iw >= input.shape.w as isize {
                                        continue;
                                    }
                                    acc += input.at(n, ic, ih as usize, iw as usize)
                                        * weights.at(oc, icl, kh, kw);
                                }
                            }
                        }
                        if let Some(b) = bias {
                            acc += b.data[oc];
                        }
                        *out.at_mut(n, oc, oh, ow) = acc;
                    }
                }
            }
        }
    }
    out
}

fn forward_transposed<T: Scalar>(
    input: &TensorData<T>,
    weights: &TensorData<T>,
    bias: Option<&TensorData<T>>,
    rc: &ResolvedConv,
) -> TensorData<T> {
    let out_shape = rc.out_shape(input.shape);
    let mut out = TensorData::zeros(out_shape);
    let k = rc.kernel;
    let s = rc.stride;
    let p = rc.padding() as isize;
    let icg = rc.in_channels / rc.groups;
    let ocg = rc.out_channels / rc.groups;
    for n in 0..input.shape.n {
        for g in 0..rc.groups {
            for icl in 0..icg {
                let ic = g * icg + icl;
                for ih in 0..input.shape.h {
                    for iw in 0..input.shape.w {
                        let x = input.at(n, ic, ih, iw);
                        for ocl in 0..ocg {
                            let oc = g * ocg + ocl;
                            for kh in 0..k {
                                let oh = (ih * s + kh) as isize - p;
                                if oh < 0 || oh >= out_shape.h as isize {
                                    continue;
                                }
                                for kw in 0..k {
                                    let ow = (iw * s + kw) as isize - p;
                                    if ow < 0 || ow >= out_shape.w as isize {
                                        continue;
                                    }
                                    *out.at_mut(n, oc, oh as usize, ow as usize) +=
                                        x * weights.at(ic, ocl, kh, kw);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(b) = bias {
        for n in 0..out_shape.n {
            for oc in 0..out_shape.c {
                for oh in 0..out_shape.h {
                    for ow in 0..out_shape.w {
                        *out.at_mut(n, oc, oh, ow) += b.data[oc];
                    }
                }
            }
        }
    }
    out
}

/// Gradients w.r.t. input, weights, and (optionally) bias.
pub fn backward<T: Scalar>(
    input: &TensorData<T>,
    weights: &TensorData<T>,
    grad_out: &TensorData<T>,
    has_bias: bool,
    rc: &ResolvedConv,
) -> (TensorData<T>, TensorData<T>, Option<TensorData<T>>) {
    let mut gin = TensorData::zeros(input.shape);
    let mut gw = TensorData::zeros(weights.shape);
    let k = rc.kernel;
    let s = rc.stride;
    let p = rc.padding() as isize;
    let icg = rc.in_channels / rc.groups;
    let ocg = rc.out_channels / rc.groups;
    let oshape = grad_out.shape;

    if rc.transposed {
        for n in 0..input.shape.n {
            for g in 0..rc.groups {
                for icl in 0..icg {
                    let ic = g * icg + icl;
                    for ih in 0..input.shape.h {
                        for iw in 0..input.shape.w {
                            let x = input.at(n, ic, ih, iw);
                            let mut gacc = T::zero();
                            for ocl in 0..ocg {
                                let oc = g * ocg + ocl;
                                for kh in 0..k {
                                    let oh = (ih * s + kh) as isize - p;
                                    if oh < 0 || oh >= oshape.h as isize {
                                        continue;
                                    }
                                    for kw in 0..k {
                                        let ow = (iw * s + kw) as isize - p;
                                        if ow < 0 || ow >= oshape.w as isize {
                                            continue;
                                        }
                                        let go = grad_out.at(n, oc, oh as usize, ow as usize);
                                        gacc += go * weights.at(ic, ocl, kh, kw);
                                        *gw.at_mut(ic, ocl, kh, kw) += x * go;
                                    }
                                }
                            }
                            *gin.at_mut(n, ic, ih, iw) += gacc;
                        }
                    }
                }
            }
        }
    } else {
        for n in 0..input.shape.n {
            for g in 0..rc.groups {
                for ocl in 0..ocg {
                    let oc = g * ocg + ocl;
                    for oh in 0..oshape.h {
                        for ow in 0..oshape.w {
                            let go = grad_out.at(n, oc, oh, ow);
                            for icl in 0..icg {
                                let ic = g * icg + icl;
                                for kh in 0..k {
                                    let ih = (oh * s + kh) as isize - p;
                                    if ih < 0 || ih >= input.shape.h as isize {
                                        continue;
                                    }
                                    for kw in 0..k {
                                        let iw = (ow * s + kw) as isize - p;
                                        if iw < 0 || iw >= input.shape.w as isize {
                                            continue;
                                        }
                                        let x = input.at(n, ic, ih as usize, iw as usize);
                                        *gin.at_mut(n, ic, ih as usize, iw as usize) +=
                                            go * weights.at(oc, icl, kh, kw);
                                        *gw.at_mut(oc, icl, kh, kw) += x * go;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let gbias = if has_bias {
        let mut gb = TensorData::zeros(Shape::new(1, grad_out.shape.c, 1, 1));
        for n in 0..oshape.n {
            for oc in 0..oshape.c {
                for oh in 0..oshape.h {
                    for ow in 0..oshape.w {
                        gb.data[oc] += grad_out.at(n, oc, oh, ow);
                    }
                }
            }
        }
        Some(gb)
    } else {
        None
    };

    (gin, gw, gbias)
}
