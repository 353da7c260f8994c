//! Normalisation layers: batch norm, instance norm, local response norm,
//! and channelwise softmax.

use super::{Shape, TensorData};
use crate::scalar::{lit, Scalar};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LRN_ALPHA: f64 = 1e-4;
pub const LRN_BETA: f64 = 0.75;
pub const LRN_K: f64 = 1.0;

/// Saved per-channel statistics from a batch-norm forward pass.
#[derive(Clone, Debug)]
pub struct BnSaved<T> {
    pub mean: Vec<T>,
    pub invstd: Vec<T>,
    pub xhat: TensorData<T>,
    pub training: bool,
}

/// Running mean/variance buffers carried between iterations.
#[derive(Clone, Debug)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Batch norm over (batch, h, w) per channel. In training mode the batch
/// statistics are used and the running stats updated in place.
pub fn batch_norm_forward<T: Scalar>(
    input: &TensorData<T>,
    scale: &TensorData<T>,
    shift: &TensorData<T>,
    running: &mut RunningStats<T>,
    training: bool,
) -> (TensorData<T>, BnSaved<T>) {
    let s = input.shape;
    let m = (s.n * s.h * s.w) as f64;
    let eps = lit::<T>(BN_EPS);
    let mut mean = vec![T::zero(); s.c];
    let mut invstd = vec![T::zero(); s.c];
    if training {
        for c in 0..s.c {
            let mut sum = T::zero();
            for n in 0..s.n {
                for h in 0..s.h {
                    for w in 0..s.w {
                        sum += input.at(n, c, h, w);
                    }
                }
            }
            let mu = sum / lit(m);
            let mut var = T::zero();
            for n in 0..s.n {
                for h in 0..s.h {
                    for w in 0..s.w {
                        let d = input.at(n, c, h, w) - mu;
                        var += d * d;
                    }
                }
            }
            var = var / lit(m);
            mean[c] = mu;
            invstd[c] = (var + eps).sqrt().recip();
            let mom = lit::<T>(BN_MOMENTUM);
            let unbiased = if m > 1.0 {
                var * lit(m / (m - 1.0))
            } else {
                var
            };
            running.mean[c] = (T::one() - mom) * running.mean[c] + mom * mu;
            running.var[c] = (T::one() - mom) * running.var[c] + mom * unbiased;
        }
    } else {
        for c in 0..s.c {
            mean[c] = running.mean[c];
            invstd[c] = (running.var[c] + eps).sqrt().recip();
        }
    }
    let mut xhat = TensorData::zeros(s);
    let mut out = TensorData::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for w in 0..s.w {
                    let xh = (input.at(n, c, h, w) - mean[c]) * invstd[c];
                    *xhat.at_mut(n, c, h, w) = xh;
                    *out.at_mut(n, c, h, w) = scale.data[c] * xh + shift.data[c];
                }
            }
        }
    }
    (
        out,
        BnSaved {
            mean,
            invstd,
            xhat,
            training,
        },
    )
}

/// Returns (grad_input, grad_scale, grad_shift).
pub fn batch_norm_backward<T: Scalar>(
    scale: &TensorData<T>,
    saved: &BnSaved<T>,
    grad_out: &TensorData<T>,
) -> (TensorData<T>, TensorData<T>, TensorData<T>) {
    let s = grad_out.shape;
    let m = lit::<T>((s.n * s.h * s.w) as f64);
    let mut gin = TensorData::zeros(s);
    let mut gscale = TensorData::zeros(Shape::new(1, s.c, 1, 1));
    let mut gshift = TensorData::zeros(Shape::new(1, s.c, 1, 1));
    for c in 0..s.c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    let g = grad_out.at(n, c, h, w);
                    sum_g += g;
                    sum_gx += g * saved.xhat.at(n, c, h, w);
                }
            }
        }
        gscale.data[c] = sum_gx;
        gshift.data[c] = sum_g;
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    let g = grad_out.at(n, c, h, w) * scale.data[c];
                    let gi = if saved.training {
                        saved.invstd[c]
                            * (g - (scale.data[c] / m) * (sum_g + saved.xhat.at(n, c, h, w) * sum_gx))
                    } else {
                        g * saved.invstd[c]
                    };
                    *gin.at_mut(n, c, h, w) = gi;
                }
            }
        }
    }
    (gin, gscale, gshift)
}

/// Saved per-(sample, channel) statistics from instance norm.
#[derive(Clone, Debug)]
pub struct InSaved<T> {
    pub invstd: Vec<T>,
    pub xhat: TensorData<T>,
}

/// Instance norm: per (sample, channel), no affine parameters.
pub fn instance_norm_forward<T: Scalar>(input: &TensorData<T>) -> (TensorData<T>, InSaved<T>) {
    let s = input.shape;
    let m = lit::<T>((s.h * s.w) as f64);
    let eps = lit::<T>(BN_EPS);
    let mut invstd = vec![T::zero(); s.n * s.c];
    let mut xhat = TensorData::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let mut sum = T::zero();
            for h in 0..s.h {
                for w in 0..s.w {
                    sum += input.at(n, c, h, w);
                }
            }
            let mu = sum / m;
            let mut var = T::zero();
            for h in 0..s.h {
                for w in 0..s.w {
                    let d = input.at(n, c, h, w) - mu;
                    var += d * d;
                }
            }
            var = var / m;
            let is = (var + eps).sqrt().recip();
            invstd[n * s.c + c] = is;
            for h in 0..s.h {
                for w in 0..s.w {
                    *xhat.at_mut(n, c, h, w) = (input.at(n, c, h, w) - mu) * is;
                }
            }
        }
    }
    let out = xhat.clone();
    (out, InSaved { invstd, xhat })
}

pub fn instance_norm_backward<T: Scalar>(
    saved: &InSaved<T>,
    grad_out: &TensorData<T>,
) -> TensorData<T> {
    let s = grad_out.shape;
    let m = lit::<T>((s.h * s.w) as f64);
    let mut gin = TensorData::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for h in 0..s.h {
                for w in 0..s.w {
                    let g = grad_out.at(n, c, h, w);
                    sum_g += g;
                    sum_gx += g * saved.xhat.at(n, c, h, w);
                }
            }
            let is = saved.invstd[n * s.c + c];
            for h in 0..s.h {
                for w in 0..s.w {
                    let g = grad_out.at(n, c, h, w);
                    *gin.at_mut(n, c, h, w) =
                        is * (g - (sum_g + saved.xhat.at(n, c, h, w) * sum_gx) / m);
                }
            }
        }
    }
    gin
}

fn lrn_window(c: usize, channels: usize, size: usize) -> (usize, usize) {
    let lo = c.saturating_sub((size - 1) / 2);
    let hi = (c + size / 2 + 1).min(channels);
    (lo, hi)
}

/// Local response normalisation across channels, PyTorch semantics:
/// b_c = a_c / (k + alpha/size * sum_{j in window} a_j^2)^beta.
pub fn lrn_forward<T: Scalar>(input: &TensorData<T>, size: usize) -> TensorData<T> {
    let s = input.shape;
    let alpha = lit::<T>(LRN_ALPHA);
    let beta = lit::<T>(LRN_BETA);
    let k = lit::<T>(LRN_K);
    let scale = alpha / lit(size as f64);
    let mut out = TensorData::zeros(s);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                for c in 0..s.c {
                    let (lo, hi) = lrn_window(c, s.c, size);
                    let mut sq = T::zero();
                    for j in lo..hi {
                        let a = input.at(n, j, h, w);
                        sq += a * a;
                    }
                    let d = k + scale * sq;
                    *out.at_mut(n, c, h, w) = input.at(n, c, h, w) * d.powf(-beta);
                }
            }
        }
    }
    out
}

pub fn lrn_backward<T: Scalar>(
    input: &TensorData<T>,
    grad_out: &TensorData<T>,
    size: usize,
) -> TensorData<T> {
    let s = input.shape;
    let alpha = lit::<T>(LRN_ALPHA);
    let beta = lit::<T>(LRN_BETA);
    let k = lit::<T>(LRN_K);
    let scale = alpha / lit(size as f64);
    let mut gin = TensorData::zeros(s);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                // Denominators for every channel at this pixel.
                let denoms: Vec<T> = (0..s.c)
                    .map(|c| {
                        let (lo, hi) = lrn_window(c, s.c, size);
                        let mut sq = T::zero();
                        for j in lo..hi {
                            let a = input.at(n, j, h, w);
                            sq += a * a;
                        }
                        k + scale * sq
                    })
                    .collect();
                for m in 0..s.c {
                    let mut acc = grad_out.at(n, m, h, w) * denoms[m].powf(-beta);
                    let am = input.at(n, m, h, w);
                    for c in 0..s.c {
                        let (lo, hi) = lrn_window(c, s.c, size);
                        if m < lo || m >= hi {
                            continue;
                        }
                        let ac = input.at(n, c, h, w);
                        acc = acc
                            - lit::<T>(2.0)
                                * scale
                                * beta
                                * am
                                * grad_out.at(n, c, h, w)
                                * ac
                                * denoms[c].powf(-beta - T::one());
                    }
                    *gin.at_mut(n, m, h, w) = acc;
                }
            }
        }
    }
    gin
}

/// Softmax across the channel axis at every pixel.
pub fn softmax_channels_forward<T: Scalar>(input: &TensorData<T>) -> TensorData<T> {
    let s = input.shape;
    let mut out = TensorData::zeros(s);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                let mut max = T::neg_infinity();
                for c in 0..s.c {
                    max = max.max(input.at(n, c, h, w));
                }
                let mut sum = T::zero();
                for c in 0..s.c {
                    let e = (input.at(n, c, h, w) - max).exp();
                    *out.at_mut(n, c, h, w) = e;
                    sum += e;
                }
                for c in 0..s.c {
                    *out.at_mut(n, c, h, w) = out.at(n, c, h, w) / sum;
                }
            }
        }
    }
    out
}

pub fn softmax_channels_backward<T: Scalar>(
    output: &TensorData<T>,
    grad_out: &TensorData<T>,
) -> TensorData<T> {
    let s = output.shape;
    let mut gin = TensorData::zeros(s);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                let mut dot = T::zero();
                for c in 0..s.c {
                    dot += grad_out.at(n, c, h, w) * output.at(n, c, h, w);
                }
                for c in 0..s.c {
                    *gin.at_mut(n, c, h, w) =
                        output.at(n, c, h, w) * (grad_out.at(n, c, h, w) - dot);
                }
            }
        }
    }
    gin
}
