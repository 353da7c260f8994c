//! Wengert-list reverse-mode tape over `TensorData`.
//!
//! Ops push a node holding the forward value plus whatever the backward
//! pass needs. A tape is an owned, single-threaded value; distinct tapes
//! may live on distinct threads.

use super::conv::{self, ResolvedConv};
use super::norm::{self, BnSaved, InSaved, RunningStats};
use super::pool::{self, PoolWindows};
use super::{Shape, TensorData, TensorError};
use crate::scalar::{lit, Scalar};
use serde::{Deserialize, Serialize};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    None,
    Relu,
    PRelu,
    Elu,
    Selu,
    Tanh,
    Sigmoid,
    SoftmaxChannels,
}

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;
pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnectiveKind {
    Concat,
    Add,
    Mul,
}

/// Which of the two connective inputs keeps its shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResizeTarget {
    First,
    Second,
}

/// Maps each weight element to the output filter it belongs to, for
/// per-filter weight normalisation.
#[derive(Clone, Debug)]
pub struct FilterMap {
    pub num_filters: usize,
    pub map: Vec<usize>,
}

impl FilterMap {
    pub fn for_conv(rc: &ResolvedConv) -> Self {
        let ws = rc.weight_shape();
        let k2 = ws.h * ws.w;
        let mut map = vec![0usize; ws.len()];
        if rc.transposed {
            let ocg = rc.out_channels / rc.groups;
            let icg = rc.in_channels / rc.groups;
            for (i, slot) in map.iter_mut().enumerate() {
                let ic = i / (ocg * k2);
                let ocl = (i / k2) % ocg;
                *slot = (ic / icg) * ocg + ocl;
            }
        } else {
            let per_filter = ws.c * k2;
            for (i, slot) in map.iter_mut().enumerate() {
                *slot = i / per_filter;
            }
        }
        FilterMap {
            num_filters: rc.out_channels,
            map,
        }
    }
}

enum Op<T: Scalar> {
    Leaf,
    Conv {
        input: Var,
        weights: Var,
        bias: Option<Var>,
        rc: ResolvedConv,
    },
    WeightNorm {
        v: Var,
        g: Var,
        filters: FilterMap,
    },
    Activation {
        input: Var,
        kind: ActivationKind,
        slope: Option<Var>,
    },
    SoftmaxChannels {
        input: Var,
    },
    BatchNorm {
        scale: Var,
        shift: Var,
        input: Var,
        saved: BnSaved<T>,
    },
    InstanceNorm {
        input: Var,
        saved: InSaved<T>,
    },
    Lrn {
        input: Var,
        size: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        input: Var,
    },
    AdaptivePool {
        input: Var,
        windows: PoolWindows,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
}

pub struct Tape<T: Scalar> {
    values: Vec<TensorData<T>>,
    ops: Vec<Op<T>>,
    grads: Vec<Option<TensorData<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &TensorData<T> {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&TensorData<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: TensorData<T>, op: Op<T>) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: TensorData<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weights: Var,
        bias: Option<Var>,
        rc: ResolvedConv,
    ) -> Result<Var, TensorError> {
        let inp = self.value(input);
        if inp.shape.c != rc.in_channels {
            return Err(TensorError::Shape(format!(
                "conv2d expected {} input channels, got {}",
                rc.in_channels, inp.shape.c
            )));
        }
        let w = self.value(weights);
        if w.shape != rc.weight_shape() {
            return Err(TensorError::Shape(format!(
                "conv2d weight shape {} does not match spec {}",
                w.shape,
                rc.weight_shape()
            )));
        }
        if !w.all_finite() {
            return Err(TensorError::NonFinite("conv2d weights"));
        }
        let out = conv::forward(inp, w, bias.map(|b| self.value(b)), &rc);
        Ok(self.push(
            out,
            Op::Conv {
                input,
                weights,
                bias,
                rc,
            },
        ))
    }

    /// Effective weights g * v / ||v|| per output filter.
    pub fn weight_norm(&mut self, v: Var, g: Var, filters: FilterMap) -> Var {
        let (norms, _) = filter_norms(self.value(v), &filters);
        let vd = self.value(v);
        let gd = self.value(g);
        let mut out = TensorData::zeros(vd.shape);
        for (i, &f) in filters.map.iter().enumerate() {
            out.data[i] = gd.data[f] * vd.data[i] / norms[f];
        }
        self.push(out, Op::WeightNorm { v, g, filters })
    }

    pub fn activation(
        &mut self,
        input: Var,
        kind: ActivationKind,
        slope: Option<Var>,
    ) -> Result<Var, TensorError> {
        if kind == ActivationKind::SoftmaxChannels {
            return Ok(self.softmax_channels(input));
        }
        if kind == ActivationKind::PRelu && slope.is_none() {
            return Err(TensorError::Shape("PReLU requires a slope parameter".into()));
        }
        let a = slope.map(|s| self.value(s).data[0]);
        let out = activation_forward(self.value(input), kind, a);
        Ok(self.push(out, Op::Activation { input, kind, slope }))
    }

    pub fn softmax_channels(&mut self, input: Var) -> Var {
        let out = norm::softmax_channels_forward(self.value(input));
        self.push(out, Op::SoftmaxChannels { input })
    }

    pub fn batch_norm(
        &mut self,
        input: Var,
        scale: Var,
        shift: Var,
        running: &mut RunningStats<T>,
        training: bool,
    ) -> Result<Var, TensorError> {
        let c = self.value(input).shape.c;
        if self.value(scale).shape.c != c || self.value(shift).shape.c != c {
            return Err(TensorError::Shape(format!(
                "batch norm affine params must have {} channels",
                c
            )));
        }
        let (out, saved) = norm::batch_norm_forward(
            self.value(input),
            self.value(scale),
            self.value(shift),
            running,
            training,
        );
        Ok(self.push(
            out,
            Op::BatchNorm {
                scale,
                shift,
                input,
                saved,
            },
        ))
    }

    pub fn instance_norm(&mut self, input: Var) -> Var {
        let (out, saved) = norm::instance_norm_forward(self.value(input));
        self.push(out, Op::InstanceNorm { input, saved })
    }

    /// LRN with size = channel count of the input.
    pub fn local_response_norm(&mut self, input: Var) -> Var {
        let size = self.value(input).shape.c.max(1);
        let out = norm::lrn_forward(self.value(input), size);
        self.push(out, Op::Lrn { input, size })
    }

    pub fn max_pool_2x2(&mut self, input: Var) -> Result<Var, TensorError> {
        let s = self.value(input).shape;
        if s.h < 2 || s.w < 2 {
            return Err(TensorError::Shape(format!(
                "max_pool_2x2 needs h,w >= 2, got {}",
                s
            )));
        }
        let (out, argmax) = pool::max_pool_2x2(self.value(input));
        Ok(self.push(out, Op::MaxPool { input, argmax }))
    }

    pub fn upsample_nn_2x(&mut self, input: Var) -> Var {
        let out = pool::upsample_nn_2x(self.value(input));
        self.push(out, Op::Upsample { input })
    }

    pub fn adaptive_avg_pool3d(&mut self, input: Var, target: (usize, usize, usize)) -> Var {
        let (out, windows) = pool::adaptive_avg_pool3d(self.value(input), target);
        self.push(out, Op::AdaptivePool { input, windows })
    }

    /// Two-input connective with shape coercion: the non-target input is
    /// adaptively pooled to the target's shape (Concat coerces only the
    /// spatial axes and stacks channels).
    pub fn connective(
        &mut self,
        kind: ConnectiveKind,
        a: Var,
        b: Var,
        resize: ResizeTarget,
    ) -> Result<Var, TensorError> {
        let sa = self.value(a).shape;
        let sb = self.value(b).shape;
        if sa.n != sb.n {
            return Err(TensorError::Shape(format!(
                "connective batch mismatch: {} vs {}",
                sa, sb
            )));
        }
        let (target_shape, fixed, moving) = match resize {
            ResizeTarget::First => (sa, a, b),
            ResizeTarget::Second => (sb, b, a),
        };
        let moving_shape = self.value(moving).shape;
        let goal = match kind {
            ConnectiveKind::Concat => (moving_shape.c, target_shape.h, target_shape.w),
            _ => target_shape.chw(),
        };
        let coerced = if moving_shape.chw() == goal {
            moving
        } else {
            self.adaptive_avg_pool3d(moving, goal)
        };
        let (a2, b2) = match resize {
            ResizeTarget::First => (fixed, coerced),
            ResizeTarget::Second => (coerced, fixed),
        };
        Ok(match kind {
            ConnectiveKind::Concat => self.concat(a2, b2),
            ConnectiveKind::Add => self.add(a2, b2),
            ConnectiveKind::Mul => self.mul(a2, b2),
        })
    }

    fn concat(&mut self, a: Var, b: Var) -> Var {
        let sa = self.value(a).shape;
        let sb = self.value(b).shape;
        debug_assert!(sa.h == sb.h && sa.w == sb.w && sa.n == sb.n);
        let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let mut out = TensorData::zeros(out_shape);
        for n in 0..sa.n {
            for c in 0..out_shape.c {
                for h in 0..sa.h {
                    for w in 0..sa.w {
                        *out.at_mut(n, c, h, w) = if c < sa.c {
                            self.values[a.0].at(n, c, h, w)
                        } else {
                            self.values[b.0].at(n, c - sa.c, h, w)
                        };
                    }
                }
            }
        }
        self.push(out, Op::Concat { a, b })
    }

    fn add(&mut self, a: Var, b: Var) -> Var {
        let va = &self.values[a.0];
        let vb = &self.values[b.0];
        debug_assert_eq!(va.shape, vb.shape);
        let data = va
            .data
            .iter()
            .zip(&vb.data)
            .map(|(&x, &y)| x + y)
            .collect();
        let out = TensorData::from_vec(va.shape, data);
        self.push(out, Op::Add { a, b })
    }

    fn mul(&mut self, a: Var, b: Var) -> Var {
        let va = &self.values[a.0];
        let vb = &self.values[b.0];
        debug_assert_eq!(va.shape, vb.shape);
        let data = va
            .data
            .iter()
            .zip(&vb.data)
            .map(|(&x, &y)| x * y)
            .collect();
        let out = TensorData::from_vec(va.shape, data);
        self.push(out, Op::Mul { a, b })
    }

    /// Mean squared error over all elements; output is a 1-element tensor.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let sp = self.value(pred).shape;
        let st = self.value(target).shape;
        if sp != st {
            return Err(TensorError::Shape(format!(
                "mse_loss shape mismatch: {} vs {}",
                sp, st
            )));
        }
        let n = lit::<T>(sp.len() as f64);
        let sum: T = self.values[pred.0]
            .data
            .iter()
            .zip(&self.values[target.0].data)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let out = TensorData::from_vec(Shape::new(1, 1, 1, 1), vec![sum / n]);
        Ok(self.push(out, Op::Mse { pred, target }))
    }

    fn accumulate(&mut self, v: Var, delta: TensorData<T>) {
        match &mut self.grads[v.0] {
            Some(g) => {
                for (gi, di) in g.data.iter_mut().zip(delta.data) {
                    *gi += di;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse pass from `loss` (any node; seeded with ones).
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if !self.values[loss.0].all_finite() {
            return Err(TensorError::NonFinite("loss"));
        }
        self.grads = vec![None; self.values.len()];
        self.grads[loss.0] = Some(TensorData::filled(self.values[loss.0].shape, T::one()));
        for i in (0..=loss.0).rev() {
            let Some(gout) = self.grads[i].clone() else {
                continue;
            };
            // Ops are read back out to appease the borrow checker; each is
            // restored untouched.
            let op = std::mem::replace(&mut self.ops[i], Op::Leaf);
            match &op {
                Op::Leaf => {}
                Op::Conv {
                    input,
                    weights,
                    bias,
                    rc,
                } => {
                    let (gin, gw, gb) = conv::backward(
                        &self.values[input.0],
                        &self.values[weights.0],
                        &gout,
                        bias.is_some(),
                        rc,
                    );
                    self.accumulate(*input, gin);
                    self.accumulate(*weights, gw);
                    if let (Some(b), Some(gb)) = (bias, gb) {
                        self.accumulate(*b, gb);
                    }
                }
                Op::WeightNorm { v, g, filters } => {
                    let (norms, dots) = filter_norms_with_grad(
                        &self.values[v.0],
                        &gout,
                        filters,
                    );
                    let vd = &self.values[v.0];
                    let gd = &self.values[g.0];
                    let mut gv = TensorData::zeros(vd.shape);
                    let mut gg = TensorData::zeros(gd.shape);
                    for (i, &f) in filters.map.iter().enumerate() {
                        let vhat = vd.data[i] / norms[f];
                        gv.data[i] = gd.data[f] / norms[f] * (gout.data[i] - vhat * dots[f]);
                    }
                    for f in 0..filters.num_filters {
                        gg.data[f] = dots[f];
                    }
                    self.accumulate(*v, gv);
                    self.accumulate(*g, gg);
                }
                Op::Activation { input, kind, slope } => {
                    let a = slope.map(|s| self.values[s.0].data[0]);
                    let x = &self.values[input.0];
                    let mut gin = TensorData::zeros(x.shape);
                    let mut gslope = T::zero();
                    for j in 0..x.data.len() {
                        let (d, ds) = activation_derivative(x.data[j], *kind, a);
                        gin.data[j] = gout.data[j] * d;
                        gslope += gout.data[j] * ds;
                    }
                    self.accumulate(*input, gin);
                    if let Some(s) = slope {
                        let gs = TensorData::from_vec(Shape::new(1, 1, 1, 1), vec![gslope]);
                        self.accumulate(*s, gs);
                    }
                }
                Op::SoftmaxChannels { input } => {
                    let gin = norm::softmax_channels_backward(&self.values[i], &gout);
                    self.accumulate(*input, gin);
                }
                Op::BatchNorm {
                    scale,
                    shift,
                    input,
                    saved,
                } => {
                    let (gin, gs, gb) =
                        norm::batch_norm_backward(&self.values[scale.0], saved, &gout);
                    self.accumulate(*input, gin);
                    self.accumulate(*scale, gs);
                    self.accumulate(*shift, gb);
                }
                Op::InstanceNorm { input, saved } => {
                    let gin = norm::instance_norm_backward(saved, &gout);
                    self.accumulate(*input, gin);
                }
                Op::Lrn { input, size } => {
                    let gin = norm::lrn_backward(&self.values[input.0], &gout, *size);
                    self.accumulate(*input, gin);
                }
                Op::MaxPool { input, argmax } => {
                    let gin =
                        pool::max_pool_2x2_backward(self.values[input.0].shape, argmax, &gout);
                    self.accumulate(*input, gin);
                }
                Op::Upsample { input } => {
                    let gin = pool::upsample_nn_2x_backward(self.values[input.0].shape, &gout);
                    self.accumulate(*input, gin);
                }
                Op::AdaptivePool { input, windows } => {
                    let gin = pool::adaptive_avg_pool3d_backward(
                        self.values[input.0].shape,
                        windows,
                        &gout,
                    );
                    self.accumulate(*input, gin);
                }
                Op::Concat { a, b } => {
                    let sa = self.values[a.0].shape;
                    let sb = self.values[b.0].shape;
                    let mut ga = TensorData::zeros(sa);
                    let mut gb = TensorData::zeros(sb);
                    for n in 0..sa.n {
                        for c in 0..gout.shape.c {
                            for h in 0..sa.h {
                                for w in 0..sa.w {
                                    let g = gout.at(n, c, h, w);
                                    if c < sa.c {
                                        *ga.at_mut(n, c, h, w) = g;
                                    } else {
                                        *gb.at_mut(n, c - sa.c, h, w) = g;
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(*a, ga);
                    self.accumulate(*b, gb);
                }
                Op::Add { a, b } => {
                    self.accumulate(*a, gout.clone());
                    self.accumulate(*b, gout.clone());
                }
                Op::Mul { a, b } => {
                    let ga = TensorData::from_vec(
                        gout.shape,
                        gout.data
                            .iter()
                            .zip(&self.values[b.0].data)
                            .map(|(&g, &y)| g * y)
                            .collect(),
                    );
                    let gb = TensorData::from_vec(
                        gout.shape,
                        gout.data
                            .iter()
                            .zip(&self.values[a.0].data)
                            .map(|(&g, &x)| g * x)
                            .collect(),
                    );
                    self.accumulate(*a, ga);
                    self.accumulate(*b, gb);
                }
                Op::Mse { pred, target } => {
                    let scale = gout.data[0] * lit::<T>(2.0)
                        / lit::<T>(self.values[pred.0].shape.len() as f64);
                    let gp = TensorData::from_vec(
                        self.values[pred.0].shape,
                        self.values[pred.0]
                            .data
                            .iter()
                            .zip(&self.values[target.0].data)
                            .map(|(&p, &t)| scale * (p - t))
                            .collect(),
                    );
                    self.accumulate(*pred, gp);
                }
            }
            self.ops[i] = op;
        }
        Ok(())
    }
}

fn filter_norms<T: Scalar>(v: &TensorData<T>, filters: &FilterMap) -> (Vec<T>, Vec<T>) {
    let mut sq = vec![T::zero(); filters.num_filters];
    for (i, &f) in filters.map.iter().enumerate() {
        sq[f] += v.data[i] * v.data[i];
    }
    let norms: Vec<T> = sq.iter().map(|&s| s.sqrt()).collect();
    (norms, sq)
}

/// Norms plus, per filter, the dot product of grad_out with the unit
/// direction (which is both dg and the radial component of dv).
fn filter_norms_with_grad<T: Scalar>(
    v: &TensorData<T>,
    gout: &TensorData<T>,
    filters: &FilterMap,
) -> (Vec<T>, Vec<T>) {
    let (norms, _) = filter_norms(v, filters);
    let mut dots = vec![T::zero(); filters.num_filters];
    for (i, &f) in filters.map.iter().enumerate() {
        dots[f] += gout.data[i] * v.data[i] / norms[f];
    }
    (norms, dots)
}

fn activation_forward<T: Scalar>(
    input: &TensorData<T>,
    kind: ActivationKind,
    slope: Option<T>,
) -> TensorData<T> {
    let lam = lit::<T>(SELU_LAMBDA);
    let alpha = lit::<T>(SELU_ALPHA);
    input.map(|x| match kind {
        ActivationKind::None => x,
        ActivationKind::Relu => x.max(T::zero()),
        ActivationKind::PRelu => {
            if x > T::zero() {
                x
            } else {
                slope.unwrap() * x
            }
        }
        ActivationKind::Elu => {
            if x > T::zero() {
                x
            } else {
                x.exp() - T::one()
            }
        }
        ActivationKind::Selu => {
            if x > T::zero() {
                lam * x
            } else {
                lam * alpha * (x.exp() - T::one())
            }
        }
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::Sigmoid => (T::one() + (-x).exp()).recip(),
        ActivationKind::SoftmaxChannels => unreachable!("handled by softmax_channels"),
    })
}

/// (d out/d in, d out/d slope) at one element.
fn activation_derivative<T: Scalar>(x: T, kind: ActivationKind, slope: Option<T>) -> (T, T) {
    let lam = lit::<T>(SELU_LAMBDA);
    let alpha = lit::<T>(SELU_ALPHA);
    match kind {
        ActivationKind::None => (T::one(), T::zero()),
        ActivationKind::Relu => {
            if x > T::zero() {
                (T::one(), T::zero())
            } else {
                (T::zero(), T::zero())
            }
        }
        ActivationKind::PRelu => {
            if x > T::zero() {
                (T::one(), T::zero())
            } else {
                (slope.unwrap(), x)
            }
        }
        ActivationKind::Elu => {
            if x > T::zero() {
                (T::one(), T::zero())
            } else {
                (x.exp(), T::zero())
            }
        }
        ActivationKind::Selu => {
            if x > T::zero() {
                (lam, T::zero())
            } else {
                (lam * alpha * x.exp(), T::zero())
            }
        }
        ActivationKind::Tanh => {
            let y = x.tanh();
            (T::one() - y * y, T::zero())
        }
        ActivationKind::Sigmoid => {
            let y = (T::one() + (-x).exp()).recip();
            (y * (T::one() - y), T::zero())
        }
        ActivationKind::SoftmaxChannels => unreachable!(),
    }
}
