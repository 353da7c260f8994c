//! The three evolvable gradient optimisers.

use super::{TensorData, TensorError};
use crate::scalar::{lit, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptKind {
    Adam,
    RmsProp,
    SgdMomentum,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_ALPHA: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const SGD_MOMENTUM: f64 = 0.9;

/// Per-parameter moment buffers plus the decay schedule. The learning
/// rate follows lr0 / (1 + decay * floor(step/1000)).
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub kind: OptKind,
    pub lr0: f64,
    pub decay: f64,
    pub step_count: u64,
    m: Vec<TensorData<T>>,
    v: Vec<TensorData<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptKind, lr0: f64, decay: f64) -> Self {
        assert!((1e-5..=1e-1).contains(&lr0), "lr0 out of range");
        assert!((0.0..=1.0).contains(&decay), "decay out of range");
        OptimizerState {
            kind,
            lr0,
            decay,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.lr0 / (1.0 + self.decay * (self.step_count / 1000) as f64)
    }

    /// One update across all parameter tensors.
    pub fn step(
        &mut self,
        params: &mut [TensorData<T>],
        grads: &[TensorData<T>],
    ) -> Result<(), TensorError> {
        assert_eq!(params.len(), grads.len());
        for g in grads {
            if !g.all_finite() {
                return Err(TensorError::NonFinite("gradients"));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| TensorData::zeros(p.shape)).collect();
            if self.kind == OptKind::Adam {
                self.v = params.iter().map(|p| TensorData::zeros(p.shape)).collect();
            }
        }
        let lr = lit::<T>(self.current_lr());
        match self.kind {
            OptKind::Adam => {
                let b1 = lit::<T>(ADAM_BETA1);
                let b2 = lit::<T>(ADAM_BETA2);
                let eps = lit::<T>(ADAM_EPS);
                let t = (self.step_count + 1) as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        m.data[i] = b1 * m.data[i] + (T::one() - b1) * gi;
                        v.data[i] = b2 * v.data[i] + (T::one() - b2) * gi * gi;
                        let mhat = m.data[i] / c1;
                        let vhat = v.data[i] / c2;
                        p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptKind::RmsProp => {
                let a = lit::<T>(RMSPROP_ALPHA);
                let eps = lit::<T>(RMSPROP_EPS);
                for ((p, g), sq) in params.iter_mut().zip(grads).zip(self.m.iter_mut()) {
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        sq.data[i] = a * sq.data[i] + (T::one() - a) * gi * gi;
                        p.data[i] -= lr * gi / (sq.data[i].sqrt() + eps);
                    }
                }
            }
            OptKind::SgdMomentum => {
                let mu = lit::<T>(SGD_MOMENTUM);
                for ((p, g), buf) in params.iter_mut().zip(grads).zip(self.m.iter_mut()) {
                    for i in 0..p.data.len() {
                        buf.data[i] = mu * buf.data[i] + g.data[i];
                        p.data[i] -= lr * buf.data[i];
                    }
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}
