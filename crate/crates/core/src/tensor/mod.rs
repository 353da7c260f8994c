//! Dense 4-D tensors (batch, channels, height, width) with a reverse-mode
//! gradient tape.

pub mod conv;
pub mod norm;
pub mod optim;
pub mod pool;
pub mod tape;

use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// (batch, channels, height, width)
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample element count, the unit of the memory budget.
    pub fn elements_per_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    /// (c, h, w) without the batch axis.
    pub fn chw(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Row-major dense storage.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorData<T> {
    pub shape: Shape,
    pub data: Vec<T>,
}

impl<T: Scalar> TensorData<T> {
    pub fn zeros(shape: Shape) -> Self {
        TensorData {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        TensorData {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Self {
        assert_eq!(shape.len(), data.len(), "data length must match shape");
        TensorData { shape, data }
    }

    pub fn uniform<R: Rng>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| crate::scalar::lit(rng.gen_range(lo..hi)))
            .collect();
        TensorData { shape, data }
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        &mut self.data[self.shape.index(n, c, h, w)]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        TensorData {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
