//! Minimal dense f64 tensor core with reverse-mode autodiff.
//!
//! Shapes are explicit: rank 0 (scalar), rank 1 (vector), or rank 2 (matrix),
//! row-major. There is no implicit broadcasting; the only mixed-shape ops are
//! the tensor-scalar ops (`add_scalar`, `scale`) and the explicit row-wise
//! ops (`add_bias`, `mul_row`).

pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
mod tape;

pub use gradcheck::finite_diff_check;
pub use tape::{NodeId, Tape};

use crate::rng::Rng;
use rand::Rng as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {msg}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        msg: String,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error("checkpoint io error: {0}")]
    CheckpointIo(#[from] std::io::Error),
}

/// Dense row-major f64 array. `grad`, when present, always has the same
/// number of elements as `data`.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                op: "new",
                shape,
                msg: format!("shape product does not match data length {}", data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Uniform init in [-scale, scale], marked trainable.
    pub fn rand_uniform(shape: Vec<usize>, scale: f64, rng: &mut Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor {
            shape,
            data,
            requires_grad: true,
            grad: None,
        }
    }

    pub fn zeros_param(shape: Vec<usize>) -> Self {
        let mut t = Tensor::zeros(shape);
        t.requires_grad = true;
        t
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    /// Add `g` into this tensor's grad buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.data.len());
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst += *src;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

pub(crate) fn shapes_equal(a: &[usize], b: &[usize]) -> bool {
    a == b
}
