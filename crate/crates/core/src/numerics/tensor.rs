use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::Real;
use crate::error::{Error, Result};

/// Identity of a tensor node; gradients are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

impl TensorId {
    pub(crate) fn fresh() -> Self {
        static COUNTER: AtomicU64 = AtomicU64::new(1);
        TensorId(COUNTER.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// Recorded operation producing a non-leaf tensor.
#[derive(Clone)]
pub(crate) enum Op<T: Real> {
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
        padding: usize,
    },
    Relu(Tensor<T>),
    Tanh(Tensor<T>),
    Add(Tensor<T>, Tensor<T>),
    Scale(Tensor<T>, f64),
    PixelShuffle(Tensor<T>, usize),
    PixelUnshuffle(Tensor<T>, usize),
    GlobalAvgPool(Tensor<T>),
    Linear {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    L1 {
        pred: Tensor<T>,
        target: Tensor<T>,
        reduction: Reduction,
    },
    Mse {
        pred: Tensor<T>,
        target: Tensor<T>,
        reduction: Reduction,
    },
    Sum(Tensor<T>),
}

impl<T: Real> Op<T> {
    pub(crate) fn inputs(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::Conv2d {
                input, weight, bias, ..
            }
            | Op::Linear { input, weight, bias } => vec![input, weight, bias],
            Op::Relu(x)
            | Op::Tanh(x)
            | Op::Scale(x, _)
            | Op::PixelShuffle(x, _)
            | Op::PixelUnshuffle(x, _)
            | Op::GlobalAvgPool(x)
            | Op::Sum(x) => vec![x],
            Op::Add(a, b) => vec![a, b],
            Op::L1 { pred, target, .. } | Op::Mse { pred, target, .. } => vec![pred, target],
        }
    }
}

pub(crate) struct Node<T: Real> {
    pub(crate) id: TensorId,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<T>,
    pub(crate) op: Option<Op<T>>,
    pub(crate) requires_grad: bool,
}

/// Dense row-major array with optional gradient tracking.
///
/// Image tensors use the (batch, channel, height, width) layout. Tensors are
/// immutable once built; a tensor that requires gradients records the op
/// that produced it so [`backward`](super::backward) can replay the graph.
#[derive(Clone)]
pub struct Tensor<T: Real = f32>(pub(crate) Arc<Node<T>>);

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    /// Constant (non-differentiable) tensor.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape, data, false)
    }

    /// Leaf tensor; with `requires_grad` it receives a gradient on backward.
    pub fn leaf(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {} elements, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::from_parts(
            TensorId::fresh(),
            shape.to_vec(),
            data,
            None,
            requires_grad,
        ))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_parts(
            TensorId::fresh(),
            shape.to_vec(),
            vec![value; numel(shape)],
            None,
            false,
        )
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(TensorId::fresh(), Vec::new(), vec![value], None, false)
    }

    pub(crate) fn from_parts(
        id: TensorId,
        shape: Vec<usize>,
        data: Vec<T>,
        op: Option<Op<T>>,
        requires_grad: bool,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Node {
            id,
            shape,
            data,
            op,
            requires_grad,
        }))
    }

    /// Result of an op: gradient-tracked iff any input is.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, op: Op<T>) -> Self {
        let requires_grad = op.inputs().iter().any(|t| t.requires_grad());
        let op = requires_grad.then_some(op);
        Self::from_parts(TensorId::fresh(), shape, data, op, requires_grad)
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Copy of this tensor cut from the graph.
    pub fn detach(&self) -> Self {
        if !self.requires_grad() {
            return self.clone();
        }
        Self::from_parts(
            TensorId::fresh(),
            self.0.shape.clone(),
            self.0.data.clone(),
            None,
            false,
        )
    }

    /// Same-identity leaf holding new values; used by optimizers so that
    /// gradient bookkeeping keyed by [`TensorId`] stays valid.
    pub(crate) fn with_data(&self, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), self.numel());
        Self::from_parts(self.0.id, self.0.shape.clone(), data, None, self.0.requires_grad)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        if self.requires_grad() {
            return Err(Error::shape("reshape is only defined on constant tensors"));
        }
        Self::new(shape, self.0.data.clone())
    }

    /// Rows `indices` of the leading (batch) dimension, as a constant tensor.
    pub fn select_batch(&self, indices: &[usize]) -> Result<Self> {
        let shape = self.shape();
        if shape.is_empty() || indices.is_empty() {
            return Err(Error::shape("select_batch needs a batched tensor and indices"));
        }
        let row = self.numel() / shape[0];
        let mut data = Vec::with_capacity(row * indices.len());
        for &i in indices {
            if i >= shape[0] {
                return Err(Error::shape(format!("batch index {i} out of range {}", shape[0])));
            }
            data.extend_from_slice(&self.data()[i * row..(i + 1) * row]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[0] = indices.len();
        Self::new(&out_shape, data)
    }

    /// Stack single items (each shaped like one batch row) along a new
    /// leading dimension, as a constant tensor.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("stack of zero tensors"))?;
        let item_shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            if t.shape() != item_shape.as_slice() {
                return Err(Error::shape(format!(
                    "stack: shape {:?} differs from {:?}",
                    t.shape(),
                    item_shape
                )));
            }
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&item_shape);
        Self::new(&shape, data)
    }

    /// Batch row `index` without the leading dimension.
    pub fn batch_item(&self, index: usize) -> Result<Self> {
        let t = self.select_batch(&[index])?;
        let shape = self.shape()[1..].to_vec();
        if shape.is_empty() {
            return Self::new(&[], t.0.data.clone());
        }
        Self::new(&shape, t.0.data.clone())
    }

    /// Element-wise conversion to another precision (constant result).
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_parts(
            TensorId::fresh(),
            self.0.shape.clone(),
            self.0.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            None,
            false,
        )
    }
}
