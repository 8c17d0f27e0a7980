//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Storage is row-major and immutable after creation; differentiable ops are
//! recorded on a [`Tape`] and replayed in reverse by [`Tape::backward`].
//! Tensors are cheap handles (`Arc` inside) and may be shared read-only across
//! threads, e.g. trained parameters during concurrent decoding. A tape itself
//! is single-threaded.

mod ops;
mod scalar;
mod tape;

pub mod gradcheck;

pub use scalar::{Dtype, Scalar};
pub use tape::Tape;

use std::sync::{Arc, Mutex};

use crate::error::TensorError;

pub(crate) struct Storage<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<S>>>,
}

/// Handle to an immutable dense array, optionally tracked on a tape.
pub struct Tensor<S: Scalar> {
    st: Arc<Storage<S>>,
    /// Set when this tensor is the output of an op recorded on a tape.
    src: Option<TapeSource>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) struct TapeSource {
    pub tape_id: u64,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { st: Arc::clone(&self.st), src: self.src }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.st.shape)
            .field("requires_grad", &self.st.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn from_parts(shape: Vec<usize>, values: Vec<S>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(&shape), values.len());
        Tensor {
            st: Arc::new(Storage { shape, values, requires_grad, grad: Mutex::new(None) }),
            src: None,
        }
    }

    /// A constant (non-differentiable) tensor.
    pub fn constant(shape: &[usize], values: Vec<S>) -> Result<Self, TensorError> {
        if numel(shape) != values.len() {
            return Err(TensorError::ShapeValues { shape: shape.to_vec(), len: values.len() });
        }
        check_finite(&values)?;
        Ok(Tensor::from_parts(shape.to_vec(), values, false))
    }

    /// A leaf parameter: participates in gradient accumulation.
    pub fn param(shape: &[usize], values: Vec<S>) -> Result<Self, TensorError> {
        if numel(shape) != values.len() {
            return Err(TensorError::ShapeValues { shape: shape.to_vec(), len: values.len() });
        }
        check_finite(&values)?;
        Ok(Tensor::from_parts(shape.to_vec(), values, true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::from_parts(shape.to_vec(), vec![S::zero(); numel(shape)], false)
    }

    pub fn scalar(v: S) -> Self {
        Tensor::from_parts(vec![], vec![v], false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.st.shape
    }

    pub fn numel(&self) -> usize {
        self.st.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.st.values
    }

    pub fn requires_grad(&self) -> bool {
        self.st.requires_grad
    }

    /// Number of rows / columns for 2-d tensors.
    pub fn rows(&self) -> usize {
        self.st.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.st.shape[1]
    }

    /// Extract the single element of a scalar tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.st.values[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Current accumulated gradient, if any backward pass reached this tensor.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.st.grad.lock().unwrap().clone()
    }

    /// Gradient buffer, zeros when no gradient has flowed.
    pub fn grad_or_zeros(&self) -> Vec<S> {
        self.grad().unwrap_or_else(|| vec![S::zero(); self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.st.grad.lock().unwrap() = None;
    }

    /// True when backward should deposit a gradient here: either a leaf that
    /// requires grad, or an intermediate produced on a tape.
    pub(crate) fn wants_grad(&self) -> bool {
        self.st.requires_grad || self.src.is_some()
    }

    pub(crate) fn storage(&self) -> &Arc<Storage<S>> {
        &self.st
    }

    pub(crate) fn set_src(&mut self, src: TapeSource) {
        self.src = Some(src);
    }

    pub(crate) fn src(&self) -> Option<TapeSource> {
        self.src
    }

    /// Detached copy of this tensor's values as a fresh constant.
    pub fn detach(&self) -> Tensor<S> {
        Tensor::from_parts(self.st.shape.clone(), self.st.values.clone(), false)
    }

    /// Fresh parameter with the same shape and values.
    pub fn reparam(&self, values: Vec<S>) -> Result<Tensor<S>, TensorError> {
        Tensor::param(&self.st.shape, values)
    }
}

impl<S: Scalar> Storage<S> {
    pub(crate) fn accumulate_grad(&self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.values.len());
        let mut g = self.grad.lock().unwrap();
        match g.as_mut() {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta) {
                    *b = *b + *d;
                }
            }
            None => *g = Some(delta.to_vec()),
        }
    }

    pub(crate) fn grad_clone(&self) -> Option<Vec<S>> {
        self.grad.lock().unwrap().clone()
    }

    pub(crate) fn values(&self) -> &[S] {
        &self.values
    }
}

pub(crate) fn check_finite<S: Scalar>(values: &[S]) -> Result<(), TensorError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite)
    }
}

#[cfg(test)]
mod tests;
