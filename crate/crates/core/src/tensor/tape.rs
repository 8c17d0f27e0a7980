use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Scalar, Storage, TapeSource, Tensor};
use crate::error::TensorError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

struct Node<S> {
    output: Arc<Storage<S>>,
    backward: Box<dyn Fn(&[S])>,
}

struct TapeInner<S> {
    id: u64,
    recording: bool,
    nodes: RefCell<Vec<Node<S>>>,
    consumed: Cell<bool>,
}

/// Ordered record of executed differentiable operations.
///
/// Ops push nodes in execution order, so iterating in reverse is a valid
/// topological order for the backward sweep. A tape supports one backward
/// pass; calling [`Tape::backward`] again without [`Tape::reset`] is an error.
/// Not `Send`: a tape belongs to one thread.
pub struct Tape<S: Scalar> {
    inner: Rc<TapeInner<S>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape { inner: Rc::clone(&self.inner) }
    }
}

impl<S: Scalar> Tape<S> {
    /// A recording tape for training.
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(TapeInner {
                id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
                recording: true,
                nodes: RefCell::new(Vec::new()),
                consumed: Cell::new(false),
            }),
        }
    }

    /// A non-recording tape: ops compute values only. Used for decoding and
    /// validation scoring.
    pub fn inference() -> Self {
        Tape {
            inner: Rc::new(TapeInner {
                id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
                recording: false,
                nodes: RefCell::new(Vec::new()),
                consumed: Cell::new(false),
            }),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.inner.recording
    }

    pub fn num_ops(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    /// Clears recorded ops so the tape can host a fresh forward pass.
    pub fn reset(&self) {
        self.inner.nodes.borrow_mut().clear();
        self.inner.consumed.set(false);
    }

    pub(crate) fn source(&self) -> TapeSource {
        TapeSource { tape_id: self.inner.id }
    }

    /// Whether an op over these inputs should be recorded, erroring on inputs
    /// that belong to a different recording tape.
    pub(crate) fn should_record(&self, inputs: &[&Tensor<S>]) -> Result<bool, TensorError> {
        if !self.inner.recording {
            return Ok(false);
        }
        let mut any = false;
        for t in inputs {
            if let Some(src) = t.src() {
                if src.tape_id != self.inner.id {
                    return Err(TensorError::CrossTape);
                }
                any = true;
            } else if t.requires_grad() {
                any = true;
            }
        }
        Ok(any)
    }

    pub(crate) fn record(&self, output: &mut Tensor<S>, backward: Box<dyn Fn(&[S])>) {
        self.inner
            .nodes
            .borrow_mut()
            .push(Node { output: Arc::clone(output.storage()), backward });
        output.set_src(self.source());
    }

    /// Reverse sweep from a scalar root: populates `grad` of every
    /// reachable tensor that wants one. Gradients accumulate additively, both
    /// across multiple uses of a tensor within the graph and across separate
    /// backward passes (gradient accumulation).
    pub fn backward(&self, root: &Tensor<S>) -> Result<(), TensorError> {
        if !root.is_scalar() {
            return Err(TensorError::NonScalarRoot { shape: root.shape().to_vec() });
        }
        match root.src() {
            Some(src) if src.tape_id == self.inner.id => {}
            _ => return Err(TensorError::DetachedRoot),
        }
        if self.inner.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        self.inner.consumed.set(true);

        root.storage().accumulate_grad(&[S::one()]);
        let nodes = self.inner.nodes.borrow();
        for node in nodes.iter().rev() {
            if let Some(g) = node.output.grad_clone() {
                (node.backward)(&g);
            }
        }
        // Intermediate grads were only needed to drive the sweep; leaf grads
        // stay on their storages for the optimizer to read.
        for node in nodes.iter() {
            *node.output.grad.lock().unwrap() = None;
        }
        Ok(())
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}
