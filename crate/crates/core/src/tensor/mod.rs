//! Reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! A [`Graph`] is a tape: every primitive appends one node holding its output
//! value, and [`Graph::backward`] walks the tape in reverse accumulating
//! gradients. Parameters live outside the tape as [`Tensor`]s; they are copied
//! in with [`Graph::input`] and gradients are copied back out with
//! [`Graph::write_grads`].
//!
//! The tape is generic over its [`Scalar`]: training runs on `Graph<f32>`,
//! while the finite-difference oracle in [`grad_check`] re-evaluates the same
//! function on `Graph<f64>` so its numeric derivatives are not swamped by
//! `f32` rounding.

mod adam;
mod gradcheck;
mod ops;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_in, ScalarFn};

/// Element type of a [`Graph`] tape.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn as_f32(self) -> f32;
    fn as_f64(self) -> f64;

    /// `C = alpha·A·B + beta·C` over raw strided storage.
    ///
    /// # Safety
    /// The strides must address valid `m×k`, `k×n` and `m×n` regions of the
    /// given pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f32(x: f32) -> Self {
        x
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} needs {expected} elements, got {actual}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("softmax over an empty last dimension")]
    EmptyLastDim,
    #[error("all positions are masked")]
    AllMasked,
    #[error("target id {id} out of range for vocabulary of {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },
    #[error("backward needs a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(usize),
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f32),
    #[error("invalid epsilon {0}")]
    InvalidEpsilon(f32),
    #[error("non-finite function value during gradient check")]
    NonFiniteEvaluation,
}

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Samples every element from `N(0, std²)`.
    pub fn randn(shape: &[usize], std: f32, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0f32, std).expect("finite std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        Self {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn grad_mut(&mut self) -> &mut Vec<f32> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Which attention scores a masked softmax may see.
#[derive(Debug, Clone, PartialEq)]
pub enum AttnMask {
    None,
    /// Query `i` sees keys `0..=i` (scores laid out `[.., T, T]`).
    Causal,
    /// Scores laid out `[batch*heads, Tq, Tk]`; key `j` of batch row `b` is
    /// visible iff `j < lens[b]`.
    KeyLength { lens: Vec<usize>, heads: usize },
}

#[derive(Debug)]
pub(crate) enum Op<S> {
    Leaf,
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Gelu(Var),
    Tanh(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Softmax {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<S>,
        count: usize,
    },
    Dropout {
        x: Var,
        scale_mask: Vec<S>,
    },
    SplitHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
}

#[derive(Debug)]
pub(crate) struct Node<S> {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<S>,
    pub(crate) grad: Option<Vec<S>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<S>,
}

/// Tape recording one forward pass.
pub struct Graph<S: Scalar = f32> {
    pub(crate) nodes: Vec<Node<S>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Graph<f32> {
    /// An `f32` graph in evaluation mode: dropout is the identity.
    pub fn new() -> Self {
        Self::eval_mode()
    }

    /// An `f32` graph in training mode; dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Self::training_mode(seed)
    }
}

impl<S: Scalar> Graph<S> {
    pub fn eval_mode() -> Self {
        Self {
            nodes: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn training_mode(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copies a tensor onto the tape as a leaf.
    pub fn input(&mut self, t: &Tensor) -> Var {
        let value = t.data.iter().map(|&x| S::from_f32(x)).collect();
        self.push_leaf(t.shape.clone(), value, t.requires_grad)
    }

    /// A constant leaf that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<S>) -> Result<Var, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(self.push_leaf(shape, data, false))
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<S>, op: Op<S>) -> Var {
        let requires_grad = op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    /// The first element of a node, widened to `f64`.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0].as_f64()
    }

    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Populates gradients of `output` with respect to every node that
    /// requires them.
    pub fn backward(&mut self, output: Var) -> Result<(), TensorError> {
        let out = &mut self.nodes[output.0];
        if out.value.len() != 1 {
            return Err(TensorError::NotScalar(out.shape.clone()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        self.nodes[output.0].grad = Some(vec![S::one()]);
        for i in (0..=output.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                ops::backprop(self, i, &grad);
            }
            self.nodes[i].grad = Some(grad);
        }
        Ok(())
    }

    /// Adds the tape gradients of `vars` into the matching tensors' `grad`.
    /// Tensors whose leaf got no gradient are left untouched.
    pub fn write_grads(&self, vars: &[Var], params: &mut [Tensor]) {
        for (v, p) in vars.iter().zip(params.iter_mut()) {
            if let Some(g) = self.grad(*v) {
                let dst = p.grad_mut();
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += s.as_f32();
                }
            }
        }
    }

    pub(crate) fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [S], &[S]), src: &[S]) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let n = node.value.len();
        let g = node.grad.get_or_insert_with(|| vec![S::zero(); n]);
        f(g, src);
    }
}

impl Default for Graph<f32> {
    fn default() -> Self {
        Self::new()
    }
}

fn op_inputs<S>(op: &Op<S>) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::AddBias(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::MatMul { a, b, .. } | Op::BatchMatMul { a, b, .. } => vec![*a, *b],
        Op::Scale(x, _) | Op::Sum(x) | Op::Gelu(x) | Op::Tanh(x) => vec![*x],
        Op::Embedding { table, .. } => vec![*table],
        Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        Op::Softmax { x, .. } => vec![*x],
        Op::CrossEntropy { logits, .. } => vec![*logits],
        Op::Dropout { x, .. } => vec![*x],
        Op::SplitHeads { x, .. } | Op::MergeHeads { x, .. } => vec![*x],
    }
}

/// Row-wise softmax over the last dimension of a plain tensor.
pub fn softmax_rows(t: &Tensor) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let x = g.input(t);
    let y = g.softmax(x, AttnMask::None)?;
    Tensor::new(t.shape.to_vec(), g.value(y).to_vec())
}

/// Mean next-token negative log-likelihood of `targets` under `logits` (`T×V`),
/// skipping positions where `mask` is false.
pub fn cross_entropy_next_token(
    logits: &Tensor,
    targets: &[usize],
    mask: &[bool],
) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let x = g.input(logits);
    let loss = g.cross_entropy(x, targets, mask)?;
    Ok(g.scalar(loss))
}
