//! Primitive probes shared by the gradient tests and the acceptance run.

use distill_core::model::{DecoderLoss, ModelConfig, StudentModel};
use distill_core::tensor::{grad_check, grad_check_in, AttnMask, Graph, Scalar, ScalarFn, Tensor, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum Prim {
    Add,
    AddBias,
    Mul,
    Scale,
    Matmul,
    MatmulT,
    Bmm,
    BmmT,
    Gelu,
    Tanh,
    Embedding,
    LayerNorm,
    Softmax,
    SoftmaxCausal,
    SoftmaxKeyLength,
    CrossEntropy,
    SplitMerge,
}

/// `sum(w ⊙ op(inputs))` so every output coordinate gets its own weight.
pub struct Probe(pub Prim);

impl ScalarFn for Probe {
    fn eval<S: Scalar>(&self, g: &mut Graph<S>, p: &[Var]) -> Result<Var, TensorError> {
        let w = p[0];
        let out = match self.0 {
            Prim::Add => g.add(p[1], p[2])?,
            Prim::AddBias => g.add_bias(p[1], p[2])?,
            Prim::Mul => g.mul(p[1], p[2])?,
            Prim::Scale => g.scale(p[1], -1.7),
            Prim::Matmul => g.matmul(p[1], p[2], false)?,
            Prim::MatmulT => g.matmul(p[1], p[2], true)?,
            Prim::Bmm => g.bmm(p[1], p[2], false)?,
            Prim::BmmT => g.bmm(p[1], p[2], true)?,
            Prim::Gelu => g.gelu(p[1]),
            Prim::Tanh => g.tanh(p[1]),
            Prim::Embedding => g.embedding(p[1], &[2, 0, 2, 4])?,
            Prim::LayerNorm => g.layer_norm(p[1], p[2], p[3])?,
            Prim::Softmax => g.softmax(p[1], AttnMask::None)?,
            Prim::SoftmaxCausal => g.softmax(p[1], AttnMask::Causal)?,
            Prim::SoftmaxKeyLength => g.softmax(p[1], AttnMask::KeyLength { lens: vec![2, 4], heads: 2 })?,
            Prim::CrossEntropy => {
                let loss = g.cross_entropy(p[1], &[1, 4, 0, 2], &[true, false, true, true])?;
                return Ok(g.scale(loss, 1.0));
            }
            Prim::SplitMerge => {
                let s = g.split_heads(p[1], 2, 3, 2)?;
                let s = g.tanh(s);
                g.merge_heads(s, 2, 3, 2)?
            }
        };
        let weighted = g.mul(w, out)?;
        Ok(g.sum(weighted))
    }
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Input shapes per primitive, output shape first (the probe weights).
pub fn shapes(p: Prim) -> Vec<Vec<usize>> {
    match p {
        Prim::Add | Prim::Mul => vec![vec![3, 4], vec![3, 4], vec![3, 4]],
        Prim::AddBias => vec![vec![3, 4], vec![3, 4], vec![4]],
        Prim::Scale | Prim::Gelu | Prim::Tanh => vec![vec![3, 4], vec![3, 4]],
        Prim::Matmul => vec![vec![3, 2], vec![3, 4], vec![4, 2]],
        Prim::MatmulT => vec![vec![3, 5], vec![3, 4], vec![5, 4]],
        Prim::Bmm => vec![vec![2, 3, 2], vec![2, 3, 4], vec![2, 4, 2]],
        Prim::BmmT => vec![vec![2, 3, 5], vec![2, 3, 4], vec![2, 5, 4]],
        Prim::Embedding => vec![vec![4, 3], vec![5, 3]],
        Prim::LayerNorm => vec![vec![3, 6], vec![3, 6], vec![6], vec![6]],
        Prim::Softmax => vec![vec![3, 5], vec![3, 5]],
        Prim::SoftmaxCausal => vec![vec![2, 4, 4], vec![2, 4, 4]],
        Prim::SoftmaxKeyLength => vec![vec![4, 3, 4], vec![4, 3, 4]],
        Prim::CrossEntropy => vec![vec![1], vec![4, 5]],
        Prim::SplitMerge => vec![vec![6, 4], vec![6, 4]],
    }
}

pub const ALL: [Prim; 17] = [
    Prim::Add,
    Prim::AddBias,
    Prim::Mul,
    Prim::Scale,
    Prim::Matmul,
    Prim::MatmulT,
    Prim::Bmm,
    Prim::BmmT,
    Prim::Gelu,
    Prim::Tanh,
    Prim::Embedding,
    Prim::LayerNorm,
    Prim::Softmax,
    Prim::SoftmaxCausal,
    Prim::SoftmaxKeyLength,
    Prim::CrossEntropy,
    Prim::SplitMerge,
];

/// Worst relative error over every primitive, three random draws each.
pub fn primitives_max_error(step: f32) -> Result<(f64, Prim), TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = (0.0, Prim::Add);
    for prim in ALL {
        for _ in 0..3 {
            let params: Vec<Tensor> = shapes(prim).iter().map(|s| randn(s, &mut rng)).collect();
            let err = grad_check(&Probe(prim), &params, step)?;
            if err >= worst.0 {
                worst = (err, prim);
            }
        }
    }
    Ok(worst)
}

/// Relative errors of a d=8, two-layer decoder loss: analytic gradients
/// on an f64 tape, then on the f32 tape.
pub fn composite_errors(step: f32) -> Result<(f64, f64), TensorError> {
    let mut c = ModelConfig::desk(24);
    c.d = 8;
    c.heads = 2;
    c.layers = 2;
    c.dropout = 0.0;
    c.context_length = 8;
    let m = StudentModel::init(c, 5).expect("valid config");
    // the loss reads weights from the checked tensors; larger than the
    // init so every path carries signal
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params: Vec<Tensor> = m.params().iter().map(|p| Tensor::randn(p.shape(), 0.5, &mut rng)).collect();
    let a = [0u32, 5, 9, 1, 7, 2];
    let b = [0u32, 11, 1, 3];
    let loss = DecoderLoss {
        model: &m,
        batch: vec![&a, &b],
    };
    Ok((grad_check_in::<f64, _>(&loss, &params, step)?, grad_check(&loss, &params, step)?))
}
