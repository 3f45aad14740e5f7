//! Parameter layout and forward passes shared by training and inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind};
use crate::tensor::{AttnMask, Graph, Scalar, Tensor, TensorError, Var};

const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attention {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    ln1: Norm,
    attn: Attention,
    cross: Option<(Norm, Attention)>,
    ln2: Norm,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Stack {
    tok: usize,
    pos: usize,
    blocks: Vec<Block>,
    lnf: Norm,
}

/// Index of every parameter in the flat list.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub encoder: Option<Stack>,
    pub decoder: Stack,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            g: self.add(format!("{prefix}.g"), vec![d], Init::Ones),
            b: self.add(format!("{prefix}.b"), vec![d], Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        let mut lin = |n: &str| {
            (
                self.add(format!("{prefix}.w{n}"), vec![d, d], Init::Normal),
                self.add(format!("{prefix}.b{n}"), vec![d], Init::Zeros),
            )
        };
        let (wq, bq) = lin("q");
        let (wk, bk) = lin("k");
        let (wv, bv) = lin("v");
        let (wo, bo) = lin("o");
        Attention {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn block(&mut self, prefix: &str, d: usize, cross: bool) -> Block {
        let ln1 = self.norm(&format!("{prefix}.ln1"), d);
        let attn = self.attention(&format!("{prefix}.attn"), d);
        let cross = cross.then(|| {
            (
                self.norm(&format!("{prefix}.lnx"), d),
                self.attention(&format!("{prefix}.xattn"), d),
            )
        });
        let ln2 = self.norm(&format!("{prefix}.ln2"), d);
        Block {
            ln1,
            attn,
            cross,
            ln2,
            w1: self.add(format!("{prefix}.mlp.w1"), vec![d, 4 * d], Init::Normal),
            b1: self.add(format!("{prefix}.mlp.b1"), vec![4 * d], Init::Zeros),
            w2: self.add(format!("{prefix}.mlp.w2"), vec![4 * d, d], Init::Normal),
            b2: self.add(format!("{prefix}.mlp.b2"), vec![d], Init::Zeros),
        }
    }

    fn stack(&mut self, prefix: &str, c: &ModelConfig, vocab: usize, ctx: usize, cross: bool) -> Stack {
        let tok = self.add(format!("{prefix}wte"), vec![vocab, c.d], Init::Normal);
        let pos = self.add(format!("{prefix}wpe"), vec![ctx, c.d], Init::Normal);
        let blocks = (0..c.layers)
            .map(|l| self.block(&format!("{prefix}h{l}"), c.d, cross))
            .collect();
        let lnf = self.norm(&format!("{prefix}lnf"), c.d);
        Stack {
            tok,
            pos,
            blocks,
            lnf,
        }
    }
}

pub(crate) fn layout(c: &ModelConfig) -> (Vec<ParamSpec>, Layout) {
    let mut b = Builder { specs: Vec::new() };
    let layout = match c.kind {
        ModelKind::DecoderOnly => Layout {
            encoder: None,
            decoder: b.stack("", c, c.vocab_size, c.context_length, false),
        },
        ModelKind::EncoderDecoder => {
            let encoder = b.stack("enc.", c, c.src_vocab_size, c.src_context_length, false);
            let decoder = b.stack("dec.", c, c.vocab_size, c.context_length, true);
            Layout {
                encoder: Some(encoder),
                decoder,
            }
        }
    };
    (b.specs, layout)
}

pub(crate) fn token_table(stack: &Stack) -> usize {
    stack.tok
}

pub(crate) fn init_params(specs: &[ParamSpec], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    specs
        .iter()
        .map(|s| {
            let t = match s.init {
                Init::Normal => Tensor::randn(&s.shape, INIT_STD, &mut rng),
                Init::Zeros => Tensor::zeros(&s.shape),
                Init::Ones => Tensor::filled(&s.shape, 1.0),
            };
            t.with_grad()
        })
        .collect()
}

/// A right-padded batch of `rows` sequences of `len` positions.
#[derive(Debug, Clone)]
pub(crate) struct Shape {
    pub rows: usize,
    pub len: usize,
}

pub(crate) struct Forward<'a> {
    pub p: &'a [Var],
    pub heads: usize,
    pub dropout: f32,
}

impl Forward<'_> {
    fn norm<S: Scalar>(&self, g: &mut Graph<S>, x: Var, n: Norm) -> Result<Var, TensorError> {
        g.layer_norm(x, self.p[n.g], self.p[n.b])
    }

    fn linear<S: Scalar>(&self, g: &mut Graph<S>, x: Var, w: usize, b: usize) -> Result<Var, TensorError> {
        let y = g.matmul(x, self.p[w], false)?;
        g.add_bias(y, self.p[b])
    }

    #[allow(clippy::too_many_arguments)]
    fn attention<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        xq: Var,
        xkv: Var,
        a: Attention,
        q_shape: &Shape,
        kv_len: usize,
        mask: AttnMask,
    ) -> Result<Var, TensorError> {
        let rows = q_shape.rows;
        let h = self.heads;
        let q = self.linear(g, xq, a.wq, a.bq)?;
        let k = self.linear(g, xkv, a.wk, a.bk)?;
        let v = self.linear(g, xkv, a.wv, a.bv)?;
        let dh = g.shape(q)[1] / h;
        let q = g.split_heads(q, rows, q_shape.len, h)?;
        let k = g.split_heads(k, rows, kv_len, h)?;
        let v = g.split_heads(v, rows, kv_len, h)?;
        let scores = g.bmm(q, k, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f32).sqrt());
        let probs = g.softmax(scores, mask)?;
        let probs = g.dropout(probs, self.dropout);
        let ctx = g.bmm(probs, v, false)?;
        let ctx = g.merge_heads(ctx, rows, q_shape.len, h)?;
        let out = self.linear(g, ctx, a.wo, a.bo)?;
        Ok(g.dropout(out, self.dropout))
    }

    /// Embeds `ids` (flat, `shape.rows × shape.len`) and runs a stack.
    /// `memory` carries encoder output, its length and key lengths for
    /// cross-attention.
    pub fn stack<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        stack: &Stack,
        ids: &[usize],
        shape: &Shape,
        self_mask: AttnMask,
        memory: Option<(Var, usize, &[usize])>,
    ) -> Result<Var, TensorError> {
        let positions: Vec<usize> = (0..ids.len()).map(|i| i % shape.len).collect();
        let tok = g.embedding(self.p[stack.tok], ids)?;
        let pos = g.embedding(self.p[stack.pos], &positions)?;
        let x = g.add(tok, pos)?;
        let mut x = g.dropout(x, self.dropout);
        for blk in &stack.blocks {
            let h = self.norm(g, x, blk.ln1)?;
            let a = self.attention(g, h, h, blk.attn, shape, shape.len, self_mask.clone())?;
            x = g.add(x, a)?;
            if let (Some((ln, xattn)), Some((mem, mem_len, mem_lens))) = (blk.cross, memory) {
                let h = self.norm(g, x, ln)?;
                let mask = AttnMask::KeyLength {
                    lens: mem_lens.to_vec(),
                    heads: self.heads,
                };
                let a = self.attention(g, h, mem, xattn, shape, mem_len, mask)?;
                x = g.add(x, a)?;
            }
            let h = self.norm(g, x, blk.ln2)?;
            let f = self.linear(g, h, blk.w1, blk.b1)?;
            let f = g.gelu(f);
            let f = self.linear(g, f, blk.w2, blk.b2)?;
            let f = g.dropout(f, self.dropout);
            x = g.add(x, f)?;
        }
        self.norm(g, x, stack.lnf)
    }

    /// Hidden states `[rows·len, d]` → logits `[rows·len, V]` through the
    /// transposed token embedding.
    pub fn logits<S: Scalar>(&self, g: &mut Graph<S>, stack: &Stack, hidden: Var) -> Result<Var, TensorError> {
        g.matmul(hidden, self.p[stack.tok], true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counted(c: &ModelConfig) -> usize {
        layout(c).0.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    #[test]
    fn layout_matches_closed_form() {
        for c in [
            ModelConfig::desk(512),
            ModelConfig::jam_38m(),
            ModelConfig::transformer_baseline(300, 120),
        ] {
            assert_eq!(counted(&c), c.parameter_count());
        }
    }

    #[test]
    fn names_are_unique() {
        let (specs, _) = layout(&ModelConfig::transformer_baseline(30, 20));
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        let before = names.len();
        names.dedup();
        assert_eq!(before, names.len());
    }
}
