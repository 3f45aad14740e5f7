use rand::Rng;

use super::{AttnMask, Graph, Op, Scalar, TensorError, Var};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

/// `C = A·B + beta·C` with `A` logically `m×k` and `B` logically `k×n`,
/// either of which may be stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    a_trans: bool,
    b: &[S],
    b_trans: bool,
    c: &mut [S],
    beta: S,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements checked by the length assertions.
    unsafe {
        S::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

fn gelu<S: Scalar>(x: S) -> S {
    let (c, k, half) = (S::from_f64(GELU_C), S::from_f64(GELU_K), S::from_f64(0.5));
    let u = c * (x + k * x * x * x);
    half * x * (S::one() + u.tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let (c, k, half) = (S::from_f64(GELU_C), S::from_f64(GELU_K), S::from_f64(0.5));
    let three = S::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three * k * x * x)
}

/// Visible key range `0..end` for softmax row `row` of a `[.., rows_per_group, cols]` layout.
fn visible_cols(mask: &AttnMask, row: usize, rows_per_group: usize, cols: usize) -> usize {
    match mask {
        AttnMask::None => cols,
        AttnMask::Causal => (row % rows_per_group + 1).min(cols),
        AttnMask::KeyLength { lens, heads } => {
            let group = row / rows_per_group;
            lens[group / heads].min(cols)
        }
    }
}

impl<S: Scalar> Graph<S> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a, b)))
    }

    /// Adds a vector along the last dimension of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let n = last_dim(self.shape(x));
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let mut value = self.value(x).to_vec();
        for row in value.chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(v, &bb)| *v = *v + bb);
        }
        Ok(self.push(self.shape(x).to_vec(), value, Op::AddBias(x, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f32) -> Var {
        let cs = S::from_f32(c);
        let value = self.value(x).iter().map(|&v| v * cs).collect();
        self.push(self.shape(x).to_vec(), value, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).iter().map(|v| v.as_f64()).sum();
        self.push(vec![1], vec![S::from_f64(total)], Op::Sum(x))
    }

    /// `a[.., k] · b[k, m]`, or `a · bᵀ` with `b[m, k]` when `trans_b`.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let ashape = self.shape(a).to_vec();
        let bshape = self.shape(b).to_vec();
        let k = last_dim(&ashape);
        let (bk, m) = match (bshape.as_slice(), trans_b) {
            ([r, c], false) => (*r, *c),
            ([r, c], true) => (*c, *r),
            _ => (usize::MAX, 0),
        };
        if bk != k || ashape.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ashape,
                right: bshape,
            });
        }
        let rows = self.value(a).len() / k.max(1);
        let mut value = vec![S::zero(); rows * m];
        gemm(rows, k, m, self.value(a), false, self.value(b), trans_b, &mut value, S::zero());
        let mut shape = ashape;
        *shape.last_mut().unwrap() = m;
        Ok(self.push(shape, value, Op::MatMul { a, b, trans_b }))
    }

    /// Batched `a[B, n, k] · b[B, k, m]` (or `b[B, m, k]` transposed).
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let ashape = self.shape(a).to_vec();
        let bshape = self.shape(b).to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "bmm",
            left: ashape.clone(),
            right: bshape.clone(),
        };
        let ([batch, n, k], [bb, r, c]) = (ashape.as_slice(), bshape.as_slice()) else {
            return Err(mismatch());
        };
        let (bk, m) = if trans_b { (*c, *r) } else { (*r, *c) };
        if bb != batch || bk != *k {
            return Err(mismatch());
        }
        let (batch, n, k) = (*batch, *n, *k);
        let mut value = vec![S::zero(); batch * n * m];
        let av = self.value(a);
        let bv = self.value(b);
        for i in 0..batch {
            gemm(
                n,
                k,
                m,
                &av[i * n * k..(i + 1) * n * k],
                false,
                &bv[i * k * m..(i + 1) * k * m],
                trans_b,
                &mut value[i * n * m..(i + 1) * n * m],
                S::zero(),
            );
        }
        Ok(self.push(vec![batch, n, m], value, Op::BatchMatMul { a, b, trans_b }))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(self.shape(x).to_vec(), value, Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.tanh()).collect();
        self.push(self.shape(x).to_vec(), value, Op::Tanh(x))
    }

    /// Gathers rows of `table[V, d]`; output `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tshape = self.shape(table).to_vec();
        let [vocab, d] = tshape[..] else {
            return Err(TensorError::ShapeMismatch {
                op: "embedding",
                left: tshape,
                right: vec![],
            });
        };
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::TargetOutOfRange { id: bad, vocab });
        }
        let t = self.value(table);
        let mut value = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            value.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            vec![ids.len(), d],
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Normalizes over the last dimension, then scales and shifts.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let n = last_dim(self.shape(x));
        for p in [gamma, beta] {
            if self.shape(p) != [n] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: self.shape(x).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let xs = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let rows = xs.len() / n.max(1);
        let mut xhat = vec![S::zero(); xs.len()];
        let mut rstd = vec![S::zero(); rows];
        let mut value = vec![S::zero(); xs.len()];
        for r in 0..rows {
            let row = &xs[r * n..(r + 1) * n];
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let var = row
                .iter()
                .map(|v| {
                    let d = v.as_f64() - mean;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = S::from_f64(rs);
            for j in 0..n {
                let h = S::from_f64((row[j].as_f64() - mean) * rs);
                xhat[r * n + j] = h;
                value[r * n + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(
            self.shape(x).to_vec(),
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Softmax over the last dimension with max-subtraction. Masked-out
    /// entries are exactly zero.
    pub fn softmax(&mut self, x: Var, mask: AttnMask) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let cols = last_dim(&shape);
        if cols == 0 || shape.is_empty() {
            return Err(TensorError::EmptyLastDim);
        }
        let rows_per_group = if shape.len() >= 2 { shape[shape.len() - 2] } else { 1 };
        let xs = self.value(x);
        let mut value = vec![S::zero(); xs.len()];
        for (r, (src, dst)) in xs.chunks(cols).zip(value.chunks_mut(cols)).enumerate() {
            let end = visible_cols(&mask, r, rows_per_group, cols);
            if end == 0 {
                continue;
            }
            let max = src[..end].iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = 0.0f64;
            for j in 0..end {
                let e = (src[j] - max).exp();
                dst[j] = e;
                total += e.as_f64();
            }
            let inv = S::from_f64(1.0 / total);
            dst[..end].iter_mut().for_each(|v| *v = *v * inv);
        }
        Ok(self.push(shape, value, Op::Softmax { x }))
    }

    /// Mean negative log-likelihood of `targets` over rows of `logits[N, V]`
    /// where `mask` is true.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var, TensorError> {
        let shape = self.shape(logits).to_vec();
        let vocab = last_dim(&shape);
        let rows = self.value(logits).len() / vocab.max(1);
        if targets.len() != rows || mask.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: shape,
                right: vec![targets.len(), mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(TensorError::AllMasked);
        }
        if let Some((&id, _)) = targets.iter().zip(mask).find(|(&t, &m)| m && t >= vocab) {
            return Err(TensorError::TargetOutOfRange { id, vocab });
        }
        let xs = self.value(logits);
        let mut probs = vec![S::zero(); xs.len()];
        let mut total = 0.0f64;
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let row = &xs[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = 0.0f64;
            for (p, &v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                let e = (v - max).exp();
                *p = e;
                z += e.as_f64();
            }
            let inv = S::from_f64(1.0 / z);
            probs[r * vocab..(r + 1) * vocab]
                .iter_mut()
                .for_each(|p| *p = *p * inv);
            total += max.as_f64() + z.ln() - row[targets[r]].as_f64();
        }
        let loss = total / count as f64;
        Ok(self.push(
            vec![1],
            vec![S::from_f64(loss)],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
        ))
    }

    /// Inverted dropout; the identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f32) -> Var {
        if !self.is_training() || p <= 0.0 {
            return x;
        }
        let n = self.value(x).len();
        let keep = S::from_f64(1.0 / (1.0 - p as f64));
        let scale_mask: Vec<S> = (0..n)
            .map(|_| if self.rng().random::<f32>() < p { S::zero() } else { keep })
            .collect();
        let value = self
            .value(x)
            .iter()
            .zip(&scale_mask)
            .map(|(&v, &m)| v * m)
            .collect();
        self.push(self.shape(x).to_vec(), value, Op::Dropout { x, scale_mask })
    }

    /// `[batch*seq, heads*dh]` → `[batch*heads, seq, dh]`.
    pub fn split_heads(
        &mut self,
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let width = last_dim(&shape);
        if shape.len() != 2 || shape[0] != batch * seq || heads == 0 || width % heads != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "split_heads",
                left: shape,
                right: vec![batch, seq, heads],
            });
        }
        let dh = width / heads;
        let xs = self.value(x);
        let mut value = vec![S::zero(); xs.len()];
        for b in 0..batch {
            for t in 0..seq {
                let src = &xs[(b * seq + t) * width..(b * seq + t + 1) * width];
                for h in 0..heads {
                    let dst = ((b * heads + h) * seq + t) * dh;
                    value[dst..dst + dh].copy_from_slice(&src[h * dh..(h + 1) * dh]);
                }
            }
        }
        Ok(self.push(
            vec![batch * heads, seq, dh],
            value,
            Op::SplitHeads {
                x,
                batch,
                seq,
                heads,
            },
        ))
    }

    /// Inverse of [`Graph::split_heads`].
    pub fn merge_heads(
        &mut self,
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] != batch * heads || shape[1] != seq {
            return Err(TensorError::ShapeMismatch {
                op: "merge_heads",
                left: shape,
                right: vec![batch, seq, heads],
            });
        }
        let dh = shape[2];
        let width = heads * dh;
        let xs = self.value(x);
        let mut value = vec![S::zero(); xs.len()];
        for b in 0..batch {
            for t in 0..seq {
                let dst = (b * seq + t) * width;
                for h in 0..heads {
                    let src = ((b * heads + h) * seq + t) * dh;
                    value[dst + h * dh..dst + (h + 1) * dh].copy_from_slice(&xs[src..src + dh]);
                }
            }
        }
        Ok(self.push(
            vec![batch * seq, width],
            value,
            Op::MergeHeads {
                x,
                batch,
                seq,
                heads,
            },
        ))
    }

    /// Runs `f` on the gradient buffer of `v` (allocated on demand) with
    /// read access to the rest of the tape.
    fn with_grad_buf(&mut self, v: Var, f: impl FnOnce(&mut [S], &Graph<S>)) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let mut buf = self.nodes[v.0].grad.take().unwrap_or_else(|| vec![S::zero(); n]);
        f(&mut buf, self);
        self.nodes[v.0].grad = Some(buf);
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

/// Propagates `grad` (the gradient of node `i`) into the node's inputs.
pub(crate) fn backprop<S: Scalar>(g: &mut Graph<S>, i: usize, grad: &[S]) {
    let op = std::mem::replace(&mut g.nodes[i].op, Op::Leaf);
    let out_shape = g.nodes[i].shape.clone();
    match &op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for v in [*a, *b] {
                g.accumulate(v, add_into, grad);
            }
        }
        Op::AddBias(x, bias) => {
            g.accumulate(*x, add_into, grad);
            let n = last_dim(&out_shape);
            g.with_grad_buf(*bias, |d, _| {
                for row in grad.chunks(n) {
                    add_into(d, row);
                }
            });
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            g.with_grad_buf(a, |d, gr| {
                for ((d, &s), &o) in d.iter_mut().zip(grad).zip(gr.value(b)) {
                    *d = *d + s * o;
                }
            });
            g.with_grad_buf(b, |d, gr| {
                for ((d, &s), &o) in d.iter_mut().zip(grad).zip(gr.value(a)) {
                    *d = *d + s * o;
                }
            });
        }
        Op::Scale(x, c) => {
            let c = S::from_f32(*c);
            g.accumulate(
                *x,
                |d, s| d.iter_mut().zip(s).for_each(|(d, &s)| *d = *d + c * s),
                grad,
            );
        }
        Op::Sum(x) => {
            let s = grad[0];
            g.with_grad_buf(*x, |d, _| d.iter_mut().for_each(|d| *d = *d + s));
        }
        Op::MatMul { a, b, trans_b } => {
            let (a, b, trans_b) = (*a, *b, *trans_b);
            let k = last_dim(g.shape(a));
            let m = last_dim(&out_shape);
            let rows = grad.len() / m.max(1);
            // dA = G · Bᵀ   (B stored [k,m]) or G · B (B stored [m,k])
            g.with_grad_buf(a, |d, gr| {
                gemm(rows, m, k, grad, false, gr.value(b), !trans_b, d, S::one());
            });
            g.with_grad_buf(b, |d, gr| {
                if trans_b {
                    // dB[m,k] = Gᵀ · A
                    gemm(m, rows, k, grad, true, gr.value(a), false, d, S::one());
                } else {
                    // dB[k,m] = Aᵀ · G
                    gemm(k, rows, m, gr.value(a), true, grad, false, d, S::one());
                }
            });
        }
        Op::BatchMatMul { a, b, trans_b } => {
            let (a, b, trans_b) = (*a, *b, *trans_b);
            let (batch, n, k) = {
                let s = g.shape(a);
                (s[0], s[1], s[2])
            };
            let m = out_shape[2];
            g.with_grad_buf(a, |d, gr| {
                let bv = gr.value(b);
                for i in 0..batch {
                    gemm(
                        n,
                        m,
                        k,
                        &grad[i * n * m..(i + 1) * n * m],
                        false,
                        &bv[i * k * m..(i + 1) * k * m],
                        !trans_b,
                        &mut d[i * n * k..(i + 1) * n * k],
                        S::one(),
                    );
                }
            });
            g.with_grad_buf(b, |d, gr| {
                let av = gr.value(a);
                for i in 0..batch {
                    let gi = &grad[i * n * m..(i + 1) * n * m];
                    let ai = &av[i * n * k..(i + 1) * n * k];
                    let di = &mut d[i * k * m..(i + 1) * k * m];
                    if trans_b {
                        gemm(m, n, k, gi, true, ai, false, di, S::one());
                    } else {
                        gemm(k, n, m, ai, true, gi, false, di, S::one());
                    }
                }
            });
        }
        Op::Gelu(x) => {
            let x = *x;
            g.with_grad_buf(x, |d, gr| {
                for ((d, &s), &v) in d.iter_mut().zip(grad).zip(gr.value(x)) {
                    *d = *d + s * gelu_grad(v);
                }
            });
        }
        Op::Tanh(x) => {
            let y = g.nodes[i].value.clone();
            g.with_grad_buf(*x, |d, _| {
                for ((d, &s), &y) in d.iter_mut().zip(grad).zip(&y) {
                    *d = *d + s * (S::one() - y * y);
                }
            });
        }
        Op::Embedding { table, ids } => {
            let d_model = last_dim(&out_shape);
            g.with_grad_buf(*table, |d, _| {
                for (row, &id) in ids.iter().enumerate() {
                    let src = &grad[row * d_model..(row + 1) * d_model];
                    add_into(&mut d[id * d_model..(id + 1) * d_model], src);
                }
            });
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let n = last_dim(&out_shape);
            let gam = g.value(*gamma).to_vec();
            g.with_grad_buf(*gamma, |d, _| {
                for (gr, xh) in grad.chunks(n).zip(xhat.chunks(n)) {
                    for j in 0..n {
                        d[j] = d[j] + gr[j] * xh[j];
                    }
                }
            });
            g.with_grad_buf(*beta, |d, _| {
                for gr in grad.chunks(n) {
                    add_into(d, gr);
                }
            });
            g.with_grad_buf(*x, |d, _| {
                for (r, (gr, xh)) in grad.chunks(n).zip(xhat.chunks(n)).enumerate() {
                    let mut mean_dxhat = 0.0f64;
                    let mut mean_dxhat_xhat = 0.0f64;
                    for j in 0..n {
                        let dx = (gr[j] * gam[j]).as_f64();
                        mean_dxhat += dx;
                        mean_dxhat_xhat += dx * xh[j].as_f64();
                    }
                    mean_dxhat /= n as f64;
                    mean_dxhat_xhat /= n as f64;
                    let rs = rstd[r].as_f64();
                    for j in 0..n {
                        let dx = (gr[j] * gam[j]).as_f64();
                        let delta = rs * (dx - mean_dxhat - xh[j].as_f64() * mean_dxhat_xhat);
                        d[r * n + j] = d[r * n + j] + S::from_f64(delta);
                    }
                }
            });
        }
        Op::Softmax { x, .. } => {
            let cols = last_dim(&out_shape);
            let y = std::mem::take(&mut g.nodes[i].value);
            g.with_grad_buf(*x, |d, _| {
                for ((d, gr), y) in d.chunks_mut(cols).zip(grad.chunks(cols)).zip(y.chunks(cols)) {
                    let dot: f64 = gr.iter().zip(y).map(|(&a, &b)| (a * b).as_f64()).sum();
                    let dot = S::from_f64(dot);
                    for j in 0..cols {
                        d[j] = d[j] + y[j] * (gr[j] - dot);
                    }
                }
            });
            g.nodes[i].value = y;
        }
        Op::CrossEntropy {
            logits,
            targets,
            mask,
            probs,
            count,
        } => {
            let vocab = probs.len() / targets.len().max(1);
            let scale = grad[0] / S::from_f64(*count as f64);
            g.with_grad_buf(*logits, |d, _| {
                for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let row = &mut d[r * vocab..(r + 1) * vocab];
                    for (d, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                        *d = *d + scale * p;
                    }
                    row[t] = row[t] - scale;
                }
            });
        }
        Op::Dropout { x, scale_mask } => {
            g.with_grad_buf(*x, |d, _| {
                for ((d, &s), &m) in d.iter_mut().zip(grad).zip(scale_mask) {
                    *d = *d + s * m;
                }
            });
        }
        Op::SplitHeads {
            x,
            batch,
            seq,
            heads,
        } => {
            let (batch, seq, heads) = (*batch, *seq, *heads);
            let dh = out_shape[2];
            let width = heads * dh;
            g.with_grad_buf(*x, |d, _| {
                for b in 0..batch {
                    for t in 0..seq {
                        for h in 0..heads {
                            let src = ((b * heads + h) * seq + t) * dh;
                            let dst = (b * seq + t) * width + h * dh;
                            add_into(&mut d[dst..dst + dh], &grad[src..src + dh]);
                        }
                    }
                }
            });
        }
        Op::MergeHeads {
            x,
            batch,
            seq,
            heads,
        } => {
            let (batch, seq, heads) = (*batch, *seq, *heads);
            let width = last_dim(&out_shape);
            let dh = width / heads;
            g.with_grad_buf(*x, |d, _| {
                for b in 0..batch {
                    for t in 0..seq {
                        for h in 0..heads {
                            let dst = ((b * heads + h) * seq + t) * dh;
                            let src = (b * seq + t) * width + h * dh;
                            add_into(&mut d[dst..dst + dh], &grad[src..src + dh]);
                        }
                    }
                }
            });
        }
    }
    g.nodes[i].op = op;
}
