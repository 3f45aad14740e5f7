use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for a fixed, ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update using each tensor's accumulated `grad`.
/// Tensors without a gradient are treated as having a zero gradient.
/// Nothing is modified when a shape check or finiteness check fails.
pub fn adam_step(params: &mut [Tensor], state: &mut AdamState, lr: f32) -> Result<(), TensorError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(TensorError::InvalidLearningRate(lr));
    }
    if state.m.len() != params.len() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            left: vec![state.m.len()],
            right: vec![params.len()],
        });
    }
    for (i, (p, m)) in params.iter().zip(&state.m).enumerate() {
        if p.len() != m.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: vec![m.len()],
                right: p.shape().to_vec(),
            });
        }
        if p.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(TensorError::NonFiniteGradient(i));
        }
    }

    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - (beta1 as f64).powi(state.t as i32);
    let bc2 = 1.0 - (beta2 as f64).powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Some(grad) = p.grad.take() else {
            // zero gradient: moments decay, and stay zero from a fresh state
            m.iter_mut().for_each(|x| *x *= beta1);
            v.iter_mut().for_each(|x| *x *= beta2);
            let data = p.data_mut();
            for ((w, m), v) in data.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = *m as f64 / bc1;
                let vhat = *v as f64 / bc2;
                *w -= (lr as f64 * mhat / (vhat.sqrt() + eps as f64)) as f32;
            }
            continue;
        };
        let data = p.data_mut();
        for (((w, g), m), v) in data.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m as f64 / bc1;
            let vhat = *v as f64 / bc2;
            *w -= (lr as f64 * mhat / (vhat.sqrt() + eps as f64)) as f32;
        }
        p.grad = Some(grad);
    }
    Ok(())
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut [Tensor], max_norm: f32) -> f32 {
    let total: f64 = params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum();
    let norm = total.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            if let Some(g) = p.grad.as_mut() {
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    norm
}
