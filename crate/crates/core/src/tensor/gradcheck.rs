use super::{Graph, Scalar, Tensor, TensorError, Var};

/// A scalar function of parameter tensors, buildable on a tape of any
/// precision.
pub trait ScalarFn {
    fn eval<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var]) -> Result<Var, TensorError>;
}

/// Compares `f32` reverse-mode gradients of `f` against central differences
/// and returns the worst relative error over all coordinates.
///
/// The finite differences are taken on an `f64` tape so their truncation and
/// rounding error sits far below the tolerance being checked. The error of
/// one coordinate is `|analytic - numeric| / max(|analytic|, |numeric|)`,
/// with coordinates where both are below `1e-6` in magnitude counted as exact.
pub fn grad_check<F: ScalarFn>(f: &F, params: &[Tensor], eps: f32) -> Result<f64, TensorError> {
    grad_check_in::<f32, F>(f, params, eps)
}

/// [`grad_check`] with the analytic gradients taken on an `A` tape. Deep
/// composites accumulate `f32` rounding of order 1e-9 in every coordinate,
/// which is a large relative error on coordinates near 1e-5; an `f64` tape
/// runs the same backward code without that noise.
pub fn grad_check_in<A: Scalar, F: ScalarFn>(f: &F, params: &[Tensor], eps: f32) -> Result<f64, TensorError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::InvalidEpsilon(eps));
    }

    let work: Vec<Tensor> = params
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.set_requires_grad(true);
            p
        })
        .collect();

    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::<A>::eval_mode();
        let vars: Vec<Var> = work.iter().map(|p| g.input(p)).collect();
        let out = f.eval(&mut g, &vars)?;
        if !g.scalar(out).is_finite() {
            return Err(TensorError::NonFiniteEvaluation);
        }
        g.backward(out)?;
        vars.iter()
            .zip(&work)
            .map(|(v, p)| g.grad(*v).map_or_else(|| vec![0.0; p.len()], |gr| gr.iter().map(|x| x.as_f64()).collect()))
            .collect()
    };

    let eps = eps as f64;
    let mut worst = 0.0f64;
    for pi in 0..work.len() {
        for j in 0..work[pi].len() {
            let fp = eval_shifted(f, &work, pi, j, eps)?;
            let fm = eval_shifted(f, &work, pi, j, -eps)?;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[pi][j];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-6 {
                worst = worst.max((a - numeric).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Evaluates `f` in `f64` with coordinate `j` of parameter `pi` shifted by `delta`.
fn eval_shifted<F: ScalarFn>(
    f: &F,
    params: &[Tensor],
    pi: usize,
    j: usize,
    delta: f64,
) -> Result<f64, TensorError> {
    let mut g = Graph::<f64>::eval_mode();
    let vars: Vec<Var> = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut data: Vec<f64> = p.data().iter().map(|&x| x as f64).collect();
            if i == pi {
                data[j] += delta;
            }
            g.constant(p.shape().to_vec(), data).expect("shape already validated")
        })
        .collect();
    let out = f.eval(&mut g, &vars)?;
    let y = g.scalar(out);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(TensorError::NonFiniteEvaluation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SumOf;
    impl ScalarFn for SumOf {
        fn eval<S: Scalar>(&self, g: &mut Graph<S>, p: &[Var]) -> Result<Var, TensorError> {
            Ok(g.sum(p[0]))
        }
    }

    struct Dot;
    impl ScalarFn for Dot {
        fn eval<S: Scalar>(&self, g: &mut Graph<S>, p: &[Var]) -> Result<Var, TensorError> {
            let prod = g.mul(p[0], p[1])?;
            Ok(g.sum(prod))
        }
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let p = [Tensor::zeros(&[1])];
        let err = grad_check(&SumOf, &p, 0.0).unwrap_err();
        assert_eq!(err, TensorError::InvalidEpsilon(0.0));
    }

    #[test]
    fn dot_product_matches_to_high_precision() {
        let a = Tensor::new(vec![4], vec![0.5, -1.25, 2.0, 0.75]).unwrap();
        let b = Tensor::new(vec![4], vec![1.5, 0.25, -0.5, 3.0]).unwrap();
        let err = grad_check(&Dot, &[a, b], 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_value_is_reported() {
        let a = Tensor::new(vec![1], vec![f32::INFINITY]).unwrap();
        let err = grad_check(&SumOf, &[a], 1e-3).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteEvaluation);
    }
}
