mod support;

use distill_core::tensor::{Graph, Tensor};
use support::primitives::{composite_errors, primitives_max_error};

const TOL: f64 = 1e-4;
const STEP: f32 = 1e-3;

#[test]
fn every_primitive_passes_grad_check() {
    let (err, prim) = primitives_max_error(STEP).unwrap();
    assert!(err < TOL, "{prim:?}: relative error {err:e}");
}

#[test]
fn two_layer_decoder_passes_grad_check() {
    let (err, loose) = composite_errors(STEP).unwrap();
    assert!(err < TOL, "relative error {err:e}");
    // the f32 tape agrees to f32 accuracy in absolute terms
    assert!(loose < 1e-2, "f32 relative error {loose:e}");
}

#[test]
fn dropout_backward_is_its_mask() {
    let mut g = Graph::training(3);
    let x = Tensor::new(vec![64], (1..=64).map(|i| i as f32 / 8.0).collect())
        .unwrap()
        .with_grad();
    let xv = g.input(&x);
    let y = g.dropout(xv, 0.3);
    let s = g.sum(y);
    g.backward(s).unwrap();
    let out = g.value(y).to_vec();
    let grad = g.grad(xv).unwrap();
    for ((o, gr), xi) in out.iter().zip(grad).zip(x.data()) {
        assert!((gr * xi - o).abs() < 1e-5, "{gr} * {xi} != {o}");
    }
}
