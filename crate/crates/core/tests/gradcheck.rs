mod common;

use common::grad::{check_chamfer, check_model, check_op, op_cases};
use foldgraph::autodiff::Tape;
use foldgraph::network::FilterKind;
use foldgraph::pointcloud::LossKind;

#[test]
fn every_op_matches_finite_differences() {
    for case in op_cases() {
        for seed in 0..20 {
            let err = check_op(&case, seed);
            assert!(err < case.tolerance, "{} seed {seed}: relative error {err:e}", case.name);
        }
    }
}

#[test]
fn chamfer_gradients_match_finite_differences() {
    for kind in [LossKind::Augmented, LossKind::Plain] {
        for seed in 0..20 {
            let err = check_chamfer(kind, seed);
            assert!(err < 1e-4, "{kind:?} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn model_loss_matches_finite_differences() {
    for filter in [FilterKind::None, FilterKind::Adjacency, FilterKind::Laplacian] {
        for seed in 0..20 {
            let err = check_model(filter, seed);
            assert!(err < 1e-3, "{filter} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let a = t.leaf(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let c = t.constant(2, 2, vec![1.0; 4]).unwrap();
    let p = t.mul(a, c).unwrap();
    let l = t.sum(p);
    t.backward(l).unwrap();
    assert_eq!(t.grad(a).unwrap(), &[1.0; 4]);
    assert!(t.grad(c).is_none());
}
