//! Finite-difference checks of every tape op, the Chamfer gradients and the
//! full model loss.

use super::{numeric_grad, random_cloud, relative_error, rng, uniform};
use foldgraph::autodiff::{Tape, Var};
use foldgraph::network::{FilterKind, ModelConfig, ModelState};
use foldgraph::pointcloud::{self, LossKind, PointCloud};
use rand_chacha::ChaCha8Rng;

/// One differentiable op under test: input shapes, an input sampler and the
/// graph built from the leaves.
pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<(usize, usize)>,
    pub sample: fn(&mut ChaCha8Rng, (usize, usize)) -> Vec<f64>,
    pub build: fn(&mut Tape, &[Var]) -> Var,
    pub tolerance: f64,
}

fn plain(rng: &mut ChaCha8Rng, s: (usize, usize)) -> Vec<f64> {
    uniform(rng, s.0 * s.1)
}

/// Inputs bounded away from zero so ReLU kinks stay out of the stencil.
fn off_kink(rng: &mut ChaCha8Rng, s: (usize, usize)) -> Vec<f64> {
    uniform(rng, s.0 * s.1).into_iter().map(|v| if v.abs() < 0.05 { v + 0.1_f64.copysign(v) } else { v }).collect()
}

fn nonneg(rng: &mut ChaCha8Rng, s: (usize, usize)) -> Vec<f64> {
    uniform(rng, s.0 * s.1).into_iter().map(|v| 0.1 + v.abs()).collect()
}

fn spd_from(tape: &mut Tape, b: Var) -> Var {
    let bt = tape.transpose(b);
    let g = tape.matmul(b, bt).unwrap();
    tape.shift_diagonal(g, 2.0).unwrap()
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase { name: "matmul", shapes: vec![(3, 4), (4, 2)], sample: plain, build: |t, v| t.matmul(v[0], v[1]).unwrap(), tolerance: 1e-4 },
        OpCase { name: "add", shapes: vec![(3, 2), (3, 2)], sample: plain, build: |t, v| t.add(v[0], v[1]).unwrap(), tolerance: 1e-4 },
        OpCase { name: "sub", shapes: vec![(3, 2), (3, 2)], sample: plain, build: |t, v| t.sub(v[0], v[1]).unwrap(), tolerance: 1e-4 },
        OpCase { name: "mul", shapes: vec![(2, 3), (2, 3)], sample: plain, build: |t, v| t.mul(v[0], v[1]).unwrap(), tolerance: 1e-4 },
        OpCase { name: "scale", shapes: vec![(2, 3)], sample: plain, build: |t, v| t.scale(v[0], -1.7), tolerance: 1e-4 },
        OpCase {
            name: "add_row_vector",
            shapes: vec![(4, 3), (1, 3)],
            sample: plain,
            build: |t, v| t.add_row_vector(v[0], v[1]).unwrap(),
            tolerance: 1e-4,
        },
        OpCase { name: "relu", shapes: vec![(3, 4)], sample: off_kink, build: |t, v| t.relu(v[0]), tolerance: 1e-4 },
        OpCase { name: "softmax_rows", shapes: vec![(3, 5)], sample: plain, build: |t, v| t.softmax_rows(v[0]), tolerance: 1e-4 },
        OpCase { name: "maxpool_rows", shapes: vec![(6, 3)], sample: plain, build: |t, v| t.maxpool_rows(v[0]).unwrap(), tolerance: 1e-4 },
        OpCase {
            name: "concat_cols",
            shapes: vec![(3, 2), (3, 4)],
            sample: plain,
            build: |t, v| t.concat_cols(v[0], v[1]).unwrap(),
            tolerance: 1e-4,
        },
        OpCase { name: "repeat_rows", shapes: vec![(1, 3)], sample: plain, build: |t, v| t.repeat_rows(v[0], 4).unwrap(), tolerance: 1e-4 },
        OpCase { name: "slice_rows", shapes: vec![(5, 2)], sample: plain, build: |t, v| t.slice_rows(v[0], 1, 3).unwrap(), tolerance: 1e-4 },
        OpCase { name: "transpose", shapes: vec![(2, 5)], sample: plain, build: |t, v| t.transpose(v[0]), tolerance: 1e-4 },
        OpCase { name: "sum", shapes: vec![(3, 3)], sample: plain, build: |t, v| t.sum(v[0]), tolerance: 1e-4 },
        OpCase {
            name: "shift_diagonal",
            shapes: vec![(4, 4)],
            sample: plain,
            build: |t, v| t.shift_diagonal(v[0], 0.5).unwrap(),
            tolerance: 1e-4,
        },
        OpCase { name: "laplacian", shapes: vec![(5, 5)], sample: nonneg, build: |t, v| t.laplacian(v[0]).unwrap(), tolerance: 1e-4 },
        OpCase {
            name: "spd_solve",
            shapes: vec![(4, 4), (4, 2)],
            sample: plain,
            build: |t, v| {
                let a = spd_from(t, v[0]);
                t.spd_solve(a, v[1]).unwrap()
            },
            tolerance: 1e-3,
        },
        OpCase {
            name: "laplacian_solve_chain",
            shapes: vec![(5, 5), (5, 3)],
            sample: nonneg,
            build: |t, v| {
                let l = t.laplacian(v[0]).unwrap();
                let s = t.shift_diagonal(l, 0.5).unwrap();
                t.spd_solve(s, v[1]).unwrap()
            },
            tolerance: 1e-3,
        },
    ]
}

/// Reduces an op output to a scalar with fixed random weights, then returns
/// the relative error between backward and central differences.
pub fn check_op(case: &OpCase, seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs: Vec<Vec<f64>> = case.shapes.iter().map(|&s| (case.sample)(&mut r, s)).collect();
    let probe = {
        let mut t = Tape::new();
        let vars: Vec<Var> = case.shapes.iter().zip(&inputs).map(|(&(a, b), x)| t.leaf(a, b, x.clone()).unwrap()).collect();
        let out = (case.build)(&mut t, &vars);
        t.shape(out)
    };
    let weights = uniform(&mut r, probe.len());
    let eval = |tape: &mut Tape, xs: &[Vec<f64>]| -> (Vec<Var>, Var) {
        let vars: Vec<Var> = case.shapes.iter().zip(xs).map(|(&(a, b), x)| tape.leaf(a, b, x.clone()).unwrap()).collect();
        let out = (case.build)(tape, &vars);
        let w = tape.constant(probe.rows, probe.cols, weights.clone()).unwrap();
        let prod = tape.mul(out, w).unwrap();
        (vars, tape.sum(prod))
    };

    let mut tape = Tape::new();
    let (vars, loss) = eval(&mut tape, &inputs);
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = vars.iter().flat_map(|&v| tape.grad(v).unwrap().to_vec()).collect();

    let flat: Vec<f64> = inputs.concat();
    let split = |x: &[f64]| -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut at = 0;
        for &(a, b) in &case.shapes {
            out.push(x[at..at + a * b].to_vec());
            at += a * b;
        }
        out
    };
    let numeric = numeric_grad(&flat, |x| {
        let mut t = Tape::new();
        let (_, l) = eval(&mut t, &split(x));
        t.scalar(l).unwrap()
    });
    relative_error(&analytic, &numeric)
}

/// Gradient of a Chamfer loss with respect to the reconstruction, through
/// the tape's linearized scalar.
pub fn check_chamfer(kind: LossKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let s = random_cloud(&mut r, 9);
    let rec = random_cloud(&mut r, 7);
    let mut tape = Tape::new();
    let v = tape.leaf(7, 3, rec.flat()).unwrap();
    let (value, grad) = pointcloud::loss_and_grad(kind, &s, &rec).unwrap();
    let l = tape.linearized_scalar(v, value, grad).unwrap();
    tape.backward(l).unwrap();
    let analytic = tape.grad(v).unwrap().to_vec();
    let numeric = numeric_grad(&rec.flat(), |x| {
        let r = PointCloud::from_flat(x).unwrap();
        pointcloud::loss_and_grad(kind, &s, &r).unwrap().0
    });
    relative_error(&analytic, &numeric)
}

/// End-to-end: the tiny model's loss with respect to every parameter.
pub fn check_model(filter: FilterKind, seed: u64) -> f64 {
    let cfg = ModelConfig { filter, ..ModelConfig::tiny() };
    let mut model = ModelState::new(cfg, seed).unwrap();
    let mut r = rng(seed + 1000);
    // biases start at exactly zero, which puts dead ReLU units on their kink;
    // a random offset moves the check to a differentiable point
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.iter().zip(model.parameters_mut()) {
        if name.ends_with(".bias") {
            let n = p.as_slice().len();
            p.as_mut_slice().copy_from_slice(&uniform(&mut r, n).iter().map(|v| 0.1 * v).collect::<Vec<_>>());
        }
    }
    let cloud = random_cloud(&mut r, 12);

    let mut tape = Tape::new();
    let b = model.bind(&mut tape, true);
    let loss = model.loss_on(&mut tape, &b, &cloud, LossKind::Augmented).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = b
        .params()
        .iter()
        .flat_map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.shape(v).len()]))
        .collect();

    let flat: Vec<f64> = model.parameters().iter().flat_map(|(_, m)| m.as_slice().to_vec()).collect();
    let numeric = numeric_grad(&flat, |x| {
        let mut m = model.clone();
        let mut at = 0;
        for p in m.parameters_mut() {
            let n = p.as_slice().len();
            p.as_mut_slice().copy_from_slice(&x[at..at + n]);
            at += n;
        }
        m.loss(&cloud, LossKind::Augmented).unwrap()
    });
    relative_error(&analytic, &numeric)
}
