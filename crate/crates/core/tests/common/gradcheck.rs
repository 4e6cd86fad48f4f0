//! Central finite-difference oracle for every layer kind, 64-bit.
//!
//! Each check builds `L = Σ R ⊙ layer(x; θ)` with a fixed random cotangent
//! `R`, so `∂L/∂· = backward(R)`. The oracle perturbs one scalar at a time by
//! ±h and never touches the backward kernels.

use iris_core::tensor::ops::Padding;
use iris_core::tensor::{GradientTape, ParamSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Conv3x3,
    Conv1x1,
    TransposeConv2x2,
    MaxPool2x2,
    Upsample2x,
    Relu,
    Sigmoid,
    Concat,
}

pub const ALL: [Kind; 8] = [
    Kind::Conv3x3,
    Kind::Conv1x1,
    Kind::TransposeConv2x2,
    Kind::MaxPool2x2,
    Kind::Upsample2x,
    Kind::Relu,
    Kind::Sigmoid,
    Kind::Concat,
];

pub struct Report {
    pub kind: Kind,
    pub checked: usize,
    pub max_rel_err: f64,
}

struct Case {
    params: ParamSet<f64>,
    inputs: Vec<Tensor<f64>>,
}

fn build(kind: Kind, rng: &mut ChaCha8Rng) -> Case {
    let mut params = ParamSet::new();
    let u = |shape: [usize; 4], rng: &mut ChaCha8Rng| Tensor::<f64>::random_uniform(shape, -1.0, 1.0, rng);
    let inputs = match kind {
        Kind::Conv3x3 => {
            params.push("w", vec![4, 3, 3, 3], u([4, 3, 3, 3], rng)).unwrap();
            params.push("b", vec![4], u([4, 1, 1, 1], rng)).unwrap();
            vec![u([2, 3, 6, 5], rng)]
        }
        Kind::Conv1x1 => {
            params.push("w", vec![8, 16, 1, 1], u([8, 16, 1, 1], rng)).unwrap();
            params.push("b", vec![8], u([8, 1, 1, 1], rng)).unwrap();
            vec![u([1, 16, 4, 4], rng)]
        }
        Kind::TransposeConv2x2 => {
            params.push("w", vec![8, 4, 2, 2], u([8, 4, 2, 2], rng)).unwrap();
            params.push("b", vec![4], u([4, 1, 1, 1], rng)).unwrap();
            vec![u([1, 8, 3, 4], rng)]
        }
        Kind::MaxPool2x2 => {
            // Distinct values on a 1e-2 lattice keep every window's argmax
            // stable under ±h perturbations.
            let n = 2 * 2 * 8 * 8;
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 1e-2 - 1.28).collect();
            for i in (1..n).rev() {
                vals.swap(i, rng.random_range(0..=i));
            }
            vec![Tensor::from_vec([2, 2, 8, 8], vals).unwrap()]
        }
        Kind::Relu => {
            let t = Tensor::from_fn([1, 2, 8, 8], |_| {
                let v: f64 = rng.random_range(0.05..1.0);
                if rng.random_bool(0.5) { v } else { -v }
            });
            vec![t]
        }
        Kind::Upsample2x | Kind::Sigmoid => vec![u([1, 2, 8, 8], rng)],
        Kind::Concat => vec![u([1, 2, 4, 6], rng), u([1, 3, 4, 6], rng)],
    };
    Case { params, inputs }
}

fn forward(kind: Kind, params: &ParamSet<f64>, inputs: &[Tensor<f64>]) -> (GradientTape<f64>, Vec<Var>, Var) {
    let mut tape = GradientTape::new();
    let xs: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let y = match kind {
        Kind::Conv3x3 | Kind::Conv1x1 => {
            let w = tape.param(params, 0);
            let b = tape.param(params, 1);
            tape.conv2d(xs[0], w, Some(b), Padding::Same).unwrap()
        }
        Kind::TransposeConv2x2 => {
            let w = tape.param(params, 0);
            let b = tape.param(params, 1);
            tape.conv_transpose2x2(xs[0], w, Some(b)).unwrap()
        }
        Kind::MaxPool2x2 => tape.max_pool2x2(xs[0]).unwrap(),
        Kind::Upsample2x => tape.upsample2x(xs[0]).unwrap(),
        Kind::Relu => tape.relu(xs[0]).unwrap(),
        Kind::Sigmoid => tape.sigmoid(xs[0]).unwrap(),
        Kind::Concat => tape.concat(xs[0], xs[1]).unwrap(),
    };
    (tape, xs, y)
}

fn loss(kind: Kind, params: &ParamSet<f64>, inputs: &[Tensor<f64>], r: &Tensor<f64>) -> f64 {
    let (tape, _, y) = forward(kind, params, inputs);
    tape.value(y).dot(r).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Checks every parameter and every input scalar of one layer kind.
pub fn check(kind: Kind, seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = build(kind, &mut rng);
    let (tape, xs, y) = forward(kind, &case.params, &case.inputs);
    let r = Tensor::<f64>::random_uniform(tape.value(y).shape(), -1.0, 1.0, &mut rng);
    let grads = tape.backward(y, &r, &case.params).unwrap();

    let mut checked = 0;
    let mut worst = 0.0f64;
    for slot in 0..case.params.len() {
        for i in 0..case.params.get(slot).len() {
            let mut plus = case.params.clone();
            plus.get_mut(slot).data_mut()[i] += H;
            let mut minus = case.params.clone();
            minus.get_mut(slot).data_mut()[i] -= H;
            let numeric = (loss(kind, &plus, &case.inputs, &r) - loss(kind, &minus, &case.inputs, &r)) / (2.0 * H);
            worst = worst.max(rel_err(grads.params[slot].data()[i], numeric));
            checked += 1;
        }
    }
    for (k, x) in xs.iter().enumerate() {
        let analytic = grads.wrt(*x).expect("input feeds the output");
        for i in 0..case.inputs[k].len() {
            let mut plus = case.inputs.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = case.inputs.clone();
            minus[k].data_mut()[i] -= H;
            let numeric = (loss(kind, &case.params, &plus, &r) - loss(kind, &case.params, &minus, &r)) / (2.0 * H);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
            checked += 1;
        }
    }
    Report { kind, checked, max_rel_err: worst }
}
