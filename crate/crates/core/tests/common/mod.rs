//! Finite-difference gradient checking and label-grid fixtures shared by
//! the integration tests.

#![allow(dead_code)]

use hvcpcb::geometry::{GridPosition, RotationLabel};
use hvcpcb::raster::Image;
use hvcpcb::synthgen::{GroundTruth, LabeledSample, Split};
use hvcpcb::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Norm-wise relative error between analytic and numeric gradients of the
/// scalar produced by `f` with respect to each of `inputs`.
pub fn fd_errors(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var) -> Vec<f64> {
    let eval = |values: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&mut tape, &vars);
        (tape, vars, out)
    };
    let (mut tape, vars, out) = eval(inputs);
    tape.backward(out).unwrap();

    let mut errors = Vec::new();
    for (which, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[which].shape()));
        let mut numeric = vec![0.0; inputs[which].len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[i] -= H;
            let (tp, _, op) = eval(&plus);
            let (tm, _, om) = eval(&minus);
            *slot = (tp.value(op).item() - tm.value(om).item()) / (2.0 * H);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .data()
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
            .max(1e-12);
        errors.push(diff / scale);
    }
    errors
}

/// Contracts an arbitrary-shaped output with fixed random weights so every
/// output element gets a distinct upstream gradient.
pub fn contract(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random(tape.value(out).shape(), &mut rng);
    let r = tape.constant(r);
    let p = tape.hadamard(out, r).unwrap();
    tape.sum(p)
}

pub fn assert_fd(name: &str, inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var) {
    for (i, e) in fd_errors(inputs, f).into_iter().enumerate() {
        assert!(e <= TOL, "{name}: input {i} relative error {e:e}");
    }
}

/// Full generation grid with 1x1 images whose value is the class id.
pub fn grid_dataset(classes: usize) -> Vec<LabeledSample> {
    let mut out = Vec::new();
    for class_id in 0..classes {
        for position in GridPosition::all() {
            for rotation in RotationLabel::ALL {
                for split in Split::BOTH {
                    for copy in 0..split.copies() {
                        out.push(LabeledSample {
                            image: Image::filled(1, 1, 3, class_id as f32),
                            class_id,
                            rotation,
                            position,
                            truth: GroundTruth { theta_deg: 0.0, ratio_y: 0.0, ratio_x: 0.0 },
                            split,
                            copy,
                        });
                    }
                }
            }
        }
    }
    out
}
