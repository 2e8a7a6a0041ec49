//! Reverse-mode gradients of every op, and of a whole tiny CCAT model,
//! against central finite differences in double precision.

use ctscan_core::ccat::{CcatConfig, CcatModel};
use ctscan_core::nn::Model;
use ctscan_core::tensor::gradcheck::{check_gradients, check_model};
use ctscan_core::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 100;
const STEP: f64 = 1e-6;
const OP_TOL: f64 = 1e-5;
const MODEL_TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from 0 so the LeakyReLU kink is never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `sum(out ⊙ w)` for a fixed random `w`, so every output element carries a
/// distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = rand_tensor(&mut rng, tape.shape(out));
    let w = tape.constant(w)?;
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=5)
}

/// Runs `trials` random cases; `make` returns the inputs and the op.
fn run(name: &str, make: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>)) {
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let (inputs, op) = make(&mut rng);
        let f = move |t: &mut Tape<f64>, v: &[Var]| -> Result<Var> {
            let out = op(t, v)?;
            weighted_sum(t, out, trial)
        };
        let r = check_gradients(&inputs, &f, STEP).unwrap();
        assert!(r.max_rel_err <= OP_TOL, "{name} trial {trial}: {r:?}");
        worst = worst.max(r.max_rel_err);
    }
    eprintln!("{name}: worst relative error {worst:.2e}");
}

#[test]
fn matmul() {
    run("matmul", |rng| {
        let (m, k, n) = (dim(rng), dim(rng), dim(rng));
        (
            vec![rand_tensor(rng, &[m, k]), rand_tensor(rng, &[k, n])],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        )
    });
}

#[test]
fn add_mul_scale() {
    run("add", |rng| {
        let s = [dim(rng), dim(rng)];
        (vec![rand_tensor(rng, &s), rand_tensor(rng, &s)], Box::new(|t, v| t.add(v[0], v[1])))
    });
    run("mul", |rng| {
        let s = [dim(rng), dim(rng)];
        (vec![rand_tensor(rng, &s), rand_tensor(rng, &s)], Box::new(|t, v| t.mul(v[0], v[1])))
    });
    run("scale", |rng| {
        let s = [dim(rng), dim(rng)];
        let c = rng.random_range(-2.0..2.0);
        (vec![rand_tensor(rng, &s)], Box::new(move |t, v| t.scale(v[0], c)))
    });
}

#[test]
fn biases() {
    run("add_row_bias", |rng| {
        let (m, n) = (dim(rng), dim(rng));
        (
            vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[n])],
            Box::new(|t, v| t.add_row_bias(v[0], v[1])),
        )
    });
    run("add_col_bias", |rng| {
        let (m, n) = (dim(rng), dim(rng));
        (
            vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m])],
            Box::new(|t, v| t.add_col_bias(v[0], v[1])),
        )
    });
}

#[test]
fn leaky_relu() {
    run("leaky_relu", |rng| {
        let s = [dim(rng), dim(rng)];
        let slope = rng.random_range(0.01..0.9);
        (vec![away_from_zero(rng, &s)], Box::new(move |t, v| t.leaky_relu(v[0], slope)))
    });
}

#[test]
fn softmax() {
    run("softmax", |rng| {
        let s = [dim(rng), dim(rng) + 1, dim(rng)];
        let axis = rng.random_range(0..3);
        (vec![rand_tensor(rng, &s)], Box::new(move |t, v| t.softmax(v[0], axis)))
    });
}

#[test]
fn layer_norm() {
    run("layer_norm", |rng| {
        let (m, n) = (dim(rng), dim(rng) + 1);
        (
            vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[n]), rand_tensor(rng, &[n])],
            Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
        )
    });
}

#[test]
fn conv2d() {
    run("conv2d", |rng| {
        let (c, o) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(3..=6), rng.random_range(3..=6));
        let k = rng.random_range(1..=3);
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=1);
        (
            vec![rand_tensor(rng, &[c, h, w]), rand_tensor(rng, &[o, c, k, k]), rand_tensor(rng, &[o])],
            Box::new(move |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride, pad)),
        )
    });
}

#[test]
fn conv2d_on_2x5x5() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = vec![rand_tensor(&mut rng, &[2, 5, 5]), rand_tensor(&mut rng, &[3, 2, 3, 3])];
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let out = t.conv2d(v[0], v[1], None, 1, 1)?;
        weighted_sum(t, out, 5)
    };
    let r = check_gradients(&inputs, &f, STEP).unwrap();
    assert!(r.max_rel_err <= 1e-6, "{r:?}");
}

#[test]
fn cross_entropy() {
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let (n, c) = (dim(&mut rng), dim(&mut rng) + 1);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let inputs = vec![rand_tensor(&mut rng, &[n, c])];
        let f = |t: &mut Tape<f64>, v: &[Var]| t.cross_entropy(v[0], &labels);
        let r = check_gradients(&inputs, &f, STEP).unwrap();
        assert!(r.max_rel_err <= OP_TOL, "trial {trial}: {r:?}");
        worst = worst.max(r.max_rel_err);
    }
    eprintln!("cross_entropy: worst relative error {worst:.2e}");
}

#[test]
fn reductions_and_reshapes() {
    run("sum", |rng| {
        let s = [dim(rng), dim(rng)];
        (vec![rand_tensor(rng, &s)], Box::new(|t, v| t.sum(v[0])))
    });
    run("mean_rows", |rng| {
        let s = [dim(rng), dim(rng)];
        (vec![rand_tensor(rng, &s)], Box::new(|t, v| t.mean_rows(v[0])))
    });
    run("transpose", |rng| {
        let s = [dim(rng), dim(rng)];
        (vec![rand_tensor(rng, &s)], Box::new(|t, v| t.transpose(v[0])))
    });
    run("reshape", |rng| {
        let (a, b) = (dim(rng), dim(rng));
        (vec![rand_tensor(rng, &[a, b])], Box::new(move |t, v| t.reshape(v[0], &[b, a])))
    });
}

#[test]
fn slicing_and_stacking() {
    run("slice_cols", |rng| {
        let (m, n) = (dim(rng), dim(rng) + 1);
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=n - start);
        (vec![rand_tensor(rng, &[m, n])], Box::new(move |t, v| t.slice_cols(v[0], start, len)))
    });
    run("concat_cols", |rng| {
        let m = dim(rng);
        let count = rng.random_range(1..=3);
        let parts: Vec<_> = (0..count)
            .map(|_| {
                let n = dim(rng);
                rand_tensor(rng, &[m, n])
            })
            .collect();
        (parts, Box::new(|t, v| t.concat_cols(v)))
    });
    run("stack_rows", |rng| {
        let d = dim(rng);
        let count = rng.random_range(1..=4);
        let rows: Vec<_> = (0..count).map(|_| rand_tensor(rng, &[1, d])).collect();
        (rows, Box::new(|t, v| t.stack_rows(v)))
    });
}

fn tiny(heads: usize) -> CcatConfig {
    CcatConfig {
        input_hw: (8, 8),
        backbone_channels: vec![4, 4],
        d_model: 8,
        heads,
        depth: 1,
        slices: 2,
        slice_stride: 1,
        hidden: (6, 4),
        ..CcatConfig::default()
    }
}

/// Every parameter (including the zero-initialized last layer and the
/// near-zero gating matrices) is re-drawn so no path is trivially dead.
fn randomized(cfg: CcatConfig, seed: u64) -> CcatModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CcatModel::<f64>::new(cfg, &mut rng).unwrap();
    for (_, t) in m.params_mut().iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    m
}

#[test]
fn full_ccat_model() {
    for (heads, seed) in [(0, 1), (1, 2), (2, 3)] {
        let mut m = randomized(tiny(heads), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let input: Vec<Vec<f32>> = (0..2).map(|_| (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        for label in 0..2 {
            let r = check_model(&mut m, &input, label, STEP).unwrap();
            assert_eq!(r.checked, m.params().numel());
            assert!(r.max_rel_err <= MODEL_TOL, "heads {heads} label {label}: {r:?}");
            eprintln!("ccat heads={heads} label={label}: {} params, worst {:.2e}", r.checked, r.max_rel_err);
        }
    }
}
