//! Structural properties of the slice transformer: softmax normalization,
//! permutation invariance without positional encodings, and the layer
//! layout of the default model.

use ctscan_core::ccat::{AttentionTrace, Block, CcatConfig, CcatModel};
use ctscan_core::nn::Model;
use ctscan_core::{Tape, Tensor, Var};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn no_pe(heads: usize) -> CcatConfig {
    CcatConfig {
        input_hw: (16, 16),
        backbone_channels: vec![4, 4],
        d_model: 8,
        heads,
        depth: 2,
        slices: 4,
        slice_stride: 1,
        spatial_pe: false,
        sequence_pe: false,
        hidden: (6, 4),
        ..CcatConfig::default()
    }
}

fn randomized(cfg: CcatConfig, seed: u64) -> CcatModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CcatModel::<f64>::new(cfg, &mut rng).unwrap();
    for (_, t) in m.params_mut().iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    m
}

fn random_slices(cfg: &CcatConfig, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.input_hw.0 * cfg.input_hw.1;
    (0..cfg.slices).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
}

fn logits(m: &CcatModel<f64>, slices: &[Vec<f32>]) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = m.params().bind(&mut tape).unwrap();
    let out = m.logits(&mut tape, &p, &slices.to_vec()).unwrap();
    tape.value(out).to_vec()
}

/// Forward pass with the same row permutation applied to every slice's
/// tokens before the within-slice encoder.
fn logits_with_token_permutation(m: &CcatModel<f64>, slices: &[Vec<f32>], perm: &[usize]) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = m.params().bind(&mut tape).unwrap();
    let n = perm.len();
    let pm = Tensor::from_fn(vec![n, n], |i| if perm[i / n] == i % n { 1.0 } else { 0.0 });
    let pm = tape.constant(pm).unwrap();
    let vectors: Vec<Var> = slices
        .iter()
        .map(|s| {
            let f = m.backbone_forward(&mut tape, &p, s).unwrap();
            let t = m.tokenize(&mut tape, &p, f).unwrap();
            let t = tape.matmul(pm, t).unwrap();
            m.wst_forward(&mut tape, &p, t, &mut Vec::new()).unwrap()
        })
        .collect();
    let scan = m.bst_forward(&mut tape, &p, &vectors, &mut Vec::new()).unwrap();
    let out = m.classify(&mut tape, &p, scan).unwrap();
    tape.value(out).to_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slice_order_does_not_matter(heads in prop::sample::select(vec![1usize, 2, 4]), seed in 0u64..1000) {
        let cfg = no_pe(heads);
        let m = randomized(cfg.clone(), seed);
        let slices = random_slices(&cfg, seed + 1);
        let mut shuffled = slices.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 2));
        let (a, b) = (logits(&m, &slices), logits(&m, &shuffled));
        prop_assert!(a[0] != a[1]);
        prop_assert!(max_diff(&a, &b) <= TOL, "{a:?} vs {b:?}");
    }

    #[test]
    fn common_token_permutation_does_not_matter(heads in prop::sample::select(vec![1usize, 2, 4]), seed in 0u64..1000) {
        let cfg = no_pe(heads);
        let m = randomized(cfg.clone(), seed);
        let slices = random_slices(&cfg, seed + 1);
        let mut perm: Vec<usize> = (0..cfg.tokens()).collect();
        let identity = logits_with_token_permutation(&m, &slices, &perm);
        prop_assert!(max_diff(&identity, &logits(&m, &slices)) <= 1e-12);
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 3));
        let permuted = logits_with_token_permutation(&m, &slices, &perm);
        prop_assert!(max_diff(&identity, &permuted) <= TOL, "{identity:?} vs {permuted:?}");
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, scale in 0.1f64..200.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(vec![rows, cols], |_| scale * rng.random_range(-1.0..1.0))).unwrap();
        let s = tape.softmax(x, 1).unwrap();
        for r in tape.value(s).chunks(cols) {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= TOL);
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn recorded_attention_rows_sum_to_one() {
    let cfg = CcatConfig { spatial_pe: true, sequence_pe: true, ..no_pe(2) };
    let m = randomized(cfg.clone(), 9);
    let mut tape = Tape::new();
    let p = m.params().bind(&mut tape).unwrap();
    let mut trace = AttentionTrace::default();
    m.forward_traced(&mut tape, &p, &random_slices(&cfg, 4), &mut trace).unwrap();
    assert_eq!(trace.within.len(), cfg.slices);
    // two heads per block, two blocks per encoder
    assert!(trace.within.iter().all(|w| w.len() == 4));
    assert_eq!(trace.between.len(), 4);
    for &a in trace.within.iter().flatten().chain(&trace.between) {
        let n = tape.shape(a)[1];
        for r in tape.value(a).chunks(n) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= TOL);
        }
    }
}

#[test]
fn gating_mixer_sees_token_order() {
    // Sanity check that the permutation test above can fail: the gMLP
    // variant has a position-specific mixing matrix.
    let cfg = no_pe(0);
    let m = randomized(cfg.clone(), 5);
    let slices = random_slices(&cfg, 6);
    let mut perm: Vec<usize> = (0..cfg.tokens()).collect();
    let a = logits_with_token_permutation(&m, &slices, &perm);
    perm.reverse();
    let b = logits_with_token_permutation(&m, &slices, &perm);
    assert!(max_diff(&a, &b) > 10.0 * TOL, "{a:?} {b:?}");
}

#[test]
fn default_layout() {
    let cfg = CcatConfig::default();
    assert_eq!(cfg.slices, 16);
    let m = CcatModel::<f32>::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

    // Spatial extent survives the backbone: 64×64 → 32×4×4, 16 tokens.
    let mut tape = Tape::new();
    let p = m.params().bind(&mut tape).unwrap();
    let f = m.backbone_forward(&mut tape, &p, &vec![0.5; 64 * 64]).unwrap();
    assert_eq!(tape.shape(f), &[32, 4, 4]);
    let t = m.tokenize(&mut tape, &p, f).unwrap();
    assert_eq!(tape.shape(t), &[16, cfg.d_model]);

    // Three affine classifier layers, d → 64 → 32 → 2.
    let dims: Vec<(usize, usize)> = m.classifier.iter().map(|l| (l.fan_in, l.fan_out)).collect();
    assert_eq!(dims, vec![(cfg.d_model, 64), (64, 32), (32, 2)]);
    let affine = m.params().iter().filter(|(n, _)| n.starts_with("classifier.") && n.ends_with(".weight")).count();
    assert_eq!(affine, 3);

    // LeakyReLU between the layers: a negative pre-activation is scaled by
    // the slope, not zeroed.
    let x = tape.constant(Tensor::new([1, 2], vec![-2.0, 3.0]).unwrap()).unwrap();
    let y = tape.leaky_relu(x, cfg.leaky_slope as f32).unwrap();
    assert_eq!(tape.value(y), &[-2.0 * cfg.leaky_slope as f32, 3.0]);

    // The between-slice encoder takes exactly 16 slice vectors.
    let v = tape.constant(Tensor::new([1, cfg.d_model], vec![0.1; cfg.d_model]).unwrap()).unwrap();
    assert!(m.bst_forward(&mut tape, &p, &[v; 16], &mut Vec::new()).is_ok());
    assert!(m.bst_forward(&mut tape, &p, &[v; 15], &mut Vec::new()).is_err());
    assert!(m.bst.blocks.iter().all(|b| matches!(b, Block::Gmlp(_))));
}
