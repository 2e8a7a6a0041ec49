//! Training-loop contracts: determinism, the zero-rate identity, resuming
//! from a checkpoint, and early loss descent of a small CCAT.

use ctscan_core::artifact::{load_model, save_model, SavedModel};
use ctscan_core::ccat::CcatConfig;
use ctscan_core::data::{AugmentationSpec, CtVolume};
use ctscan_core::dwcc::{ScorerConfig, ScorerNet};
use ctscan_core::experiment::{fit_ccat, fit_scorer, synth_dataset, train_scorer, CcatRecipe, RunOutput, ScorerRecipe, SynthSpec};
use ctscan_core::nn::Model;
use ctscan_core::train::{EpochLog, TrainConfig, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_data(seed: u64, n_scans: usize) -> Vec<CtVolume> {
    synth_dataset(&SynthSpec {
        n_scans,
        depth: 16,
        hw: (32, 32),
        covid_frac: 0.5,
        seed,
    })
    .unwrap()
}

fn scorer_recipe(epochs: usize, lr0: f64) -> ScorerRecipe {
    ScorerRecipe {
        model: ScorerConfig {
            input_hw: (32, 32),
            backbone_channels: vec![8, 16, 32],
            ..ScorerConfig::default()
        },
        train: TrainConfig {
            epochs,
            lr0,
            batch_size: 16,
            seed: 11,
            ..TrainConfig::slices()
        },
        ..ScorerRecipe::default()
    }
}

fn bits(m: &ScorerNet<f32>) -> Vec<u32> {
    m.params().iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect()
}

fn losses(logs: &[EpochLog]) -> Vec<u64> {
    logs.iter().map(|l| l.train_loss.to_bits()).collect()
}

#[test]
fn zero_rate_leaves_parameters_untouched() {
    let data = small_data(1, 8);
    let recipe = scorer_recipe(2, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = ScorerNet::new(recipe.model.clone(), &mut rng).unwrap();
    let before = bits(&model);
    let mut state = TrainState::fresh(&model);
    let logs = train_scorer(&mut model, &mut state, &data, None, &recipe, &RunOutput::default()).unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(bits(&model), before);
}

#[test]
fn same_seed_same_trajectory() {
    let data = small_data(2, 8);
    let recipe = scorer_recipe(3, 1e-3);
    let (a, la) = fit_scorer(&data, None, &recipe, &RunOutput::default()).unwrap();
    let (b, lb) = fit_scorer(&data, None, &recipe, &RunOutput::default()).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(losses(&la), losses(&lb));

    let other = ScorerRecipe {
        train: TrainConfig { seed: 12, ..recipe.train.clone() },
        ..recipe
    };
    let (c, _) = fit_scorer(&data, None, &other, &RunOutput::default()).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = small_data(3, 8);
    let full = scorer_recipe(4, 1e-3);
    let (straight, straight_logs) = fit_scorer(&data, None, &full, &RunOutput::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("half.ckpt");
    let half = ScorerRecipe {
        train: TrainConfig { epochs: 2, ..full.train.clone() },
        ..full.clone()
    };
    let out = RunOutput {
        checkpoint: Some(ckpt.clone()),
        ..RunOutput::default()
    };
    fit_scorer(&data, None, &half, &out).unwrap();

    let (saved, state) = load_model(&ckpt).unwrap();
    let SavedModel::Scorer(mut model) = saved else { panic!("expected a scorer") };
    let mut state = state.expect("optimizer state saved");
    assert_eq!(state.epochs_done, 2);
    let rest = train_scorer(&mut model, &mut state, &data, None, &full, &RunOutput::default()).unwrap();
    assert_eq!(rest.len(), 2);
    assert_eq!(losses(&rest), losses(&straight_logs[2..]));
    assert_eq!(bits(&model), bits(&straight));

    // a second round trip of the finished model is bit-exact
    save_model(&ckpt, &model, Some(&state)).unwrap();
    let (again, again_state) = load_model(&ckpt).unwrap();
    let SavedModel::Scorer(again) = again else { panic!("expected a scorer") };
    assert_eq!(bits(&again), bits(&model));
    assert_eq!(again_state.unwrap(), state);
}

/// Loss over the first five epochs of a small CCAT whose backbone starts
/// from a briefly trained slice scorer, over 20 seeds.
#[test]
fn early_loss_decreases_for_most_seeds() {
    let data = small_data(4, 96);
    let (scorer, _) = fit_scorer(&data, None, &scorer_recipe(15, 1e-3), &RunOutput::default()).unwrap();
    let model = CcatConfig {
        input_hw: (32, 32),
        backbone_channels: vec![8, 16, 32],
        d_model: 32,
        depth: 1,
        slices: 4,
        slice_stride: 2,
        hidden: (16, 8),
        ..CcatConfig::default()
    };
    let mut decreasing = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let recipe = CcatRecipe {
            model: model.clone(),
            train: TrainConfig {
                epochs: 5,
                lr0: 1e-3,
                seed,
                ..TrainConfig::scans()
            },
            augmentation: AugmentationSpec::training(),
        };
        let (_, logs) = fit_ccat(&data, None, &recipe, Some(&scorer), &RunOutput::default()).unwrap();
        let l: Vec<f64> = logs.iter().map(|l| l.train_loss).collect();
        let ok = l.windows(2).all(|w| w[1] < w[0]);
        eprintln!("seed {seed}: {l:.4?} {}", if ok { "ok" } else { "not monotone" });
        decreasing += usize::from(ok);
    }
    assert!(decreasing * 100 >= 95 * seeds as usize, "{decreasing}/{seeds} seeds decreasing");
}
