use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, OptimizerState};
use super::config::TrainConfig;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::nn::Model;
use crate::seed::sub_seed;
use crate::tensor::{Scalar, Tape};

const SHUFFLE_STREAM: u64 = 1;
const EXAMPLE_STREAM: u64 = 2;

/// Training examples, regenerated every epoch from a dedicated RNG so
/// random sampling and augmentation are reproducible per (epoch, index).
pub trait TrainSet<I>: Sync {
    fn len(&self) -> usize;
    fn example(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<(I, Label)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub optimizer: OptimizerState<T>,
    pub epochs_done: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh<M: Model<T>>(model: &M) -> Self {
        TrainState {
            optimizer: OptimizerState::new(model.params()),
            epochs_done: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: Option<MetricsReport>,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,lr,train_loss,val_acc,val_macro_f1";

impl EpochLog {
    /// Validation columns stay empty when no validation set exists.
    pub fn csv_row(&self) -> String {
        let (acc, f1) = match &self.val {
            Some(m) => (format!("{:.4}", m.accuracy), format!("{:.4}", m.macro_f1)),
            None => (String::new(), String::new()),
        };
        format!("{},{},{:.6},{acc},{f1}", self.epoch, self.lr, self.train_loss)
    }
}

/// Hooks called once per epoch.
pub trait Observer<M, T> {
    fn validate(&mut self, _model: &M) -> Result<Option<MetricsReport>> {
        Ok(None)
    }

    fn epoch_end(&mut self, _log: &EpochLog, _model: &M, _state: &TrainState<T>) -> Result<()> {
        Ok(())
    }
}

pub struct Silent;

impl<M, T> Observer<M, T> for Silent {}

/// Loss and parameter gradients of one example.
fn example_grads<T: Scalar, M: Model<T>>(model: &M, input: &M::Input, label: Label) -> Result<(f64, Vec<Vec<T>>)> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape)?;
    let logits = model.logits(&mut tape, &bound, input)?;
    let loss = tape.cross_entropy(logits, &[label.index()])?;
    tape.backward(loss)?;
    Ok((tape.value(loss)[0].to_f64(), model.params().collect_grads(&tape, &bound)))
}

/// Runs epochs `state.epochs_done .. cfg.epochs`. Examples in a batch are
/// differentiated in parallel and reduced in batch order, so results do not
/// depend on the thread count.
pub fn train<T, M, S>(model: &mut M, data: &S, cfg: &TrainConfig, state: &mut TrainState<T>, observer: &mut dyn Observer<M, T>) -> Result<Vec<EpochLog>>
where
    T: Scalar,
    M: Model<T>,
    M::Input: Send,
    S: TrainSet<M::Input>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut logs = Vec::new();
    for epoch in state.epochs_done..cfg.epochs {
        let lr = cfg.step_lr(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[SHUFFLE_STREAM, epoch as u64])));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let m: &M = model;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[EXAMPLE_STREAM, epoch as u64, i as u64]));
                    let (input, label) = data.example(i, &mut rng)?;
                    example_grads(m, &input, label)
                })
                .collect::<Result<Vec<_>>>()?;
            let inv = T::of(1.0 / batch.len() as f64);
            let mut iter = results.into_iter();
            let (l0, mut total) = iter.next().expect("non-empty batch");
            loss_sum += l0;
            for (l, g) in iter {
                loss_sum += l;
                for (acc, g) in total.iter_mut().zip(g) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b);
                }
            }
            total.iter_mut().flatten().for_each(|v| *v = *v * inv);
            adam_step(model.params_mut(), &total, &mut state.optimizer, lr, (cfg.beta1, cfg.beta2, cfg.eps))?;
        }
        state.epochs_done = epoch + 1;
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / data.len() as f64,
            val: observer.validate(model)?,
        };
        observer.epoch_end(&log, model, state)?;
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_row() {
        let log = EpochLog {
            epoch: 3,
            lr: 5e-5,
            train_loss: 0.25,
            val: None,
        };
        assert_eq!(log.csv_row(), "3,0.00005,0.250000,,");
    }
}
