//! Mini-batch Adam training with optional early stopping.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::tensor::{add_grads, Adam, AdamConfig, Matrix, Module};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 5,
            batch_size: 8,
            learning_rate: 2e-3,
            max_grad_norm: Some(5.0),
            seed: crate::seed::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per training item.
    pub train_loss: f64,
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_dev_score: Option<f64>,
    pub stopped_early: bool,
}

/// Optimiser state plus the per-epoch batching loop.
pub struct Trainer<T> {
    adam: Adam<T>,
    config: TrainConfig,
}

impl<T: Scalar> Trainer<T> {
    pub fn new<M: Module<T>>(model: &M, config: &TrainConfig) -> Result<Self> {
        contract!(config.batch_size > 0, "batch size must be positive");
        let adam = Adam::new(
            model,
            AdamConfig {
                learning_rate: config.learning_rate,
                max_grad_norm: config.max_grad_norm,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            adam,
            config: config.clone(),
        })
    }

    /// One pass over `n_items` in a seeded order; returns the mean item loss.
    ///
    /// `loss_grads(model, i)` returns the loss of item `i` and the gradients
    /// aligned with the model's visiting order. Items within a batch are
    /// processed in parallel and summed in index order, so results do not
    /// depend on the thread count.
    pub fn epoch<M, L>(&mut self, model: &mut M, n_items: usize, epoch: usize, loss_grads: &L) -> Result<f64>
    where
        M: Module<T> + Sync,
        L: Fn(&M, usize) -> Result<(T, Vec<Matrix<T>>)> + Sync,
    {
        contract!(n_items > 0, "training set is empty");
        let mut order: Vec<usize> = (0..n_items).collect();
        order.shuffle(&mut rng(derive_seed(self.config.seed, &[epoch as u64])));
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let results: Vec<Result<(T, Vec<Matrix<T>>)>> =
                batch.par_iter().map(|&i| loss_grads(model, i)).collect();
            let mut grads = Vec::new();
            for r in results {
                let (loss, g) = r?;
                total += loss.as_f64();
                add_grads(&mut grads, &g);
            }
            let scale = T::lit(1.0 / batch.len() as f64);
            grads.iter_mut().for_each(|g| g.scale_assign(scale));
            self.adam.step(model, &mut grads);
        }
        Ok(total / n_items as f64)
    }
}

/// Trains `model` in place for up to `max_epochs`.
///
/// When `dev_score` is given, training stops after `patience` epochs without a
/// strict improvement and the best parameters are restored.
pub fn fit<T, M, L>(
    model: &mut M,
    n_items: usize,
    config: &TrainConfig,
    loss_grads: L,
    mut dev_score: Option<&mut dyn FnMut(&M) -> f64>,
) -> Result<TrainLog>
where
    T: Scalar,
    M: Module<T> + Clone + Sync,
    L: Fn(&M, usize) -> Result<(T, Vec<Matrix<T>>)> + Sync,
{
    contract!(n_items > 0, "training set is empty");
    let mut trainer = Trainer::new(&*model, config)?;
    let mut log = TrainLog::default();
    let mut best: Option<(f64, M)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let train_loss = trainer.epoch(model, n_items, epoch, &loss_grads)?;
        let score = dev_score.as_mut().map(|f| f(model));
        log::debug!("epoch {epoch}: loss {train_loss:.5} dev {score:?}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_score: score,
        });
        let Some(score) = score else {
            log.best_epoch = epoch;
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.clone()));
            log.best_epoch = epoch;
            log.best_dev_score = Some(score);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{collect_grads, Graph, Linear};

    fn data() -> Vec<(f64, f64)> {
        (0..20).map(|i| (i as f64 / 10.0, 3.0 * i as f64 / 10.0 - 1.0)).collect()
    }

    fn loss_grads(m: &Linear<f64>, i: usize) -> Result<(f64, Vec<Matrix<f64>>)> {
        let (x, y) = data()[i];
        let mut g = Graph::new();
        let xv = g.input(Matrix::from_vec(1, 1, vec![x]));
        let p = m.forward(&mut g, xv);
        let t = g.input(Matrix::from_vec(1, 1, vec![-y]));
        let d = g.add(p, t);
        let sq = g.mul(d, d);
        g.backward(sq);
        Ok((g.scalar(sq), collect_grads(&g, m)))
    }

    #[test]
    fn fits_a_line() {
        let mut m = Linear::<f64>::new(1, 1, &mut rng(1));
        let cfg = TrainConfig {
            max_epochs: 300,
            learning_rate: 0.05,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let log = fit(&mut m, 20, &cfg, loss_grads, None).unwrap();
        assert!(log.epochs.last().unwrap().train_loss < 1e-3);
        assert!((m.weight.get(0, 0) - 3.0).abs() < 0.05);
    }

    #[test]
    fn stops_when_dev_does_not_improve() {
        let mut m = Linear::<f64>::new(1, 1, &mut rng(1));
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 5,
            ..TrainConfig::default()
        };
        let mut flat = |_: &Linear<f64>| 0.5;
        let log = fit(&mut m, 20, &cfg, loss_grads, Some(&mut flat)).unwrap();
        assert_eq!(log.epochs.len(), 6);
        assert_eq!(log.best_epoch, 1);
        assert!(log.stopped_early);
    }

    #[test]
    fn restores_best_parameters() {
        let mut m = Linear::<f64>::new(1, 1, &mut rng(1));
        let cfg = TrainConfig {
            max_epochs: 10,
            patience: 3,
            ..TrainConfig::default()
        };
        let mut snapshots = Vec::new();
        let mut epoch = 0;
        let mut score = |m: &Linear<f64>| {
            epoch += 1;
            snapshots.push(m.weight.get(0, 0));
            if epoch == 2 {
                1.0
            } else {
                0.0
            }
        };
        fit(&mut m, 20, &cfg, loss_grads, Some(&mut score)).unwrap();
        assert_eq!(m.weight.get(0, 0), snapshots[1]);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut m = Linear::<f64>::new(1, 1, &mut rng(1));
        assert!(fit(&mut m, 0, &TrainConfig::default(), loss_grads, None).is_err());
    }
}
