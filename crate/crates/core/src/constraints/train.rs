use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RectifierNet;
use crate::error::{Error, Result};
use crate::features::{ConstraintExample, FEATURE_DIM};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub k: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Examples per update; 0 means one full-batch step per epoch.
    pub batch_size: usize,
    /// Fraction of examples held out for checkpoint selection.
    pub holdout: f64,
    /// Loss weight of legitimate examples relative to illegitimate ones;
    /// `None` uses the illegitimate-to-legitimate count ratio.
    pub positive_weight: Option<f64>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lr: 0.001,
            max_epochs: 1000,
            seed: 0,
            batch_size: 32,
            holdout: 0.1,
            positive_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub holdout_accuracy: f64,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub positive_weight: f64,
    pub optimizer: AdamConfig,
}

fn to_matrix<T: Scalar>(examples: &[ConstraintExample], idx: &[usize]) -> (Array2<T>, Array1<T>) {
    let xs = Array2::from_shape_fn((idx.len(), FEATURE_DIM), |(r, c)| {
        if examples[idx[r]].x.0[c] == 1 {
            T::one()
        } else {
            T::zero()
        }
    });
    let ts = idx.iter().map(|&i| T::of(examples[i].t as f64)).collect();
    (xs, ts)
}

/// Fraction of examples whose soft decision (`p >= 0.5`) matches `t`.
pub fn accuracy<T: Scalar>(net: &RectifierNet<T>, examples: &[ConstraintExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let idx: Vec<usize> = (0..examples.len()).collect();
    let (xs, _) = to_matrix::<T>(examples, &idx);
    let logits = net.logits_batch(xs.view()).expect("feature matrix has 42 columns");
    let correct = logits
        .iter()
        .zip(examples)
        .filter(|(&s, e)| (s >= T::zero()) == (e.t == 1))
        .count();
    correct as f64 / examples.len() as f64
}

/// Trains on an internal train/holdout split and returns the parameters with
/// the best holdout accuracy (latest epoch on ties).
pub fn train<T: Scalar>(examples: &[ConstraintExample], cfg: &LearnConfig) -> Result<(RectifierNet<T>, TrainReport)> {
    let positives = examples.iter().filter(|e| e.t == 1).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::Training(format!(
            "constraint examples must contain both labels ({} positive of {})",
            positives,
            examples.len()
        )));
    }
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let pos_weight = cfg
        .positive_weight
        .unwrap_or((examples.len() - positives) as f64 / positives as f64);
    if !(pos_weight > 0.0 && pos_weight.is_finite()) {
        return Err(Error::Config(format!("positive_weight must be positive, got {pos_weight}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((examples.len() as f64) * cfg.holdout).round() as usize;
    let n_hold = n_hold.min(examples.len() - 1);
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let mut train_idx = train_idx.to_vec();
    let hold: Vec<ConstraintExample> = hold_idx.iter().map(|&i| examples[i]).collect();
    let train_set: Vec<ConstraintExample> = train_idx.iter().map(|&i| examples[i]).collect();
    let select_on = if hold.is_empty() { &train_set } else { &hold };

    let mut net = RectifierNet::<T>::init(cfg.k, cfg.seed);
    let opt_cfg = AdamConfig::adam(cfg.lr);
    let mut opt = Adam::<T>::new(opt_cfg);
    let batch = if cfg.batch_size == 0 {
        train_idx.len()
    } else {
        cfg.batch_size
    };

    let mut best = (accuracy(&net, select_on), 0usize, net.clone());
    let mut final_loss = f64::NAN;
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(batch) {
            let (xs, ts) = to_matrix::<T>(examples, chunk);
            let cs = ts.mapv(|t| if t > T::zero() { T::of(pos_weight) } else { T::one() });
            let mut g = net.grad_weighted(xs.view(), ts.view(), cs.view())?;
            loss_sum += g.loss.as_f64() * chunk.len() as f64;
            let (w, b) = (&mut net.w, &mut net.b);
            opt.step(
                &mut [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ],
                &[
                    g.w.as_slice_mut().expect("standard layout"),
                    g.b.as_slice_mut().expect("standard layout"),
                ],
            );
        }
        final_loss = loss_sum / train_idx.len() as f64;
        let acc = accuracy(&net, select_on);
        if acc >= best.0 {
            best = (acc, epoch, net.clone());
        }
        if !final_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
    }
    let (holdout_accuracy, best_epoch, net) = best;
    let train_accuracy = accuracy(&net, &train_set);
    Ok((
        net,
        TrainReport {
            epochs_run: cfg.max_epochs,
            best_epoch,
            holdout_accuracy,
            train_accuracy,
            final_loss,
            positive_weight: pos_weight,
            optimizer: opt_cfg,
        },
    ))
}
