use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::PairEncoder;
use super::loss::{logit_grads, triple_loss_grad, LossWeights};
use super::model::{pair_matrix, JointModel};
use crate::constraints::RectifierNet;
use crate::corpus::{Corpus, Document, RelationLabel};
use crate::error::{Error, Result};
use crate::features::{pair_assignment, sample_triples, PairAssignment};
use crate::infer::{text_ordered_pairs, RelationCounts};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Maximum number of triples per document.
    pub triple_cap: usize,
    /// Probability of keeping a triple whose three gold relations are NoRel.
    pub norel_keep_prob: f64,
    /// Cross-entropy weight per gold relation, in PC, CP, Coref, NoRel order.
    pub class_weights: Option<[f64; 4]>,
    /// Trailing share of the training documents used for model selection.
    pub dev_fraction: f64,
    pub docs_per_step: usize,
    pub zero_output_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lr: 1e-3,
            epochs: 40,
            seed: 0,
            triple_cap: 5000,
            norel_keep_prob: 1.0,
            class_weights: None,
            dev_fraction: 0.1,
            docs_per_step: 1,
            zero_output_init: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.epochs == 0 || self.docs_per_step == 0 {
            return bad("epochs and docs_per_step must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.norel_keep_prob) {
            return bad(format!("norel_keep_prob must lie in [0, 1], got {}", self.norel_keep_prob));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad(format!("dev_fraction must lie in [0, 1), got {}", self.dev_fraction));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("class weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrainReport {
    pub epochs_run: usize,
    /// 1-based; 0 when no dev documents were available and the last epoch is kept.
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
    pub epoch_loss: Vec<f64>,
    pub epoch_dev_f1: Vec<f64>,
    pub optimizer: AdamConfig,
}

struct Prepared<T> {
    x: Array2<T>,
    gold: Vec<PairAssignment>,
    triples: Vec<(usize, usize, usize)>,
    n: usize,
}

/// Row of pair `(i, j)`, `i < j`, in [`text_ordered_pairs`] order.
fn pair_row(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn prepare<T: Scalar>(
    doc: &Document,
    encoder: &dyn PairEncoder,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Prepared<T>> {
    let n = doc.num_events();
    let pairs = text_ordered_pairs(n);
    let gold = pairs.iter().map(|&(i, j)| pair_assignment(doc, i, j)).collect::<Result<Vec<_>>>()?;
    let events = encoder.encode_events(doc)?;
    Ok(Prepared {
        x: pair_matrix(&events, &pairs),
        gold,
        triples: sample_triples(n, cap, rng),
        n,
    })
}

/// Mean triple loss over `triples` and its gradient with respect to every
/// model parameter. `x` holds one pair representation per row, `gold` the
/// matching gold assignments, and each triple lists the rows of its
/// `(i, j)`, `(j, k)` and `(i, k)` pairs.
pub fn triple_batch_gradient<T: Scalar>(
    model: &JointModel<T>,
    x: ArrayView2<T>,
    gold: &[PairAssignment],
    triples: &[[usize; 3]],
    constraints: Option<&RectifierNet<T>>,
    weights: &LossWeights,
    class_weights: Option<&[f64; 4]>,
) -> Result<(T, JointModel<T>)> {
    if gold.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            got: gold.len(),
        });
    }
    if triples.is_empty() {
        return Ok((T::zero(), model.zeros_like()));
    }
    let scale = T::of(1.0 / triples.len() as f64);
    let out = model.forward(x)?;
    let rows = out.predictions.len();
    let mut dy = vec![[T::zero(); 4]; rows];
    let mut dz = vec![T::zero(); rows];
    let mut loss = T::zero();
    for idx in triples {
        let preds = idx.map(|r| out.predictions[r]);
        let g = triple_loss_grad(&preds, &idx.map(|r| gold[r]), constraints, weights, class_weights)?;
        loss = loss + g.loss.total * scale;
        for (p, &r) in idx.iter().enumerate() {
            for c in 0..4 {
                dy[r][c] = dy[r][c] + g.dy[p][c] * scale;
            }
            dz[r] = dz[r] + g.dz[p] * scale;
        }
    }
    let mut d_rel = Array2::zeros((rows, 4));
    let mut d_seg = Array2::zeros((rows, 1));
    for r in 0..rows {
        let (lr, ls) = logit_grads(&out.predictions[r], &dy[r], dz[r]);
        for c in 0..4 {
            d_rel[[r, c]] = lr[c];
        }
        d_seg[[r, 0]] = ls;
    }
    Ok((loss, model.backward(x, &out, &d_rel, &d_seg)))
}

/// Micro-averaged PC/CP F1 of `model` on `docs`.
fn dev_f1<T: Scalar>(model: &JointModel<T>, docs: &[Prepared<T>]) -> Result<f64> {
    let mut counts = RelationCounts::default();
    for d in docs {
        for (p, g) in model.predict(d.x.view())?.iter().zip(&d.gold) {
            counts.observe(g.relation, p.relation());
        }
    }
    Ok(counts.micro().f1)
}

/// Trains on triples from the training split; the trailing `dev_fraction`
/// of it selects the epoch to keep.
pub fn train_joint<T: Scalar>(
    corpus: &Corpus,
    constraints: Option<&RectifierNet<T>>,
    encoder: &dyn PairEncoder,
    cfg: &TrainConfig,
) -> Result<(JointModel<T>, JointTrainReport)> {
    cfg.validate()?;
    if cfg.weights.cons > 0.0 && constraints.is_none() {
        return Err(Error::Config("a positive constraint weight needs a constraint network".into()));
    }
    let (train, _) = corpus.train_test();
    if train.is_empty() {
        return Err(Error::Precondition("the training split is empty".into()));
    }
    let n_dev = ((train.len() as f64) * cfg.dev_fraction).round() as usize;
    let n_dev = if n_dev >= train.len() { 0 } else { n_dev };
    let (fit_docs, dev_docs) = train.split_at(train.len() - n_dev);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fit = fit_docs
        .iter()
        .filter(|d| d.num_events() >= 3)
        .map(|d| prepare::<T>(d, encoder, cfg.triple_cap, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    if fit.is_empty() {
        return Err(Error::Precondition("no training document has three events".into()));
    }
    let dev = dev_docs
        .iter()
        .filter(|d| d.num_events() >= 2)
        .map(|d| prepare::<T>(d, encoder, 0, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut model = JointModel::<T>::init(encoder.pair_dim(), cfg.seed, cfg.zero_output_init);
    let optimizer = AdamConfig::amsgrad(cfg.lr);
    let mut opt = Adam::<T>::new(optimizer);
    let mut best: Option<(f64, usize, JointModel<T>)> = None;
    let mut report = JointTrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_dev_f1: None,
        epoch_loss: Vec::new(),
        epoch_dev_f1: Vec::new(),
        optimizer,
    };
    let all_norel = |d: &Prepared<T>, (i, j, k): (usize, usize, usize)| {
        [(i, j), (j, k), (i, k)]
            .iter()
            .all(|&(a, b)| d.gold[pair_row(d.n, a, b)].relation == RelationLabel::NoRel)
    };

    let mut order: Vec<usize> = (0..fit.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_triples = 0usize;
        for chunk in order.chunks(cfg.docs_per_step) {
            let kept: Vec<Vec<(usize, usize, usize)>> = chunk
                .iter()
                .map(|&d| {
                    let d = &fit[d];
                    d.triples
                        .iter()
                        .copied()
                        .filter(|&t| cfg.norel_keep_prob >= 1.0 || !all_norel(d, t) || rng.gen::<f64>() < cfg.norel_keep_prob)
                        .collect()
                })
                .collect();
            let total: usize = kept.iter().map(Vec::len).sum();
            if total == 0 {
                continue;
            }
            let mut grad = model.zeros_like();
            for (&d, triples) in chunk.iter().zip(&kept) {
                if triples.is_empty() {
                    continue;
                }
                let d = &fit[d];
                let rows: Vec<[usize; 3]> = triples
                    .iter()
                    .map(|&(i, j, k)| [pair_row(d.n, i, j), pair_row(d.n, j, k), pair_row(d.n, i, k)])
                    .collect();
                let (loss, mut g) = triple_batch_gradient(
                    &model,
                    d.x.view(),
                    &d.gold,
                    &rows,
                    constraints,
                    &cfg.weights,
                    cfg.class_weights.as_ref(),
                )?;
                epoch_loss += loss.as_f64() * triples.len() as f64;
                epoch_triples += triples.len();
                g.scale(T::of(triples.len() as f64 / total as f64));
                grad.add_assign(&g);
            }
            let grads = grad.params();
            opt.step(&mut model.params_mut(), &grads);
        }
        let mean_loss = epoch_loss / epoch_triples.max(1) as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
        report.epoch_loss.push(mean_loss);
        report.epochs_run = epoch;
        if !dev.is_empty() {
            let f1 = dev_f1(&model, &dev)?;
            report.epoch_dev_f1.push(f1);
            log::info!("epoch {epoch}: loss {mean_loss:.5} dev micro-F1 {f1:.4}");
            if best.as_ref().is_none_or(|b| f1 > b.0) {
                best = Some((f1, epoch, model.clone()));
            }
        } else {
            log::info!("epoch {epoch}: loss {mean_loss:.5}");
        }
    }
    if let Some((f1, epoch, m)) = best {
        report.best_epoch = epoch;
        report.best_dev_f1 = Some(f1);
        model = m;
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_rows_follow_enumeration() {
        let n = 6;
        for (r, (i, j)) in text_ordered_pairs(n).into_iter().enumerate() {
            assert_eq!(pair_row(n, i, j), r);
        }
    }
}
