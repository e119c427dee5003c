use serde::{Deserialize, Serialize};

use crate::constraints::RectifierNet;
use crate::corpus::RelationLabel;
use crate::error::{Error, Result};
use crate::features::{PairAssignment, FEATURE_DIM, PAIR_DIM, POWERSET_OFFSET};
use crate::scalar::Scalar;

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Model output for one text-ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPrediction<T> {
    /// Relation probabilities in [`RelationLabel::ALL`] order.
    pub y: [T; 4],
    /// Same-segment probability.
    pub z: T,
}

impl<T: Scalar> PairPrediction<T> {
    pub fn hard(a: PairAssignment) -> Self {
        let mut y = [T::zero(); 4];
        y[a.relation.index()] = T::one();
        Self {
            y,
            z: if a.same_segment { T::one() } else { T::zero() },
        }
    }

    pub fn uniform() -> Self {
        Self {
            y: [T::of(0.25); 4],
            z: T::of(0.5),
        }
    }

    /// Argmax relation; ties go to the label listed first.
    pub fn relation(&self) -> RelationLabel {
        let mut best = 0;
        for r in 1..4 {
            if self.y[r] > self.y[best] {
                best = r;
            }
        }
        RelationLabel::ALL[best]
    }
}

/// Loss weights `(sub, seg, cons)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub sub: f64,
    pub seg: f64,
    pub cons: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sub: 1.0,
            seg: 1.0,
            cons: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sub", self.sub), ("seg", self.seg), ("cons", self.cons)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight `{name}` must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(self, f: f64) -> Self {
        Self {
            sub: self.sub * f,
            seg: self.seg * f,
            cons: self.cons * f,
        }
    }
}

fn slot(r: usize, same: bool) -> usize {
    POWERSET_OFFSET + PairAssignment::new(RelationLabel::ALL[r], same).subset_index()
}

/// Soft counterpart of the binary subgraph feature for pairs `(i, j)`,
/// `(j, k)` and `(i, k)`.
pub fn soft_featurize<T: Scalar>(
    ij: &PairPrediction<T>,
    jk: &PairPrediction<T>,
    ik: &PairPrediction<T>,
) -> [T; FEATURE_DIM] {
    let mut psi = [T::zero(); FEATURE_DIM];
    for (block, p) in [ij, jk].into_iter().enumerate() {
        let o = block * PAIR_DIM;
        psi[o..o + 4].copy_from_slice(&p.y);
        psi[o + 4] = p.z;
    }
    for r in 0..4 {
        psi[slot(r, true)] = ik.y[r] * ik.z;
        psi[slot(r, false)] = ik.y[r] * (T::one() - ik.z);
    }
    psi
}

/// `-ln sigmoid(1 - sum_k relu(w_k . psi + b_k))`.
pub fn loss_cons<T: Scalar>(net: &RectifierNet<T>, psi: &[T]) -> Result<T> {
    Ok(-net.logit(psi.into())?.log_sigmoid())
}

/// [`loss_cons`] and its gradient with respect to `psi`.
pub fn loss_cons_grad<T: Scalar>(net: &RectifierNet<T>, psi: &[T]) -> Result<(T, Vec<T>)> {
    let loss = loss_cons(net, psi)?;
    let g = net.grad_input_neg_log(psi.into())?;
    Ok((loss, g.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleLoss<T> {
    pub sub: T,
    pub seg: T,
    pub cons: T,
    pub total: T,
}

/// Loss of one triple and its gradient with respect to the three pairs'
/// probabilities, in `(i, j), (j, k), (i, k)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleGrad<T> {
    pub loss: TripleLoss<T>,
    pub dy: [[T; 4]; 3],
    pub dz: [T; 3],
}

fn neg_ln<T: Scalar>(p: T) -> (T, T) {
    let floor = T::of(PROB_FLOOR);
    if p > floor {
        (-p.ln(), -T::one() / p)
    } else {
        (-floor.ln(), T::zero())
    }
}

/// Weighted sum of mean relation cross-entropy, mean same-segment binary
/// cross-entropy and the constraint loss for one triple.
///
/// `class_weights` scales each pair's cross-entropy by the weight of its gold
/// relation.
pub fn triple_loss<T: Scalar>(
    preds: &[PairPrediction<T>; 3],
    gold: &[PairAssignment; 3],
    net: Option<&RectifierNet<T>>,
    weights: &LossWeights,
    class_weights: Option<&[f64; 4]>,
) -> Result<TripleLoss<T>> {
    Ok(triple_loss_grad(preds, gold, net, weights, class_weights)?.loss)
}

pub fn triple_loss_grad<T: Scalar>(
    preds: &[PairPrediction<T>; 3],
    gold: &[PairAssignment; 3],
    net: Option<&RectifierNet<T>>,
    weights: &LossWeights,
    class_weights: Option<&[f64; 4]>,
) -> Result<TripleGrad<T>> {
    weights.validate()?;
    let third = T::of(1.0 / 3.0);
    let (l1, l2, l3) = (T::of(weights.sub), T::of(weights.seg), T::of(weights.cons));
    let mut dy = [[T::zero(); 4]; 3];
    let mut dz = [T::zero(); 3];
    let (mut sub, mut seg) = (T::zero(), T::zero());
    for p in 0..3 {
        let r = gold[p].relation.index();
        let cw = T::of(class_weights.map_or(1.0, |c| c[r]));
        let (l, d) = neg_ln(preds[p].y[r]);
        sub = sub + cw * l * third;
        dy[p][r] = l1 * cw * d * third;

        let (l, d) = if gold[p].same_segment {
            neg_ln(preds[p].z)
        } else {
            let (l, d) = neg_ln(T::one() - preds[p].z);
            (l, -d)
        };
        seg = seg + l * third;
        dz[p] = l2 * d * third;
    }

    let mut cons = T::zero();
    if weights.cons > 0.0 {
        let net = net.ok_or_else(|| Error::Config("a positive constraint weight needs a constraint network".into()))?;
        let psi = soft_featurize(&preds[0], &preds[1], &preds[2]);
        let (l, g) = loss_cons_grad(net, &psi)?;
        cons = l;
        for (block, p) in [0, 1].into_iter().enumerate() {
            let o = block * PAIR_DIM;
            for r in 0..4 {
                dy[p][r] = dy[p][r] + l3 * g[o + r];
            }
            dz[p] = dz[p] + l3 * g[o + 4];
        }
        let ik = &preds[2];
        for r in 0..4 {
            let (gs, ga) = (g[slot(r, true)], g[slot(r, false)]);
            dy[2][r] = dy[2][r] + l3 * (gs * ik.z + ga * (T::one() - ik.z));
            dz[2] = dz[2] + l3 * ik.y[r] * (gs - ga);
        }
    } else if let Some(net) = net {
        cons = loss_cons(net, &soft_featurize(&preds[0], &preds[1], &preds[2]))?;
    }

    Ok(TripleGrad {
        loss: TripleLoss {
            sub,
            seg,
            cons,
            total: l1 * sub + l2 * seg + l3 * cons,
        },
        dy,
        dz,
    })
}

/// Chains probability gradients through softmax and sigmoid to the heads'
/// logits.
pub(crate) fn logit_grads<T: Scalar>(p: &PairPrediction<T>, dy: &[T; 4], dz: T) -> ([T; 4], T) {
    let dot: T = (0..4).map(|r| p.y[r] * dy[r]).sum();
    let mut out = [T::zero(); 4];
    for r in 0..4 {
        out[r] = p.y[r] * (dy[r] - dot);
    }
    (out, dz * p.z * (T::one() - p.z))
}
