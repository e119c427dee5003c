use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{pair_representation, PairEncoder};
use super::loss::PairPrediction;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean of a layer's input and output widths, at least one.
pub fn hidden_width(input: usize, output: usize) -> usize {
    ((input + output) / 2).max(1)
}

/// One hidden ReLU layer followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mlp<T> {
    /// `hidden x input`.
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// `output x hidden`.
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; the output layer is
    /// left at zero when `zero_output` is set.
    pub fn init(input: usize, output: usize, zero_output: bool, rng: &mut impl Rng) -> Self {
        let hidden = hidden_width(input, output);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| T::of(rng.gen_range(-s..=s)))
        };
        let w1 = uniform(hidden, input, input);
        let b1 = uniform(1, hidden, input).remove_axis(Axis(0));
        let (w2, b2) = if zero_output {
            (Array2::zeros((output, hidden)), Array1::zeros(output))
        } else {
            (uniform(output, hidden, hidden), uniform(1, output, hidden).remove_axis(Axis(0)))
        };
        Self { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Hidden activations and output logits for a batch of rows.
    pub fn forward(&self, x: ArrayView2<T>) -> (Array2<T>, Array2<T>) {
        let mut h = x.dot(&self.w1.t()) + &self.b1;
        h.mapv_inplace(|v| v.max(T::zero()));
        let o = h.dot(&self.w2.t()) + &self.b2;
        (h, o)
    }

    /// Parameter gradients given the upstream gradient on the logits.
    pub fn backward(&self, x: ArrayView2<T>, h: &Array2<T>, d_out: &Array2<T>) -> Mlp<T> {
        let mut dh = d_out.dot(&self.w2);
        ndarray::Zip::from(&mut dh).and(h).for_each(|d, &hv| {
            if hv <= T::zero() {
                *d = T::zero();
            }
        });
        Mlp {
            w1: dh.t().dot(&x),
            b1: dh.sum_axis(Axis(0)),
            w2: d_out.t().dot(h),
            b2: d_out.sum_axis(Axis(0)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        self.w1.scaled_add(T::one(), &other.w1);
        self.b1.scaled_add(T::one(), &other.b1);
        self.w2.scaled_add(T::one(), &other.w2);
        self.b2.scaled_add(T::one(), &other.b2);
    }

    fn params(&self) -> [&[T]; 4] {
        let Mlp { w1, b1, w2, b2 } = self;
        [w1.as_slice(), b1.as_slice(), w2.as_slice(), b2.as_slice()].map(|s| s.expect("standard layout"))
    }

    fn params_mut(&mut self) -> [&mut [T]; 4] {
        let Mlp { w1, b1, w2, b2 } = self;
        [
            w1.as_slice_mut().expect("standard layout"),
            b1.as_slice_mut().expect("standard layout"),
            w2.as_slice_mut().expect("standard layout"),
            b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        let c = |v: &T| U::of(v.as_f64());
        Mlp {
            w1: self.w1.map(c),
            b1: self.b1.map(c),
            w2: self.w2.map(c),
            b2: self.b2.map(c),
        }
    }
}

/// Relation head (4-way softmax) and segmentation head (sigmoid) over a
/// shared pair representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct JointModel<T> {
    pub relation: Mlp<T>,
    pub segment: Mlp<T>,
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct HeadOutputs<T> {
    pub relation_hidden: Array2<T>,
    pub segment_hidden: Array2<T>,
    pub predictions: Vec<PairPrediction<T>>,
}

impl<T: Scalar> JointModel<T> {
    pub fn init(pair_dim: usize, seed: u64, zero_output: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relation = Mlp::init(pair_dim, 4, zero_output, &mut rng);
        let segment = Mlp::init(pair_dim, 1, zero_output, &mut rng);
        Self { relation, segment }
    }

    pub fn pair_dim(&self) -> usize {
        self.relation.input_dim()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<HeadOutputs<T>> {
        if x.ncols() != self.pair_dim() {
            return Err(Error::Dimension {
                expected: self.pair_dim(),
                got: x.ncols(),
            });
        }
        let (relation_hidden, rel) = self.relation.forward(x);
        let (segment_hidden, seg) = self.segment.forward(x);
        let predictions = rel
            .outer_iter()
            .zip(seg.iter())
            .map(|(logits, &s)| {
                let m = logits.fold(T::neg_infinity(), |a, &b| a.max(b));
                let e = logits.mapv(|v| (v - m).exp());
                let total = e.sum();
                PairPrediction {
                    y: [e[0] / total, e[1] / total, e[2] / total, e[3] / total],
                    z: s.sigmoid(),
                }
            })
            .collect();
        Ok(HeadOutputs {
            relation_hidden,
            segment_hidden,
            predictions,
        })
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<PairPrediction<T>>> {
        Ok(self.forward(x)?.predictions)
    }

    /// Parameter gradients from logit gradients (`n x 4` and `n x 1`).
    pub fn backward(&self, x: ArrayView2<T>, out: &HeadOutputs<T>, d_rel: &Array2<T>, d_seg: &Array2<T>) -> Self {
        Self {
            relation: self.relation.backward(x, &out.relation_hidden, d_rel),
            segment: self.segment.backward(x, &out.segment_hidden, d_seg),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            relation: self.relation.zeros_like(),
            segment: self.segment.zeros_like(),
        }
    }

    pub fn scale(&mut self, f: T) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = *v * f);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.relation.add_assign(&other.relation);
        self.segment.add_assign(&other.segment);
    }

    /// Flat parameter groups in a fixed order.
    pub fn params(&self) -> Vec<&[T]> {
        let mut v = self.relation.params().to_vec();
        v.extend(self.segment.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = self.relation.params_mut().into_iter().collect();
        v.extend(self.segment.params_mut());
        v
    }

    pub fn cast<U: Scalar>(&self) -> JointModel<U> {
        JointModel {
            relation: self.relation.cast(),
            segment: self.segment.cast(),
        }
    }
}

/// Pair representations for `pairs` given per-event vectors.
pub fn pair_matrix<T: Scalar>(events: &Array2<f64>, pairs: &[(usize, usize)]) -> Array2<T> {
    let d = events.ncols();
    let mut out = Array2::zeros((pairs.len(), 4 * d));
    let ev = events.mapv(T::of);
    for (r, &(i, j)) in pairs.iter().enumerate() {
        out.row_mut(r).assign(&pair_representation(ev.row(i), ev.row(j)));
    }
    out
}

/// Relation and same-segment probabilities for events `i < j` of `doc`.
pub fn predict_pair<T: Scalar>(
    model: &JointModel<T>,
    encoder: &dyn PairEncoder,
    doc: &Document,
    i: usize,
    j: usize,
) -> Result<PairPrediction<T>> {
    if i >= j || j >= doc.num_events() {
        return Err(Error::Precondition(format!(
            "pair ({i}, {j}) is not a text-ordered pair of `{}`",
            doc.id
        )));
    }
    let events = encoder.encode_events(doc)?;
    let x = pair_matrix::<T>(&events, &[(i, j)]);
    Ok(model.predict(x.view())?[0])
}

const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model with the settings that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: JointModel<f64>,
    /// Free-form echo of the training configuration.
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new<T: Scalar>(model: &JointModel<T>, config: serde_json::Value) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model: model.cast(),
            config,
        }
    }

    pub fn model<T: Scalar>(&self) -> JointModel<T> {
        self.model.cast()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let m = &c.model;
        if m.relation.output_dim() != 4 || m.segment.output_dim() != 1 || m.segment.input_dim() != m.pair_dim() {
            return Err(Error::Config("checkpoint heads have unexpected shapes".into()));
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
