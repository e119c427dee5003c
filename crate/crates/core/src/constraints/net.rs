use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Every constraint's pre-activation is non-positive.
    Hard,
    /// `forward(x) >= 0.5`.
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectifierNet<T> {
    /// `K x 42`, one constraint per row.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

/// Gradients of the mean binary cross-entropy with respect to `w` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifierGrad<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub loss: T,
}

impl<T: Scalar> RectifierNet<T> {
    pub fn from_parts(w: Array2<T>, b: Array1<T>) -> Result<Self> {
        if w.nrows() == 0 {
            return Err(Error::Config("a rectifier network needs at least one constraint".into()));
        }
        if w.ncols() != FEATURE_DIM {
            return Err(Error::Dimension {
                expected: FEATURE_DIM,
                got: w.ncols(),
            });
        }
        if b.len() != w.nrows() {
            return Err(Error::Dimension {
                expected: w.nrows(),
                got: b.len(),
            });
        }
        if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::Config("rectifier parameters must be finite".into()));
        }
        Ok(Self { w, b })
    }

    /// All weights zero and every bias set to `bias`.
    pub fn constant(k: usize, bias: T) -> Self {
        Self {
            w: Array2::zeros((k, FEATURE_DIM)),
            b: Array1::from_elem(k, bias),
        }
    }

    /// Weights uniform in `[-1/sqrt(42), 1/sqrt(42)]`, zero biases.
    pub fn init(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (FEATURE_DIM as f64).sqrt();
        let w = Array2::from_shape_fn((k, FEATURE_DIM), |_| T::of(rng.gen_range(-scale..=scale)));
        Self {
            w,
            b: Array1::zeros(k),
        }
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    fn check_dim(x: usize) -> Result<()> {
        if x != FEATURE_DIM {
            return Err(Error::Dimension {
                expected: FEATURE_DIM,
                got: x,
            });
        }
        Ok(())
    }

    /// `w_k . x + b_k` for every constraint.
    pub fn pre_activations(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        Self::check_dim(x.len())?;
        Ok(self.w.dot(&x) + &self.b)
    }

    /// Logit `1 - sum_k relu(w_k . x + b_k)`.
    pub fn logit(&self, x: ArrayView1<T>) -> Result<T> {
        let a = self.pre_activations(x)?;
        Ok(T::one() - a.iter().map(|&v| v.max(T::zero())).sum::<T>())
    }

    /// Probability that the structure is legitimate.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        Ok(self.logit(ArrayView1::from(x))?.sigmoid())
    }

    /// Logits for a batch of row vectors.
    pub fn logits_batch(&self, xs: ArrayView2<T>) -> Result<Array1<T>> {
        Self::check_dim(xs.ncols())?;
        let a = xs.dot(&self.w.t()) + &self.b;
        Ok(a.map_axis(Axis(1), |row| T::one() - row.iter().map(|&v| v.max(T::zero())).sum::<T>()))
    }

    pub fn check_structure(&self, x: &[T], mode: CheckMode) -> Result<bool> {
        match mode {
            CheckMode::Hard => Ok(self.pre_activations(ArrayView1::from(x))?.iter().all(|&v| v <= T::zero())),
            CheckMode::Soft => Ok(self.forward(x)? >= T::of(0.5)),
        }
    }

    /// Mean binary cross-entropy over a batch and its exact gradients.
    /// The hinge subgradient at zero is zero.
    pub fn grad(&self, xs: ArrayView2<T>, targets: ArrayView1<T>) -> Result<RectifierGrad<T>> {
        let ones = Array1::from_elem(targets.len(), T::one());
        self.grad_weighted(xs, targets, ones.view())
    }

    /// Weighted mean `sum_i c_i l_i / sum_i c_i` of the per-example
    /// cross-entropies `l_i`, with gradients.
    pub fn grad_weighted(&self, xs: ArrayView2<T>, targets: ArrayView1<T>, weights: ArrayView1<T>) -> Result<RectifierGrad<T>> {
        Self::check_dim(xs.ncols())?;
        let n = xs.nrows();
        if n == 0 || targets.len() != n || weights.len() != n {
            return Err(Error::Dimension {
                expected: n.max(1),
                got: if targets.len() != n { targets.len() } else { weights.len() },
            });
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::Config("example weights must have a positive sum".into()));
        }
        let a = xs.dot(&self.w.t()) + &self.b;
        let mut loss = T::zero();
        // dL/dA = -c (sigmoid(s) - t) / sum(c) on active units.
        let mut da = Array2::<T>::zeros(a.raw_dim());
        for (r, row) in a.outer_iter().enumerate() {
            let s = T::one() - row.iter().map(|&v| v.max(T::zero())).sum::<T>();
            let (t, c) = (targets[r], weights[r]);
            loss = loss - c * (t * s.log_sigmoid() + (T::one() - t) * (-s).log_sigmoid());
            let ds = c * (s.sigmoid() - t) / total;
            for (k, &v) in row.iter().enumerate() {
                if v > T::zero() {
                    da[[r, k]] = -ds;
                }
            }
        }
        Ok(RectifierGrad {
            w: da.t().dot(&xs),
            b: da.sum_axis(Axis(0)),
            loss: loss / total,
        })
    }

    /// Gradient of `-ln forward(x)` with respect to `x`.
    pub fn grad_input_neg_log(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        let a = self.pre_activations(x)?;
        let s = T::one() - a.iter().map(|&v| v.max(T::zero())).sum::<T>();
        let coeff = T::one() - s.sigmoid();
        let mut g = Array1::zeros(FEATURE_DIM);
        for (k, &v) in a.iter().enumerate() {
            if v > T::zero() {
                g.scaled_add(coeff, &self.w.row(k));
            }
        }
        Ok(g)
    }

    pub fn cast<U: Scalar>(&self) -> RectifierNet<U> {
        RectifierNet {
            w: self.w.mapv(|v| U::of(v.as_f64())),
            b: self.b.mapv(|v| U::of(v.as_f64())),
        }
    }
}
