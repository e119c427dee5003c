use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::RectifierNet;
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::optim::AdamConfig;
use crate::scalar::Scalar;

/// One learned row. The structure satisfies it when `w . x + b <= 0`,
/// i.e. the inequality `(-w) . x + (-b) >= 0` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Inequality {
    pub fn is_satisfied(&self, x: &[f64]) -> bool {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b <= 0.0
    }

    /// Coefficients and constant of the equivalent `c . x + d >= 0` form.
    pub fn geq_form(&self) -> (Vec<f64>, f64) {
        (self.w.iter().map(|v| -v).collect(), -self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub inequalities: Vec<Inequality>,
}

impl ConstraintSet {
    pub fn k(&self) -> usize {
        self.inequalities.len()
    }

    pub fn to_net<T: Scalar>(&self) -> Result<RectifierNet<T>> {
        let k = self.k();
        let mut w = Array2::zeros((k, FEATURE_DIM));
        let mut b = Array1::zeros(k);
        for (r, ineq) in self.inequalities.iter().enumerate() {
            if ineq.w.len() != FEATURE_DIM {
                return Err(Error::Dimension {
                    expected: FEATURE_DIM,
                    got: ineq.w.len(),
                });
            }
            for (c, &v) in ineq.w.iter().enumerate() {
                w[[r, c]] = T::of(v);
            }
            b[r] = T::of(ineq.b);
        }
        RectifierNet::from_parts(w, b)
    }
}

/// Rows of the network, verbatim.
pub fn extract_constraints<T: Scalar>(net: &RectifierNet<T>) -> ConstraintSet {
    ConstraintSet {
        inequalities: net
            .w
            .outer_iter()
            .zip(net.b.iter())
            .map(|(row, &b)| Inequality {
                w: row.iter().map(|v| v.as_f64()).collect(),
                b: b.as_f64(),
            })
            .collect(),
    }
}

/// On-disk constraint file: `{"k", "dim", "rows": [{"w", "b"}], ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub k: usize,
    pub dim: usize,
    pub rows: Vec<Inequality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_accuracy: Option<f64>,
}

impl ConstraintFile {
    pub fn new(set: &ConstraintSet) -> Self {
        Self {
            k: set.k(),
            dim: FEATURE_DIM,
            rows: set.inequalities.clone(),
            optimizer: None,
            seed: None,
            config_hash: None,
            holdout_accuracy: None,
        }
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        if self.dim != FEATURE_DIM {
            return Err(Error::Dimension {
                expected: FEATURE_DIM,
                got: self.dim,
            });
        }
        if self.k != self.rows.len() {
            return Err(Error::Config(format!(
                "constraint file declares k = {} but has {} rows",
                self.k,
                self.rows.len()
            )));
        }
        Ok(ConstraintSet {
            inequalities: self.rows.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constraint files serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
