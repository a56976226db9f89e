use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};

const UNIT_TOL: f64 = 1e-10;

/// A CP model `Σ_r w_r · a_{r1} ∘ ⋯ ∘ a_{rM}` with unit basis vectors.
///
/// Components are kept sorted by descending weight; ties keep their
/// original relative order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    pub weights: Vec<f64>,
    /// `bases[r][m]` is the unit vector `a_{rm}`.
    pub bases: Vec<Vec<Vec<f64>>>,
}

impl CpModel {
    pub fn new(weights: Vec<f64>, bases: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let model = CpModel { weights, bases };
        model.validate()?;
        Ok(model.sorted())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.len() != self.bases.len() {
            return Err(Error::RankMismatch(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.bases.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("CP weights must be finite and nonnegative".into()));
        }
        let dims = self.dims()?;
        for (r, comp) in self.bases.iter().enumerate() {
            for (m, a) in comp.iter().enumerate() {
                if a.len() != dims[m] {
                    return Err(Error::DimensionMismatch(format!(
                        "component {r} mode {m} has length {}, expected {}",
                        a.len(),
                        dims[m]
                    )));
                }
                let n = norm2(a);
                if (n - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "basis vector ({r},{m}) has norm {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.bases.first().map_or(0, Vec::len)
    }

    pub fn dims(&self) -> Result<Vec<usize>> {
        let first = self
            .bases
            .first()
            .ok_or_else(|| Error::RankMismatch("empty CP model".into()))?;
        if first.is_empty() {
            return Err(Error::InvalidShape("CP component with no modes".into()));
        }
        let dims: Vec<usize> = first.iter().map(Vec::len).collect();
        for (r, comp) in self.bases.iter().enumerate() {
            if comp.len() != dims.len() || comp.iter().zip(&dims).any(|(a, &d)| a.len() != d) {
                return Err(Error::DimensionMismatch(format!(
                    "component {r} has inconsistent dims"
                )));
            }
        }
        Ok(dims)
    }

    /// `A_m = [a_{1m}, …, a_{Rm}]`, a `d_m × R` matrix.
    pub fn basis_matrix(&self, mode: usize) -> Result<Matrix> {
        let cols: Vec<Vec<f64>> = self.bases.iter().map(|c| c[mode].clone()).collect();
        Matrix::from_columns(&cols)
    }

    fn sorted(self) -> Self {
        let mut order: Vec<usize> = (0..self.rank()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]));
        CpModel {
            weights: order.iter().map(|&r| self.weights[r]).collect(),
            bases: order.iter().map(|&r| self.bases[r].clone()).collect(),
        }
    }
}
