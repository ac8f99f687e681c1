use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension z-scoring with statistics taken from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; constant dimensions get scale 1.
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit standardization on zero samples".into()))?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);

        let mut scales = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in scales.iter_mut().zip(row.as_ref()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in scales.iter_mut() {
            let sd = (*s / n).sqrt();
            *s = if sd > 1e-12 * (1.0 + sd) && sd.is_finite() {
                sd
            } else {
                1.0
            };
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("feature means".into()));
        }
        Ok(Self { means, scales })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.scales.len() {
            return Err(Error::validation(
                "standardization",
                "means and scales differ in length",
            ));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::validation("standardization.means", "non-finite entry"));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("standardization.scales", "entries must be positive"));
        }
        Ok(())
    }
}
