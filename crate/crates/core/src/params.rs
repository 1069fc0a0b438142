//! Flat parameter vectors and the small dense-vector algebra shared by the
//! model, the tuners, and the sharpness probe.

use crate::model::ModelError;

/// A flat vector of 64-bit parameters; the optimization variable.
///
/// All reductions (dot products, norms) accumulate left to right so that a
/// given vector always produces bit-identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc + a * b)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self + c * other`, freshly allocated.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "add_scaled: length mismatch");
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    /// `self += c * other` in place.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|a| a * c).collect(),
        }
    }

    /// NaN or infinity anywhere is a hard error surfaced to the caller.
    pub fn ensure_finite(&self, context: &str) -> Result<(), ModelError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(ModelError::NonFinite {
                context: format!("{context} (entry {i})"),
            }),
        }
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
