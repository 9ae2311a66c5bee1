use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            values: vec![x],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            values,
        }
    }

    /// Builds a `rows x cols` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            values: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn item(&self) -> f64 {
        self.values[0]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.values[r * c..(r + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let c = self.shape.get(1).copied().unwrap_or(1).max(1);
        self.values.chunks(c)
    }

    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Shape(format!(
                "{what} must have rank {rank}, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}
