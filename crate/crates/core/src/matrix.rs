use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-major `n × d` block of sentence vectors. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn from_shape_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at row {} col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        let data = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(Self { data })
    }

    /// Stacks rows of equal length. An empty list gives a `0 × dim` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::from_shape_vec(rows.len(), dim, flat)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            data: Array2::zeros((0, dim)),
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.nrows() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.ncols();
        &self.as_slice()[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = ArrayView1<'_, f64>> {
        self.data.axis_iter(Axis(0))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("embedding matrices are kept in standard layout")
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), idx),
        }
    }
}
