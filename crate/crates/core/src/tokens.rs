use serde::{Deserialize, Serialize};

/// A dense row-major `rows x cols` float32 matrix; one row per token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        TokenMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "token matrix shape");
        TokenMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &TokenMatrix) -> TokenMatrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        TokenMatrix::from_vec(self.rows + other.rows, self.cols, data)
    }
}
