use super::{Tensor, TensorError};

/// Compressed sparse row matrix with `f64` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triples. Duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx: merged.iter().map(|t| t.1).collect(),
            values: merged.iter().map(|t| t.2).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Non-zero entries of one row as `(col, value)` pairs, ascending by column.
    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row_entries(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.row_entries(row)
            .find(|&(c, _)| c == col)
            .map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for (r, c, v) in self.triplets() {
            t.data_mut()[r * self.cols + c] = v;
        }
        t
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets() == self.transpose().triplets()
    }

    /// `self · dense` where `dense` is a `cols × n` matrix stored row-major.
    pub(crate) fn mul_dense_raw(&self, dense: &[f64], n: usize, out: &mut [f64]) {
        for r in 0..self.rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row_entries(r) {
                for (o, &x) in out_row.iter_mut().zip(&dense[c * n..(c + 1) * n]) {
                    *o += v * x;
                }
            }
        }
    }

    /// `selfᵀ · dense` where `dense` is a `rows × n` matrix.
    pub(crate) fn mul_dense_transposed_raw(&self, dense: &[f64], n: usize, out: &mut [f64]) {
        for r in 0..self.rows {
            let src = &dense[r * n..(r + 1) * n];
            for (c, v) in self.row_entries(r) {
                for (o, &x) in out[c * n..(c + 1) * n].iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
    }

    pub fn mul_dense(&self, dense: &Tensor) -> Result<Tensor, TensorError> {
        if dense.shape().len() != 2 || dense.rows() != self.cols {
            return Err(TensorError::mismatch(
                "sparse matmul",
                &[self.rows, self.cols],
                dense.shape(),
            ));
        }
        let n = dense.cols();
        let mut out = vec![0.0; self.rows * n];
        self.mul_dense_raw(dense.data(), n, &mut out);
        Tensor::new(&[self.rows, n], out)
    }
}
