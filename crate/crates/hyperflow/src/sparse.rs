//! Compressed sparse row matrices for the propagation operators.
//!
//! The influence operators (Θ, its powers, normalized adjacencies) are sparse
//! and constant with respect to the trainable parameters, so a small CSR type
//! with dense products is all the pipeline needs.

use ndarray::Array2;

/// Sparse matrix in compressed sparse row form. Column indices are sorted
/// within each row and duplicates are merged at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates and dropping
    /// explicit zeros.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());

        let mut i = 0;
        while i < sorted.len() {
            let (r, c, _) = sorted[i];
            assert!(r < rows && c < cols, "triplet out of bounds");
            let mut v = 0.0;
            while i < sorted.len() && sorted[i].0 == r && sorted[i].1 == c {
                v += sorted[i].2;
                i += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] = indices.len();
            }
        }
        // forward-fill row pointers for rows without entries
        for r in 1..=rows {
            if indptr[r] < indptr[r - 1] {
                indptr[r] = indptr[r - 1];
            }
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// The n-by-n identity.
    pub fn identity(n: usize) -> Self {
        let triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
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

    /// Iterate stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    /// Dense product `self · rhs`.
    pub fn dot_dense(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, rhs.nrows(), "shape mismatch in spmm");
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.rows, k));
        for r in 0..self.rows {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[idx];
                let v = self.values[idx];
                for j in 0..k {
                    out[[r, j]] += v * rhs[[c, j]];
                }
            }
        }
        out
    }

    /// Dense product `selfᵀ · rhs` without materializing the transpose.
    pub fn transpose_dot_dense(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.rows, rhs.nrows(), "shape mismatch in spmm^T");
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.cols, k));
        for r in 0..self.rows {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[idx];
                let v = self.values[idx];
                for j in 0..k {
                    out[[c, j]] += v * rhs[[r, j]];
                }
            }
        }
        out
    }

    /// Sparse product `self · rhs`.
    pub fn matmul(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in sparse matmul");
        let mut triplets = Vec::new();
        let mut acc = vec![0.0f64; rhs.cols];
        let mut touched = Vec::new();
        for r in 0..self.rows {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                let mid = self.indices[idx];
                let v = self.values[idx];
                for j in rhs.indptr[mid]..rhs.indptr[mid + 1] {
                    let c = rhs.indices[j];
                    if acc[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    acc[c] += v * rhs.values[j];
                }
            }
            for &c in &touched {
                if acc[c] != 0.0 {
                    triplets.push((r, c, acc[c]));
                }
                acc[c] = 0.0;
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.rows, rhs.cols, &triplets)
    }

    /// Stored diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        let mut d = vec![0.0; n];
        for (r, c, v) in self.iter() {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    /// Copy with every diagonal entry set to `value` (inserted where absent).
    pub fn with_diagonal(&self, value: f64) -> CsrMatrix {
        assert_eq!(self.rows, self.cols, "diagonal requires a square matrix");
        let mut triplets: Vec<(usize, usize, f64)> =
            self.iter().filter(|&(r, c, _)| r != c).collect();
        for i in 0..self.rows {
            triplets.push((i, i, value));
        }
        CsrMatrix::from_triplets(self.rows, self.cols, &triplets)
    }

    /// Densify; intended for tests and small oracles.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_merge_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense(), array![[0.0, 3.0], [4.0, 0.0]]);
    }

    #[test]
    fn dense_products_match_dense_math() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let x = array![[1.0, 0.0], [2.0, 1.0], [0.5, 3.0]];
        let want = m.to_dense().dot(&x);
        assert_eq!(m.dot_dense(&x), want);
        let want_t = m.to_dense().t().dot(&array![[1.0], [2.0]]);
        assert_eq!(m.transpose_dot_dense(&array![[1.0], [2.0]]), want_t);
    }

    #[test]
    fn sparse_matmul_matches_dense() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 2, 3.0), (2, 0, 1.0)]);
        let b = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 5.0), (2, 2, -1.0)]);
        let got = a.matmul(&b).to_dense();
        let want = a.to_dense().dot(&b.to_dense());
        assert_eq!(got, want);
    }

    #[test]
    fn with_diagonal_inserts_missing_entries() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0)]);
        let d = m.with_diagonal(1.0).to_dense();
        assert_eq!(d, array![[1.0, 2.0], [0.0, 1.0]]);
    }
}
