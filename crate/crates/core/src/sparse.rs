//! Row-oriented sparse matrices with strictly positive stored weights.
//!
//! Every matrix in the pipeline (transition matrices, walk matrices, co-count
//! matrices and the final graph) is a [`SparseMatrix`] in compressed sparse row
//! layout. Stored weights are finite and strictly positive; zeros are never
//! stored, and column indices are strictly increasing inside each row.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, col: u32) -> Option<f64> {
        self.indices.binary_search(&col).ok().map(|pos| self.values[pos])
    }

    /// Sum of the stored weights, accumulated in ascending column order.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from per-row `(column, weight)` lists. Each list must be
    /// strictly increasing in column with finite positive weights.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let m = Self::from_rows_unchecked(n_cols, rows);
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn from_rows_unchecked(n_cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds a matrix from `(row, col, weight)` triplets in any order.
    /// Duplicate coordinates are summed in input order; entries summing to
    /// zero are dropped. Negative or non-finite weights are rejected.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: impl IntoIterator<Item = (u32, u32, f64)>) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            if r as usize >= n_rows || c as usize >= n_cols {
                return Err(Error::DimensionMismatch(format!("entry ({r}, {c}) outside {n_rows}x{n_cols}")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("weight {v} at ({r}, {c})")));
            }
            rows[r as usize].push((c, v));
        }
        for row in &mut rows {
            merge_duplicate_columns(row);
        }
        Self::from_rows(n_cols, rows)
    }

    /// Builds a matrix from a dense row-major table, skipping zeros.
    pub fn from_dense(n_cols: usize, dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|row| {
                if row.len() != n_cols {
                    return Err(Error::DimensionMismatch(format!(
                        "dense row of length {} for {} columns",
                        row.len(),
                        n_cols
                    )));
                }
                Ok(row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(n_cols, rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|r| {
                let mut dense = vec![0.0; self.n_cols];
                for (c, v) in self.row(r).iter() {
                    dense[c as usize] = v;
                }
                dense
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_cols > u32::MAX as usize {
            return Err(Error::invalid("column count exceeds u32 range"));
        }
        for r in 0..self.n_rows {
            let row = self.row(r);
            let mut prev: Option<u32> = None;
            for (c, v) in row.iter() {
                if c as usize >= self.n_cols {
                    return Err(Error::DimensionMismatch(format!(
                        "column {c} in row {r} exceeds {} columns",
                        self.n_cols
                    )));
                }
                if prev.is_some_and(|p| p >= c) {
                    return Err(Error::invalid(format!("row {r}: columns not strictly increasing at {c}")));
                }
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("row {r}: stored weight {v} at column {c} is not positive")));
                }
                prev = Some(c);
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row(&self, r: usize) -> Row<'_> {
        let (start, end) = (self.indptr[r], self.indptr[r + 1]);
        Row {
            indices: &self.indices[start..end],
            values: &self.values[start..end],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.n_rows).map(move |r| self.row(r))
    }

    /// Weight at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r >= self.n_rows || c >= self.n_cols {
            return 0.0;
        }
        self.row(r).get(c as u32).unwrap_or(0.0)
    }

    /// Stored entries as `(row, col, weight)`, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |(c, v)| (r as u32, c, v)))
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in ascending order, so each output row comes out sorted.
        for r in 0..self.n_rows {
            for (c, v) in self.row(r).iter() {
                let slot = next[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Entrywise sum. Both operands must have the same shape.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let rows = (0..self.n_rows)
            .map(|r| merge_rows(self.row(r), other.row(r), |a, b| a + b))
            .collect();
        Ok(SparseMatrix::from_rows_unchecked(self.n_cols, rows))
    }

    /// Multiplies every stored weight by a positive factor.
    pub fn scale(&self, factor: f64) -> Result<SparseMatrix> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid(format!("scale factor {factor}")));
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out.drop_underflow();
        Ok(out)
    }

    /// Applies `f` to every row, producing a new matrix with the same shape.
    /// `f` must return a valid row (strictly increasing columns, positive weights).
    pub(crate) fn map_rows<F>(&self, f: F) -> SparseMatrix
    where
        F: Fn(usize, Row<'_>) -> Vec<(u32, f64)> + Sync + Send,
    {
        let rows = par_rows(self.n_rows, |r| f(r, self.row(r)));
        SparseMatrix::from_rows_unchecked(self.n_cols, rows)
    }

    /// Sparse product `self · other`.
    pub fn multiply(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.multiply_with(other, |_| {})
    }

    /// Sparse product where each finished output row passes through `finish`
    /// (used for pruning). Rows are computed independently, so the result does
    /// not depend on scheduling. Inside a row, each output entry accumulates
    /// its terms in ascending inner index.
    pub fn multiply_with<F>(&self, other: &SparseMatrix, finish: F) -> Result<SparseMatrix>
    where
        F: Fn(&mut Vec<(u32, f64)>) + Sync + Send,
    {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let width = other.n_cols;
        let compute = |acc: &mut Accumulator, r: usize| {
            for (k, a) in self.row(r).iter() {
                for (j, b) in other.row(k as usize).iter() {
                    acc.add(j, a * b);
                }
            }
            let mut row = acc.drain();
            finish(&mut row);
            row
        };

        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<(u32, f64)>> = (0..self.n_rows)
            .into_par_iter()
            .map_init(|| Accumulator::new(width), |acc, r| compute(acc, r))
            .collect();

        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<(u32, f64)>> = {
            let mut acc = Accumulator::new(width);
            (0..self.n_rows).map(|r| compute(&mut acc, r)).collect()
        };

        Ok(SparseMatrix::from_rows_unchecked(width, rows))
    }

    fn drop_underflow(&mut self) {
        if self.values.iter().all(|&v| v > 0.0) {
            return;
        }
        let rows = (0..self.n_rows)
            .map(|r| self.row(r).iter().filter(|&(_, v)| v > 0.0).collect())
            .collect();
        *self = SparseMatrix::from_rows_unchecked(self.n_cols, rows);
    }
}

/// Dense scratch row for Gustavson-style products.
struct Accumulator {
    sums: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Accumulator {
    fn new(width: usize) -> Self {
        Accumulator {
            sums: vec![0.0; width],
            seen: vec![false; width],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, col: u32, value: f64) {
        let c = col as usize;
        if !self.seen[c] {
            self.seen[c] = true;
            self.touched.push(col);
        }
        self.sums[c] += value;
    }

    fn drain(&mut self) -> Vec<(u32, f64)> {
        self.touched.sort_unstable();
        let mut row = Vec::with_capacity(self.touched.len());
        for &c in &self.touched {
            let v = self.sums[c as usize];
            if v > 0.0 {
                row.push((c, v));
            }
            self.sums[c as usize] = 0.0;
            self.seen[c as usize] = false;
        }
        self.touched.clear();
        row
    }
}

/// Union merge of two sorted rows. Columns present in only one row keep their
/// weight; shared columns are combined with `both`.
pub(crate) fn merge_rows(a: Row<'_>, b: Row<'_>, both: impl Fn(f64, f64) -> f64) -> Vec<(u32, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ca, cb) = (a.indices[i], b.indices[j]);
        if ca < cb {
            out.push((ca, a.values[i]));
            i += 1;
        } else if cb < ca {
            out.push((cb, b.values[j]));
            j += 1;
        } else {
            out.push((ca, both(a.values[i], b.values[j])));
            i += 1;
            j += 1;
        }
    }
    out.extend(a.iter().skip(i));
    out.extend(b.iter().skip(j));
    out
}

fn merge_duplicate_columns(row: &mut Vec<(u32, f64)>) {
    row.sort_by_key(|&(c, _)| c);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
    for &(c, v) in row.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    merged.retain(|&(_, v)| v > 0.0);
    *row = merged;
}

pub(crate) fn par_rows<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let m = b[0].len();
        let inner = b.len();
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for k in 0..inner {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    #[test]
    fn rejects_unsorted_or_nonpositive_rows() {
        assert!(SparseMatrix::from_rows(3, vec![vec![(1, 1.0), (0, 1.0)]]).is_err());
        assert!(SparseMatrix::from_rows(3, vec![vec![(1, 0.0)]]).is_err());
        assert!(SparseMatrix::from_rows(3, vec![vec![(3, 1.0)]]).is_err());
        assert!(SparseMatrix::from_rows(3, vec![vec![(0, 1.0), (2, 0.5)]]).is_ok());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 0.5), (0, 1, 0.25), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.get(0, 1), 0.75);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn transpose_of_rectangular() {
        let m = SparseMatrix::from_dense(3, &[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]).unwrap();
        let t = m.transpose();
        assert_eq!(t.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 0.0]]);
    }

    #[test]
    fn multiply_dimension_mismatch() {
        let a = SparseMatrix::zeros(2, 3);
        let b = SparseMatrix::zeros(2, 3);
        assert!(matches!(a.multiply(&b), Err(Error::DimensionMismatch(_))));
    }

    fn dense_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], cols), rows)
    }

    proptest! {
        #[test]
        fn product_matches_dense((a, b) in (1usize..8, 1usize..8, 1usize..8)
            .prop_flat_map(|(n, k, m)| (dense_strategy(n, k), dense_strategy(k, m))))
        {
            let k = b.len();
            let m = b[0].len();
            let sa = SparseMatrix::from_dense(k, &a).unwrap();
            let sb = SparseMatrix::from_dense(m, &b).unwrap();
            let prod = sa.multiply(&sb).unwrap().to_dense();
            let want = dense_mul(&a, &b);
            for (pr, wr) in prod.iter().zip(&want) {
                for (p, w) in pr.iter().zip(wr) {
                    prop_assert!((p - w).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn transpose_is_involution(a in dense_strategy(5, 7)) {
            let s = SparseMatrix::from_dense(7, &a).unwrap();
            prop_assert_eq!(s.transpose().transpose(), s);
        }
    }
}
