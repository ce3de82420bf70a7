//! Compressed-row sparse matrices and the direct solver for the Newton systems.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseRowMat, SymbolicSparseRowMat};
use faer::Mat;

use crate::{Error, Result};

/// `(row, col, value)` contributions; duplicates sum on compression.
#[derive(Clone, Debug, Default)]
pub struct TripletBuffer {
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            entries: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Appends another buffer; the merged sum does not depend on the order of merges.
    pub fn merge(&mut self, other: TripletBuffer) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// Square CSR matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        out
    }
}

/// Compresses triplets into CSR, summing duplicates.
pub fn assemble(triplets: &TripletBuffer, n: usize) -> Result<SparseMatrix> {
    for &(r, c, _) in &triplets.entries {
        if r >= n || c >= n {
            return Err(Error::IndexOutOfRange { row: r, col: c, n });
        }
    }
    // counting sort by row keeps the merge order stable within a row
    let mut counts = vec![0usize; n + 1];
    for &(r, _, _) in &triplets.entries {
        counts[r + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut by_row = vec![(0usize, 0.0f64); triplets.entries.len()];
    for &(r, c, v) in &triplets.entries {
        by_row[next[r]] = (c, v);
        next[r] += 1;
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let row = &mut by_row[counts[i]..counts[i + 1]];
        row.sort_by_key(|e| e.0);
        for &(c, v) in row.iter() {
            if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` by sparse LU with partial pivoting.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: b.len(),
        });
    }
    if a.n == 0 {
        return Ok(Vec::new());
    }
    let symbolic = SymbolicSparseRowMat::<usize>::new_checked(
        a.n,
        a.n,
        a.row_ptr.clone(),
        None,
        a.col_idx.clone(),
    );
    let mat = SparseRowMat::<usize, f64>::new(symbolic, a.values.clone());
    let lu = mat.as_ref().sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => Error::Singular { pivot_row: index },
        LuError::Generic(_) => Error::Singular { pivot_row: 0 },
    })?;
    let solve_with = |rhs: &[f64]| -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(a.n, 1, |i, _| rhs[i]);
        lu.solve_in_place(m.as_mut());
        (0..a.n).map(|i| m[(i, 0)]).collect()
    };
    let mut x = solve_with(b);
    if let Some(row) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Singular { pivot_row: row });
    }
    // one step of iterative refinement when the residual bound is missed
    let bound = |x: &[f64]| 1e-10 * (a.frobenius_norm() * norm(x) + norm(b));
    let r: Vec<f64> = a
        .mul_vec(&x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| bi - ax)
        .collect();
    if norm(&r) > bound(&x) {
        let dx = solve_with(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicates_sum() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        let a = assemble(&t, 1).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn empty_buffer_is_zero_matrix() {
        let a = assemble(&TripletBuffer::new(), 4).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.dim(), 4);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut t = TripletBuffer::new();
        t.push(3, 0, 1.0);
        assert!(matches!(
            assemble(&t, 3),
            Err(Error::IndexOutOfRange { row: 3, .. })
        ));
    }

    #[test]
    fn random_triplets_match_dense_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50;
        let mut t = TripletBuffer::new();
        let mut dense = vec![vec![0.0; n]; n];
        for _ in 0..2000 {
            let (i, j, v) = (
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                rng.gen::<f64>() - 0.5,
            );
            t.push(i, j, v);
            dense[i][j] += v;
        }
        let a = assemble(&t, n).unwrap();
        let ad = a.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert!((ad[i][j] - dense[i][j]).abs() < 1e-13);
            }
            let (cols, _) = a.row(i);
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn merge_order_does_not_matter() {
        let mut a = TripletBuffer::new();
        a.push(0, 1, 1.5);
        a.push(1, 1, 2.0);
        let mut b = TripletBuffer::new();
        b.push(0, 1, -0.5);
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(assemble(&ab, 2).unwrap(), assemble(&ba, 2).unwrap());
    }

    #[test]
    fn identity_solve() {
        let mut t = TripletBuffer::new();
        for i in 0..5 {
            t.push(i, i, 1.0);
        }
        let a = assemble(&t, 5).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(solve(&a, &b).unwrap(), b);
    }

    #[test]
    fn two_by_two() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 3.0);
        let x = solve(&assemble(&t, 2).unwrap(), &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let a = assemble(&t, 2).unwrap();
        assert!(matches!(
            solve(&a, &[1.0, 0.0]),
            Err(Error::Singular { .. })
        ));
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn random_diagonally_dominant_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let mut t = TripletBuffer::new();
        for i in 0..n {
            let mut off = 0.0;
            for _ in 0..6 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen::<f64>() - 0.5;
                    off += v.abs();
                    t.push(i, j, v);
                }
            }
            t.push(i, i, off + 1.0 + rng.gen::<f64>());
        }
        let a = assemble(&t, n).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = solve(&a, &b).unwrap();
        let xd = dense_lu_solve(a.to_dense(), b.clone());
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&r) <= 1e-10 * (a.frobenius_norm() * norm(&x) + norm(&b)));
    }
}
