//! Minimal sparse linear algebra: CSR storage plus a direct LU solver.
//!
//! The compressed-row container and its construction/product routines are
//! implemented here; the factorization itself is delegated to `faer`'s
//! sparse LU (partial pivoting with a fill-reducing column ordering).

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{ChacError, Result};

/// Sparse matrix in compressed sparse row format.
///
/// Column indices are sorted and unique within each row. Explicit zeros are
/// permitted.
#[derive(Debug, Clone)]
pub struct SparseMat {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMat {
    /// Builds a CSR matrix from (row, col, value) triplets.
    ///
    /// Duplicate entries are summed. The result is independent of the order
    /// of the triplet list.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= n_rows {
                return Err(ChacError::IndexOutOfRange { index: r, len: n_rows });
            }
            if c >= n_cols {
                return Err(ChacError::IndexOutOfRange { index: c, len: n_cols });
            }
        }
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match dedup.last_mut() {
                Some(&mut (lr, lc, ref mut lv)) if lr == r && lc == c => *lv += v,
                _ => dedup.push((r, c, v)),
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &(r, _, _) in &dedup {
            row_offsets[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(SparseMat {
            n_rows,
            n_cols,
            row_offsets,
            col_indices: dedup.iter().map(|&(_, c, _)| c).collect(),
            values: dedup.iter().map(|&(_, _, v)| v).collect(),
        })
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

    /// Row access as (column indices, values) slices.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(ChacError::DimensionMismatch(format!(
                "matvec: matrix is {}x{}, vector has length {}",
                self.n_rows,
                self.n_cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// Quadratic form xᵀ A y.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ay = self.matvec(y)?;
        Ok(x.iter().zip(&ay).map(|(a, b)| a * b).sum())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n_rows)
            .flat_map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter()
                    .zip(vals)
                    .map(move |(&c, &v)| Triplet::new(r, c, v))
                    .collect::<Vec<_>>()
            })
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &triplets)
            .map_err(|e| ChacError::DimensionMismatch(format!("faer conversion failed: {e:?}")))
    }

    /// Solves A x = b by sparse LU with partial pivoting.
    pub fn solve_direct(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.n_rows != self.n_cols {
            return Err(ChacError::DimensionMismatch(format!(
                "solve_direct requires a square matrix, got {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        if b.len() != self.n_rows {
            return Err(ChacError::DimensionMismatch(format!(
                "solve_direct: rhs length {} != {}",
                b.len(),
                self.n_rows
            )));
        }
        let mat = self.to_faer()?;
        let lu = mat
            .sp_lu()
            .map_err(|_| ChacError::SingularMatrix { pivot: None })?;
        let rhs = Mat::from_fn(self.n_rows, 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        let sol: Vec<f64> = (0..self.n_rows).map(|i| x[(i, 0)]).collect();
        // numeric-singularity guard: faer may succeed structurally yet
        // produce a useless solution for singular input
        let ax = self.matvec(&sol)?;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rnorm = ax
            .iter()
            .zip(b)
            .map(|(a, bb)| (a - bb) * (a - bb))
            .sum::<f64>()
            .sqrt();
        if !sol.iter().all(|v| v.is_finite()) || (bnorm > 0.0 && rnorm / bnorm > 1e-8) {
            return Err(ChacError::SingularMatrix { pivot: None });
        }
        Ok(sol)
    }
}

/// Direct solver with a cached symbolic factorization.
///
/// The Newton systems of a whole time integration share one sparsity
/// pattern; the fill-reducing analysis is done once and only the numeric
/// factorization is repeated.
pub struct CachedLu {
    symbolic: Option<(SymbolicLu<usize>, Vec<usize>, Vec<usize>)>,
}

impl CachedLu {
    pub fn new() -> Self {
        CachedLu { symbolic: None }
    }

    /// Factorizes A and solves A x = b, reusing the symbolic analysis of a
    /// previous call when the sparsity pattern is unchanged.
    pub fn solve(&mut self, a: &SparseMat, b: &[f64]) -> Result<Vec<f64>> {
        if a.n_rows != a.n_cols {
            return Err(ChacError::DimensionMismatch(
                "CachedLu requires a square matrix".into(),
            ));
        }
        let mat = a.to_faer()?;
        let pattern_matches = match &self.symbolic {
            Some((_, col_ptr, row_idx)) => {
                col_ptr == mat.symbolic().col_ptr() && row_idx == mat.symbolic().row_idx()
            }
            None => false,
        };
        if !pattern_matches {
            let sym = SymbolicLu::try_new(mat.symbolic())
                .map_err(|_| ChacError::SingularMatrix { pivot: None })?;
            self.symbolic = Some((
                sym,
                mat.symbolic().col_ptr().to_vec(),
                mat.symbolic().row_idx().to_vec(),
            ));
        }
        let (sym, _, _) = self.symbolic.as_ref().unwrap();
        let lu = Lu::try_new_with_symbolic(sym.clone(), mat.as_ref())
            .map_err(|_| ChacError::SingularMatrix { pivot: None })?;
        let rhs = Mat::from_fn(a.n_rows, 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        let sol: Vec<f64> = (0..a.n_rows).map(|i| x[(i, 0)]).collect();
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(ChacError::SingularMatrix { pivot: None });
        }
        Ok(sol)
    }
}

impl Default for CachedLu {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMat::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.row(0), (&[0usize][..], &[3.0][..]));
    }

    #[test]
    fn empty_triplets_give_zero_matrix() {
        let m = SparseMat::from_triplets(3, 4, &[]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.matvec(&[1.0; 4]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn triplet_order_does_not_matter() {
        let t = vec![(0, 1, 2.0), (2, 0, -1.0), (1, 1, 4.0), (0, 0, 1.0), (0, 1, 0.5)];
        let mut p = t.clone();
        p.reverse();
        p.swap(0, 2);
        let a = SparseMat::from_triplets(3, 3, &t).unwrap();
        let b = SparseMat::from_triplets(3, 3, &p).unwrap();
        assert_eq!(a.row_offsets, b.row_offsets);
        assert_eq!(a.col_indices, b.col_indices);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(SparseMat::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_identity() {
        let t: Vec<_> = (0..4).map(|i| (i, i, 1.0)).collect();
        let id = SparseMat::from_triplets(4, 4, &t).unwrap();
        let x = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(id.matvec(&x).unwrap(), x);
    }

    #[test]
    fn matvec_matches_dense_oracle() {
        let dense = [[1.0, 2.0, 0.0], [0.5, -1.0, 3.0], [0.0, 0.0, 2.0]];
        let mut t = vec![];
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        let a = SparseMat::from_triplets(3, 3, &t).unwrap();
        let x = [1.0, 2.0, -1.0];
        let y = a.matvec(&x).unwrap();
        for i in 0..3 {
            let expect: f64 = (0..3).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - expect).abs() <= 1e-15);
        }
    }

    #[test]
    fn solve_diagonal() {
        let t: Vec<_> = (0..5).map(|i| (i, i, (i + 1) as f64)).collect();
        let a = SparseMat::from_triplets(5, 5, &t).unwrap();
        let b = vec![2.0; 5];
        let x = a.solve_direct(&b).unwrap();
        for i in 0..5 {
            assert!((x[i] - 2.0 / (i + 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_singular_matrix_errors() {
        // rank-deficient 2x2
        let a = SparseMat::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)])
            .unwrap();
        assert!(a.solve_direct(&[1.0, 0.0]).is_err());
    }

    /// Dense LU with full pivoting, used as an independent oracle.
    fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) {
        let n = b.len();
        for k in 0..n {
            let (pi, _) = (k..n)
                .map(|i| (i, a[i][k].abs()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            a.swap(k, pi);
            b.swap(k, pi);
            for i in (k + 1)..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= a[i][j] * b[j];
            }
            b[i] = s / a[i][i];
        }
    }

    #[test]
    fn solve_random_sparse_vs_dense_oracle() {
        // deterministic pseudo-random entries
        let n = 200;
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut t = vec![];
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            // diagonally dominant for good conditioning
            t.push((i, i, 10.0 + next().abs()));
            dense[i][i] = t.last().unwrap().2;
            for _ in 0..4 {
                let j = ((next() + 0.5) * n as f64) as usize % n;
                let v = next();
                t.push((i, j, v));
                dense[i][j] += v;
            }
        }
        let a = SparseMat::from_triplets(n, n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let x = a.solve_direct(&b).unwrap();
        let mut d = dense.clone();
        let mut bx = b.clone();
        dense_solve(&mut d, &mut bx);
        let maxdiff = x
            .iter()
            .zip(&bx)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(maxdiff <= 1e-9, "max diff {maxdiff}");
    }

    #[test]
    fn solve_recovers_constructed_solution() {
        let n = 50;
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.5));
            }
        }
        let a = SparseMat::from_triplets(n, n, &t).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x0).unwrap();
        let x = a.solve_direct(&b).unwrap();
        let relerr = x
            .iter()
            .zip(&x0)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
            / x0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(relerr < 1e-9);
    }

    #[test]
    fn cached_lu_matches_one_shot() {
        let n = 30;
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 3.0 + i as f64 * 0.01));
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
                t.push((i + 1, i, -0.5));
            }
        }
        let a = SparseMat::from_triplets(n, n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut cache = CachedLu::new();
        let x1 = cache.solve(&a, &b).unwrap();
        let x2 = cache.solve(&a, &b).unwrap();
        let x3 = a.solve_direct(&b).unwrap();
        for i in 0..n {
            assert!((x1[i] - x3[i]).abs() < 1e-12);
            assert!((x2[i] - x3[i]).abs() < 1e-12);
        }
    }
}
