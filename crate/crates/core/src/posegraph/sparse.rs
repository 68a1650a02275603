//! Sparse symmetric positive-definite factorization.
//!
//! Matrices are stored as the upper triangle (diagonal included) in
//! compressed-column form. Factorization is up-looking: row `k` of `L` is
//! found by walking the elimination tree from the nonzeros of column `k`
//! of the upper triangle, then solved against the columns computed so far.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SMatrix};

use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from `(row, col) → value` entries with `row ≤ col`.
    pub fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), f64>) -> Result<Self> {
        let mut by_col: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(r, c), &v) in entries {
            if r > c || c >= n {
                return Err(Error::InvalidInput("entries must lie in the upper triangle"));
            }
            by_col.insert((c, r), v);
        }
        let mut col_ptr = vec![0; n + 1];
        let mut row_idx = Vec::with_capacity(by_col.len());
        let mut values = Vec::with_capacity(by_col.len());
        for (&(c, r), &v) in &by_col {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Builds from 6×6 blocks keyed by `(block_row, block_col)`, `block_row ≤ block_col`.
    pub fn from_blocks(blocks: usize, entries: &BTreeMap<(usize, usize), SMatrix<f64, 6, 6>>) -> Result<Self> {
        let mut scalar = BTreeMap::new();
        for (&(br, bc), m) in entries {
            for a in 0..6 {
                for b in 0..6 {
                    let (r, c) = (6 * br + a, 6 * bc + b);
                    if r <= c {
                        scalar.insert((r, c), m[(a, b)]);
                    }
                }
            }
        }
        Self::from_entries(6 * blocks, &scalar)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                if self.row_idx[p] == c {
                    d[c] = self.values[p];
                }
            }
        }
        d
    }

    /// Copy with `shift[i]` added to each diagonal entry. The diagonal must be structurally present.
    pub fn with_diagonal_shift(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for c in 0..self.n {
            for p in out.col_ptr[c]..out.col_ptr[c + 1] {
                if out.row_idx[p] == c {
                    out.values[p] += shift[c];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                m[(r, c)] = self.values[p];
                m[(c, r)] = self.values[p];
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                y[r] += self.values[p] * x[c];
                if r != c {
                    y[c] += self.values[p] * x[r];
                }
            }
        }
        y
    }
}

/// Elimination tree and column counts of `L`, reusable across matrices
/// with the same pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbolic {
    parent: Vec<Option<usize>>,
    l_ptr: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &SparseSymmetric) -> Self {
        let n = a.n;
        let mut parent = vec![None; n];
        let mut ancestor: Vec<Option<usize>> = vec![None; n];
        for k in 0..n {
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p];
                while i < k {
                    let next = ancestor[i];
                    ancestor[i] = Some(k);
                    match next {
                        None => {
                            parent[i] = Some(k);
                            break;
                        }
                        Some(nx) if nx == k => break,
                        Some(nx) => i = nx,
                    }
                }
            }
        }
        let mut counts = vec![1usize; n];
        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for k in 0..n {
            ereach(a, k, &parent, &mut mark, &mut stack);
            for &i in &stack {
                counts[i] += 1;
            }
        }
        let mut l_ptr = vec![0; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + counts[k];
        }
        Self { parent, l_ptr }
    }

    pub fn nnz(&self) -> usize {
        self.l_ptr[self.l_ptr.len() - 1]
    }
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in topological order.
fn ereach(a: &SparseSymmetric, k: usize, parent: &[Option<usize>], mark: &mut [usize], out: &mut Vec<usize>) {
    out.clear();
    mark[k] = k;
    let mut path = Vec::new();
    for p in a.col_ptr[k]..a.col_ptr[k + 1] {
        let mut i = a.row_idx[p];
        if i > k {
            continue;
        }
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            match parent[i] {
                Some(pi) => i = pi,
                None => break,
            }
        }
        // each path is already ordered from leaf to root; prepend it
        let mut merged = path.clone();
        merged.extend_from_slice(out);
        core::mem::swap(out, &mut merged);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCholesky {
    n: usize,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &SparseSymmetric) -> Result<Self> {
        Self::factor_with(a, &Symbolic::analyze(a))
    }

    /// Numeric factorization; `SingularSystem` when `a` is not positive definite.
    pub fn factor_with(a: &SparseSymmetric, sym: &Symbolic) -> Result<Self> {
        let n = a.n;
        let mut l_idx = vec![0; sym.nnz()];
        let mut l_val = vec![0.0; sym.nnz()];
        let mut next: Vec<usize> = sym.l_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut pattern = Vec::new();
        for k in 0..n {
            ereach(a, k, &sym.parent, &mut mark, &mut pattern);
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let i = a.row_idx[p];
                if i <= k {
                    x[i] += a.values[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &pattern {
                let lki = x[i] / l_val[sym.l_ptr[i]];
                x[i] = 0.0;
                for p in sym.l_ptr[i] + 1..next[i] {
                    x[l_idx[p]] -= l_val[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                l_idx[p] = k;
                l_val[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularSystem);
            }
            let p = next[k];
            next[k] += 1;
            l_idx[p] = k;
            l_val[p] = d.sqrt();
        }
        Ok(Self { n, l_ptr: sym.l_ptr.clone(), l_idx, l_val })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for j in 0..self.n {
            x[j] /= self.l_val[self.l_ptr[j]];
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * x[j];
            }
        }
        for j in (0..self.n).rev() {
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[j] -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] /= self.l_val[self.l_ptr[j]];
        }
        x
    }

    pub fn nnz(&self) -> usize {
        self.l_val.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, density: f64, seed: u64) -> SparseSymmetric {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = BTreeMap::new();
        let mut rowsum = vec![0.0; n];
        for c in 0..n {
            for r in 0..c {
                if rng.random::<f64>() < density {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    e.insert((r, c), v);
                    rowsum[r] += v.abs();
                    rowsum[c] += v.abs();
                }
            }
        }
        for i in 0..n {
            e.insert((i, i), rowsum[i] + 0.5);
        }
        SparseSymmetric::from_entries(n, &e).unwrap()
    }

    #[test]
    fn matches_dense_solve() {
        for seed in 0..20 {
            let n = 5 + seed as usize * 3;
            let a = random_spd(n, 0.15, seed);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let x = SparseCholesky::factor(&a).unwrap().solve(&b);
            let dense = a.to_dense().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
            for i in 0..n {
                assert!((x[i] - dense[i]).abs() < 1e-10);
            }
            let ax = a.mul_vec(&x);
            for i in 0..n {
                assert!((ax[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut e = BTreeMap::new();
        e.insert((0, 0), 1.0);
        e.insert((0, 1), 2.0);
        e.insert((1, 1), 1.0);
        let a = SparseSymmetric::from_entries(2, &e).unwrap();
        assert!(matches!(SparseCholesky::factor(&a), Err(Error::SingularSystem)));
    }

    #[test]
    fn diagonal_matrix_has_no_fill() {
        let mut e = BTreeMap::new();
        for i in 0..10 {
            e.insert((i, i), 2.0);
        }
        let a = SparseSymmetric::from_entries(10, &e).unwrap();
        assert_eq!(SparseCholesky::factor(&a).unwrap().nnz(), 10);
    }
}
