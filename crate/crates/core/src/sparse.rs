//! Symmetric block-sparse matrices with one block row per cell, and a
//! block Cholesky factorization with minimum-degree ordering.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// Compensated accumulator: `hi + lo` carries about twice the working
/// precision.
struct TwoSum {
    hi: f64,
    lo: f64,
}

impl TwoSum {
    fn new(v: f64) -> Self {
        TwoSum { hi: v, lo: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let s = self.hi + v;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (v - bp);
        self.hi = s;
        self.lo += err;
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.lo += e;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Contiguous degree-of-freedom blocks, one per cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofMap {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    pub total: usize,
}

impl DofMap {
    pub fn from_sizes(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        DofMap {
            offsets,
            sizes,
            total,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b] + self.sizes[b]
    }
}

/// Square matrix stored as dense blocks; block rows hold `(column block,
/// block)` pairs sorted by column. Both triangles are stored.
#[derive(Clone, Debug)]
pub struct BlockSparse {
    pub dofmap: DofMap,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl BlockSparse {
    pub fn new(dofmap: DofMap) -> Self {
        let n = dofmap.n_blocks();
        BlockSparse {
            dofmap,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dofmap.total
    }

    pub fn block_rows(&self) -> &[Vec<(usize, DMatrix<f64>)>] {
        &self.rows
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |e| e.0).ok().map(|k| &row[k].1)
    }

    /// Adds `m` into block `(i, j)`.
    pub fn add_block(&mut self, i: usize, j: usize, m: &DMatrix<f64>) {
        let (ri, cj) = (self.dofmap.sizes[i], self.dofmap.sizes[j]);
        assert_eq!((m.nrows(), m.ncols()), (ri, cj), "block ({i}, {j}) has the wrong shape");
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => row[k].1 += m,
            Err(k) => row.insert(k, (j, m.clone())),
        }
    }

    pub fn n_stored_blocks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .map(|(_, m)| m.nrows() * m.ncols())
            .sum()
    }

    /// `y = A x`, parallel over block rows.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let parts: Vec<DVector<f64>> = self
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut yi = DVector::zeros(self.dofmap.sizes[i]);
                for (j, m) in row {
                    let xj = x.rows(self.dofmap.offsets[*j], self.dofmap.sizes[*j]);
                    yi.gemv(1.0, m, &xj, 1.0);
                }
                yi
            })
            .collect();
        let mut y = DVector::zeros(self.dim());
        for (i, yi) in parts.into_iter().enumerate() {
            y.rows_mut(self.dofmap.offsets[i], self.dofmap.sizes[i]).copy_from(&yi);
        }
        y
    }

    /// `b - A x` accumulated in double-double arithmetic, then rounded.
    /// Used for iterative refinement on ill-conditioned systems.
    pub fn residual_extended(&self, x: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        self.residual_split(None, x, b, None)
    }

    /// `(b + b_lo) - (A + A_lo) x` for a matrix and load stored as
    /// unevaluated sums, accumulated in double-double.
    pub fn residual_split(
        &self,
        lo: Option<&BlockSparse>,
        x: &DVector<f64>,
        b: &DVector<f64>,
        b_lo: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let parts: Vec<Vec<f64>> = (0..self.rows.len())
            .into_par_iter()
            .map(|i| {
                let off = self.dofmap.offsets[i];
                (0..self.dofmap.sizes[i])
                    .map(|r| {
                        let mut acc = TwoSum::new(b[off + r]);
                        if let Some(bl) = b_lo {
                            acc.add(bl[off + r]);
                        }
                        for m in std::iter::once(self).chain(lo) {
                            for (j, blk) in &m.rows[i] {
                                let xo = self.dofmap.offsets[*j];
                                for (c, &a) in blk.row(r).iter().enumerate() {
                                    acc.add_product(-a, x[xo + c]);
                                }
                            }
                        }
                        acc.value()
                    })
                    .collect()
            })
            .collect();
        DVector::from_iterator(self.dim(), parts.into_iter().flatten())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, m) in row {
                d.view_mut(
                    (self.dofmap.offsets[i], self.dofmap.offsets[*j]),
                    (m.nrows(), m.ncols()),
                )
                .copy_from(m);
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|(_, m)| m.abs().max())
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for (bi, row) in self.rows.iter().enumerate() {
            let mut sums = vec![0.0; self.dofmap.sizes[bi]];
            for (_, m) in row {
                for (i, s) in sums.iter_mut().enumerate() {
                    *s += m.row(i).iter().map(|v| v.abs()).sum::<f64>();
                }
            }
            best = sums.into_iter().fold(best, f64::max);
        }
        best
    }

    /// `max |A - A^T|` over stored entries.
    pub fn symmetry_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, m) in row {
                let e = match self.block(*j, i) {
                    Some(t) => (m - t.transpose()).abs().max(),
                    None => m.abs().max(),
                };
                err = err.max(e);
            }
        }
        err
    }

    pub fn diagonal_blocks(&self) -> Vec<DMatrix<f64>> {
        (0..self.dofmap.n_blocks())
            .map(|i| {
                self.block(i, i)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(self.dofmap.sizes[i], self.dofmap.sizes[i]))
            })
            .collect()
    }

    /// Compressed sparse rows `(row_ptr, col_idx, values)`, dropping exact zeros.
    pub fn to_csr(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for r in 0..self.dofmap.sizes[i] {
                for (j, m) in row {
                    for c in 0..m.ncols() {
                        let v = m[(r, c)];
                        if v != 0.0 {
                            idx.push(self.dofmap.offsets[*j] + c);
                            val.push(v);
                        }
                    }
                }
                ptr.push(idx.len());
            }
        }
        (ptr, idx, val)
    }

    /// Matrix Market coordinate format, general real.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        let (ptr, idx, val) = self.to_csr();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.dim(), self.dim(), val.len())?;
        for r in 0..self.dim() {
            for k in ptr[r]..ptr[r + 1] {
                writeln!(w, "{} {} {:e}", r + 1, idx[k] + 1, val[k])?;
            }
        }
        Ok(())
    }

    /// Block adjacency graph (off-diagonal blocks).
    pub fn block_graph(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|e| e.0).filter(|&j| j != i).collect())
            .collect()
    }

    /// `P A P^T` for the block permutation `new_of_old`.
    pub fn permuted(&self, new_of_old: &[usize]) -> Self {
        let n = self.dofmap.n_blocks();
        let mut old_of_new = vec![0; n];
        for (o, &nw) in new_of_old.iter().enumerate() {
            old_of_new[nw] = o;
        }
        let sizes = old_of_new.iter().map(|&o| self.dofmap.sizes[o]).collect();
        let mut out = BlockSparse::new(DofMap::from_sizes(sizes));
        for (i, row) in self.rows.iter().enumerate() {
            for (j, m) in row {
                out.add_block(new_of_old[i], new_of_old[*j], m);
            }
        }
        out
    }
}

/// Minimum-degree ordering of a graph by explicit elimination.
pub fn minimum_degree_order(graph: &[Vec<usize>]) -> Vec<usize> {
    let n = graph.len();
    let mut adj: Vec<BTreeSet<usize>> = graph
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut heap: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = heap.pop_first() {
        alive[v] = false;
        order.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| alive[u]).collect();
        for &u in &nbrs {
            heap.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (a, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[a + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            heap.insert((adj[u].len(), u));
        }
        adj[v].clear();
    }
    order
}

/// `A = L L^T` by blocks, after a fill-reducing symmetric permutation.
#[derive(Clone, Debug)]
pub struct BlockCholesky {
    /// Permuted position of every original block.
    new_of_old: Vec<usize>,
    dofmap: DofMap,
    original: DofMap,
    /// Column `k`: the diagonal factor then `(row, L_rk)` with `row > k`.
    diag: Vec<DMatrix<f64>>,
    below: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl BlockCholesky {
    pub fn factor(a: &BlockSparse) -> Result<Self> {
        let order = minimum_degree_order(&a.block_graph());
        let n = order.len();
        let mut new_of_old = vec![0; n];
        for (k, &o) in order.iter().enumerate() {
            new_of_old[o] = k;
        }
        let pa = a.permuted(&new_of_old);
        let dofmap = pa.dofmap.clone();

        // lower triangle by columns, in a sorted map so updates are ordered
        let mut cols: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); n];
        for (i, row) in pa.rows.iter().enumerate() {
            for (j, m) in row {
                if i >= *j {
                    cols[*j].insert(i, m.clone());
                }
            }
        }
        let mut diag = Vec::with_capacity(n);
        let mut below = Vec::with_capacity(n);
        for k in 0..n {
            let mut col = std::mem::take(&mut cols[k]);
            let akk = col
                .remove(&k)
                .unwrap_or_else(|| DMatrix::zeros(dofmap.sizes[k], dofmap.sizes[k]));
            let chol = akk
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { block: order[k] })?;
            let lkk = chol.l();
            // L_ik = A_ik L_kk^{-T}
            let lk: Vec<(usize, DMatrix<f64>)> = col
                .into_iter()
                .map(|(i, aik)| {
                    let t = lkk
                        .solve_lower_triangular(&aik.transpose())
                        .expect("nonsingular diagonal factor");
                    (i, t.transpose())
                })
                .collect();
            // Schur complement update of the remaining lower triangle
            let updates: Vec<(usize, usize, DMatrix<f64>)> = lk
                .par_iter()
                .enumerate()
                .flat_map_iter(|(a, (i, lik))| {
                    lk[..=a].iter().map(move |(j, ljk)| (*i, *j, lik * ljk.transpose()))
                })
                .collect();
            for (i, j, u) in updates {
                match cols[j].get_mut(&i) {
                    Some(m) => *m -= u,
                    None => {
                        cols[j].insert(i, -u);
                    }
                }
            }
            diag.push(lkk);
            below.push(lk);
        }
        Ok(BlockCholesky {
            new_of_old,
            dofmap,
            original: a.dofmap.clone(),
            diag,
            below,
        })
    }

    pub fn dim(&self) -> usize {
        self.dofmap.total
    }

    fn to_permuted(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (o, &k) in self.new_of_old.iter().enumerate() {
            y.rows_mut(self.dofmap.offsets[k], self.dofmap.sizes[k])
                .copy_from(&x.rows(self.original.offsets[o], self.original.sizes[o]));
        }
        y
    }

    fn from_permuted(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(y.len());
        for (o, &k) in self.new_of_old.iter().enumerate() {
            x.rows_mut(self.original.offsets[o], self.original.sizes[o])
                .copy_from(&y.rows(self.dofmap.offsets[k], self.dofmap.sizes[k]));
        }
        x
    }

    fn forward(&self, y: &mut DVector<f64>) {
        for k in 0..self.diag.len() {
            let r = self.dofmap.range(k);
            let yk = self.diag[k]
                .solve_lower_triangular(&y.rows(r.start, r.len()).into_owned())
                .expect("nonsingular");
            y.rows_mut(r.start, r.len()).copy_from(&yk);
            for (i, lik) in &self.below[k] {
                let ri = self.dofmap.range(*i);
                let mut yi = y.rows_mut(ri.start, ri.len());
                yi.gemv(-1.0, lik, &yk, 1.0);
            }
        }
    }

    fn backward(&self, y: &mut DVector<f64>) {
        for k in (0..self.diag.len()).rev() {
            let r = self.dofmap.range(k);
            let mut rhs = y.rows(r.start, r.len()).into_owned();
            for (i, lik) in &self.below[k] {
                let ri = self.dofmap.range(*i);
                rhs.gemv_tr(-1.0, lik, &y.rows(ri.start, ri.len()), 1.0);
            }
            let yk = self.diag[k]
                .tr_solve_lower_triangular(&rhs)
                .expect("nonsingular");
            y.rows_mut(r.start, r.len()).copy_from(&yk);
        }
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = self.to_permuted(b);
        self.forward(&mut y);
        self.backward(&mut y);
        self.from_permuted(&y)
    }

    /// `L^{-1} P b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = self.to_permuted(b);
        self.forward(&mut y);
        y
    }

    /// `P^T L^{-T} y`.
    pub fn solve_upper(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut y = y.clone();
        self.backward(&mut y);
        self.from_permuted(&y)
    }

    /// Number of stored off-diagonal factor blocks.
    pub fn fill_blocks(&self) -> usize {
        self.below.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Block tridiagonal-plus-corner SPD matrix with random blocks.
    pub(crate) fn random_spd(nb: usize, seed: u64) -> BlockSparse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = (0..nb).map(|_| rng.random_range(1..5)).collect();
        let dm = DofMap::from_sizes(sizes.clone());
        let mut a = BlockSparse::new(dm);
        let pairs: Vec<(usize, usize)> = (0..nb)
            .flat_map(|i| [(i, (i + 1) % nb), (i, (i + 3) % nb)])
            .filter(|(i, j)| i != j)
            .collect();
        for (i, j) in pairs {
            let m = DMatrix::from_fn(sizes[i], sizes[j], |_, _| rng.random_range(-1.0..1.0));
            a.add_block(i, j, &m);
            a.add_block(j, i, &m.transpose());
        }
        for i in 0..nb {
            let rowsum: f64 = a.rows[i].iter().map(|(_, m)| m.abs().sum()).sum();
            let d = DMatrix::identity(sizes[i], sizes[i]) * (rowsum + 1.0);
            a.add_block(i, i, &d);
        }
        a
    }

    #[test]
    fn block_cholesky_matches_dense() {
        for seed in 0..5 {
            let a = random_spd(30, seed);
            let dense = a.to_dense();
            assert!(a.symmetry_error() == 0.0);
            let f = BlockCholesky::factor(&a).unwrap();
            let b = DVector::from_fn(a.dim(), |i, _| (i as f64).sin());
            let x = f.solve(&b);
            let xd = dense.clone().cholesky().unwrap().solve(&b);
            assert!((x - &xd).norm() < 1e-12 * xd.norm());
            // split solve: |L^{-1} P b|^2 = b^T A^{-1} b
            let y = f.solve_lower(&b);
            assert!((y.norm_squared() - b.dot(&xd)).abs() < 1e-10 * b.dot(&xd).abs());
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut a = random_spd(6, 1);
        let s = a.dofmap.sizes[2];
        a.add_block(2, 2, &(DMatrix::identity(s, s) * -1e6));
        assert!(matches!(BlockCholesky::factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn matvec_and_csr_agree_with_dense() {
        let a = random_spd(12, 7);
        let x = DVector::from_fn(a.dim(), |i, _| 1.0 + i as f64);
        let d = a.to_dense();
        assert!((a.matvec(&x) - &d * &x).norm() < 1e-12);
        let (ptr, idx, val) = a.to_csr();
        assert_eq!(ptr.len(), a.dim() + 1);
        for r in 0..a.dim() {
            for k in ptr[r]..ptr[r + 1] {
                assert_eq!(d[(r, idx[k])], val[k]);
            }
        }
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        assert_eq!(text.lines().count(), 2 + val.len());
    }

    #[test]
    fn minimum_degree_is_a_permutation() {
        let g: Vec<Vec<usize>> = (0..20).map(|i| vec![(i + 1) % 20, (i + 19) % 20]).collect();
        let mut o = minimum_degree_order(&g);
        o.sort_unstable();
        assert_eq!(o, (0..20).collect::<Vec<_>>());
    }
}
