//! Compensated accumulation of face blocks.
//!
//! Face penalties grow like `p^6 / h^3`. Summing penalty products in plain
//! double precision leaves rounding errors of size `eps * sigma` in the
//! matrix, which show up as an error floor in the discrete solution. Block
//! entries are therefore accumulated from exact (FMA) products into a
//! `hi + lo` pair, and the matrix is kept as an unevaluated sum of two
//! double-precision matrices.

use crate::sparse::{BlockSparse, DofMap};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// `hi + lo` with exact product and sum error terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Compensated {
    pub hi: f64,
    pub lo: f64,
}

impl Compensated {
    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        Compensated { hi, lo }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn product(a: f64, b: f64) -> Self {
        let p = a * b;
        Compensated { hi: p, lo: a.mul_add(b, -p) }
    }

    /// `self * b`, dropping only the `lo * b` rounding.
    #[inline]
    pub fn scale(self, b: f64) -> Self {
        let p = self.hi * b;
        Compensated {
            hi: p,
            lo: self.hi.mul_add(b, -p) + self.lo * b,
        }
    }

    #[inline]
    pub fn add(&mut self, x: Compensated) {
        let s = self.hi + x.hi;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x.hi - bp);
        self.hi = s;
        self.lo += err + x.lo;
    }

    /// Renormalized so that `hi` is the rounded value.
    #[inline]
    pub fn normalized(self) -> Self {
        let s = self.hi + self.lo;
        Compensated {
            hi: s,
            lo: self.lo - (s - self.hi),
        }
    }
}

/// A dense block as `hi + lo`, row-major.
#[derive(Clone, Debug)]
pub struct CompBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Compensated>,
}

impl CompBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CompBlock {
            rows,
            cols,
            data: vec![Compensated::default(); rows * cols],
        }
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j].hi = m[(i, j)];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &CompBlock) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.add(*b);
        }
    }

    /// Rounded value and rounding remainder.
    pub fn split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let norm: Vec<Compensated> = self.data.iter().map(|c| c.normalized()).collect();
        let at = |i: usize, j: usize| norm[i * self.cols + j];
        (
            DMatrix::from_fn(self.rows, self.cols, |i, j| at(i, j).hi),
            DMatrix::from_fn(self.rows, self.cols, |i, j| at(i, j).lo),
        )
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            let c = self.data[i * self.cols + j];
            c.hi + c.lo
        })
    }
}

/// One term `c * sum_q w_q a[q][i] b[q][j]` of a face block.
pub struct CrossTerm<'a> {
    pub coef: f64,
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
}

/// Adds every term to `out`. The factor `coef * w_q` is rounded once per
/// point, which only perturbs the quadrature weight; all products with
/// table entries are exact.
pub fn accumulate_cross(out: &mut CompBlock, w: &[f64], terms: &[CrossTerm]) {
    let (ni, nj) = (out.rows, out.cols);
    let mut brow = vec![0.0; nj];
    for (q, &wq) in w.iter().enumerate() {
        for t in terms {
            debug_assert_eq!((t.a.ncols(), t.b.ncols()), (ni, nj));
            let cw = t.coef * wq;
            if cw == 0.0 {
                continue;
            }
            for (j, b) in brow.iter_mut().enumerate() {
                *b = t.b[(q, j)];
            }
            for i in 0..ni {
                let left = Compensated::product(t.a[(q, i)], cw);
                if left.hi == 0.0 {
                    continue;
                }
                let row = &mut out.data[i * nj..(i + 1) * nj];
                for (o, &b) in row.iter_mut().zip(&brow) {
                    o.add(left.scale(b));
                }
            }
        }
    }
}

/// `out[i] += sum_q w_q g_q t[q][i]`.
pub fn accumulate_weighted(out: &mut [Compensated], w: &[f64], g: &[f64], t: &DMatrix<f64>) {
    for (q, (&wq, &gq)) in w.iter().zip(g).enumerate() {
        let f = Compensated::product(wq, gq);
        for (i, o) in out.iter_mut().enumerate() {
            o.add(f.scale(t[(q, i)]));
        }
    }
}

/// A matrix kept as `hi + lo`.
#[derive(Clone, Debug)]
pub struct SplitMatrix {
    pub hi: BlockSparse,
    pub lo: BlockSparse,
}

impl SplitMatrix {
    pub fn dim(&self) -> usize {
        self.hi.dim()
    }
}

/// Collects compensated blocks and rounds them once at the end.
pub struct BlockAccumulator {
    dofmap: DofMap,
    blocks: BTreeMap<(usize, usize), CompBlock>,
}

impl BlockAccumulator {
    pub fn new(dofmap: DofMap) -> Self {
        BlockAccumulator {
            dofmap,
            blocks: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, m: &CompBlock) {
        match self.blocks.get_mut(&(i, j)) {
            Some(b) => b.add_assign(m),
            None => {
                self.blocks.insert((i, j), m.clone());
            }
        }
    }

    pub fn finish(self) -> SplitMatrix {
        let mut hi = BlockSparse::new(self.dofmap.clone());
        let mut lo = BlockSparse::new(self.dofmap);
        for ((i, j), m) in self.blocks {
            let (h, l) = m.split();
            hi.add_block(i, j, &h);
            lo.add_block(i, j, &l);
        }
        SplitMatrix { hi, lo }
    }
}

/// Rounded value and remainder of a compensated vector.
pub fn split_vector(v: &[Compensated]) -> (DVector<f64>, DVector<f64>) {
    let n: Vec<Compensated> = v.iter().map(|c| c.normalized()).collect();
    (
        DVector::from_iterator(n.len(), n.iter().map(|x| x.hi)),
        DVector::from_iterator(n.len(), n.iter().map(|x| x.lo)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_keep_the_low_part() {
        // (1 + 2^-30)² = 1 + 2^-29 + 2^-60: the last term is below eps
        let e = 2f64.powi(-30);
        let a = DMatrix::from_element(1, 1, 1.0 + e);
        let mut out = CompBlock::zeros(1, 1);
        accumulate_cross(&mut out, &[1.0], &[CrossTerm { coef: 1.0, a: &a, b: &a }]);
        let (h, l) = out.split();
        assert_eq!(h[(0, 0)], 1.0 + 2.0 * e);
        assert_eq!(l[(0, 0)], e * e);
    }

    #[test]
    fn cancellation_is_exact() {
        // 1e16 + 1 - 1e16 loses the 1 in plain double arithmetic
        let mut c = Compensated::default();
        for x in [1e16, 1.0, -1e16] {
            c.add(Compensated::new(x, 0.0));
        }
        assert_eq!(c.normalized().hi, 1.0);
    }

    #[test]
    fn agrees_with_twofloat() {
        use twofloat::TwoFloat as Dd;
        let a = DMatrix::from_fn(3, 2, |q, i| 1.0 / (1.0 + q as f64 + 3.0 * i as f64));
        let b = DMatrix::from_fn(3, 2, |q, j| (q as f64 + 0.5).sqrt() - j as f64);
        let w = [0.3, 0.1, 0.7];
        let mut out = CompBlock::zeros(2, 2);
        accumulate_cross(&mut out, &w, &[CrossTerm { coef: 3.0, a: &a, b: &b }]);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = Dd::default();
                for q in 0..3 {
                    s += Dd::from(3.0 * w[q]) * a[(q, i)] * b[(q, j)];
                }
                let c = out.data[i * 2 + j];
                let got = Dd::new_add(c.hi, c.lo);
                assert!(f64::from(got - s).abs() < 1e-30 * f64::from(s).abs().max(1.0));
            }
        }
    }
}
