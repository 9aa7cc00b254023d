//! Physical-frame polynomial bases on polygonal cells.
//!
//! Functions are linear combinations of scaled monomials
//! `((x - cx)/sx)^a ((y - cy)/sy)^b`, `a + b <= p`, where `(cx, cy)` and
//! `(sx, sy)` are the center and half-widths of the cell's bounding box.

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};
use crate::mesh::Cell;
use crate::quadrature::QuadRule;
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;

pub fn dim_p(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Exponents `(a, b)` ordered by total degree, then by decreasing `a`.
pub fn monomial_exponents(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_p(p));
    for deg in 0..=p {
        for b in 0..=deg {
            out.push((deg - b, b));
        }
    }
    out
}

/// Orthonormalization is switched on by default from degree 4 upward.
pub fn default_orthonormalize(p: usize) -> bool {
    p >= 4
}

/// Values and derivatives of a set of functions at a set of points;
/// row = point, column = function.
#[derive(Clone, Debug)]
pub struct Tables {
    pub val: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
    pub lap: DMatrix<f64>,
    /// Gradient of the Laplacian.
    pub glap_x: DMatrix<f64>,
    pub glap_y: DMatrix<f64>,
}

impl Tables {
    pub fn n_points(&self) -> usize {
        self.val.nrows()
    }

    /// Normal derivative `grad . n` at every point for a fixed normal.
    pub fn normal_derivative(&self, n: &Vector) -> DMatrix<f64> {
        &self.dx * n.x + &self.dy * n.y
    }

    /// `grad(lap) . n` at every point.
    pub fn normal_glap(&self, n: &Vector) -> DMatrix<f64> {
        &self.glap_x * n.x + &self.glap_y * n.y
    }
}

#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub cell: usize,
    pub degree: usize,
    pub center: Point,
    pub scale: Vector,
    /// Row `i` holds the monomial coefficients of function `i`.
    pub coeffs: DMatrix<f64>,
    pub orthonormal: bool,
}

impl ElementBasis {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_monomials(&self) -> usize {
        dim_p(self.degree)
    }

    /// Raw monomial tables at the given points.
    pub fn monomial_tables(&self, points: &[Point]) -> Tables {
        let exps = monomial_exponents(self.degree);
        let (n, m) = (points.len(), exps.len());
        let mut t = Tables {
            val: DMatrix::zeros(n, m),
            dx: DMatrix::zeros(n, m),
            dy: DMatrix::zeros(n, m),
            lap: DMatrix::zeros(n, m),
            glap_x: DMatrix::zeros(n, m),
            glap_y: DMatrix::zeros(n, m),
        };
        let (sx, sy) = (self.scale.x, self.scale.y);
        let p = self.degree;
        let mut px = vec![0.0; p + 1];
        let mut py = vec![0.0; p + 1];
        for (q, pt) in points.iter().enumerate() {
            let xi = (pt.x - self.center.x) / sx;
            let eta = (pt.y - self.center.y) / sy;
            px[0] = 1.0;
            py[0] = 1.0;
            for k in 1..=p {
                px[k] = px[k - 1] * xi;
                py[k] = py[k - 1] * eta;
            }
            let pw = |v: &[f64], k: isize| if k < 0 { 0.0 } else { v[k as usize] };
            for (j, &(a, b)) in exps.iter().enumerate() {
                let (ai, bi) = (a as isize, b as isize);
                let (af, bf) = (a as f64, b as f64);
                t.val[(q, j)] = px[a] * py[b];
                t.dx[(q, j)] = af * pw(&px, ai - 1) * py[b] / sx;
                t.dy[(q, j)] = bf * px[a] * pw(&py, bi - 1) / sy;
                let xx = af * (af - 1.0) / (sx * sx);
                let yy = bf * (bf - 1.0) / (sy * sy);
                t.lap[(q, j)] = xx * pw(&px, ai - 2) * py[b] + yy * px[a] * pw(&py, bi - 2);
                t.glap_x[(q, j)] = xx * (af - 2.0) / sx * pw(&px, ai - 3) * py[b]
                    + yy * af / sx * pw(&px, ai - 1) * pw(&py, bi - 2);
                t.glap_y[(q, j)] = xx * bf / sy * pw(&px, ai - 2) * pw(&py, bi - 1)
                    + yy * (bf - 2.0) / sy * px[a] * pw(&py, bi - 3);
            }
        }
        t
    }

    /// Tables of the basis functions at the given points.
    pub fn eval_tables(&self, points: &[Point]) -> Tables {
        let m = self.monomial_tables(points);
        let ct = self.coeffs.transpose();
        Tables {
            val: &m.val * &ct,
            dx: &m.dx * &ct,
            dy: &m.dy * &ct,
            lap: &m.lap * &ct,
            glap_x: &m.glap_x * &ct,
            glap_y: &m.glap_y * &ct,
        }
    }

    /// Mass matrix under the given cell rule.
    pub fn mass(&self, quad: &QuadRule) -> DMatrix<f64> {
        weighted_gram(&self.eval_tables(&quad.points).val, &quad.weights)
    }

    /// Value of `sum_i c_i phi_i` at a point.
    pub fn eval(&self, c: &DVector<f64>, p: &Point) -> f64 {
        (self.eval_tables(std::slice::from_ref(p)).val * c)[0]
    }
}

/// `T^T W T` for a table `T` and diagonal weights `W`.
pub fn weighted_gram(t: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut tw = t.clone();
    for (mut row, &wi) in tw.row_iter_mut().zip(w) {
        row *= wi;
    }
    t.transpose() * tw
}

/// `A^T W B`.
pub fn weighted_cross(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut bw = b.clone();
    for (mut row, &wi) in bw.row_iter_mut().zip(w) {
        row *= wi;
    }
    a.transpose() * bw
}

fn frame(cell: &Cell) -> (Point, Vector) {
    let (lo, hi) = cell.bbox;
    (nalgebra::center(&lo, &hi), (hi - lo) * 0.5)
}

/// Basis of `P_p` on a cell. The method needs `p >= 2`.
pub fn build_basis(
    cell_id: usize,
    cell: &Cell,
    p: usize,
    orthonormalize: bool,
    quad: &QuadRule,
) -> Result<ElementBasis> {
    if p < 2 {
        return Err(Error::DegreeTooLow {
            cell: cell_id,
            degree: p,
        });
    }
    build_basis_any(cell_id, cell, p, orthonormalize, quad)
}

/// As [`build_basis`] without the lower degree limit; used for projections
/// and inequality checks.
pub fn build_basis_any(
    cell_id: usize,
    cell: &Cell,
    p: usize,
    orthonormalize: bool,
    quad: &QuadRule,
) -> Result<ElementBasis> {
    let (center, scale) = frame(cell);
    let mut b = ElementBasis {
        cell: cell_id,
        degree: p,
        center,
        scale,
        coeffs: DMatrix::identity(dim_p(p), dim_p(p)),
        orthonormal: false,
    };
    if orthonormalize {
        let g = weighted_gram(&b.monomial_tables(&quad.points).val, &quad.weights);
        b.coeffs = gram_schmidt(&g).ok_or(Error::SingularMass {
            cell: cell_id,
            degree: p,
        })?;
        b.orthonormal = true;
    }
    Ok(b)
}

/// Modified Gram-Schmidt (two passes) of the unit vectors in the inner
/// product `<u, v> = u^T G v`. Rows of the result are orthonormal.
pub fn gram_schmidt(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = g.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let scale = g.diagonal().max();
    for i in 0..n {
        let mut v = DVector::<f64>::zeros(n);
        v[i] = 1.0;
        let norm0 = (v.dot(&(g * &v))).sqrt();
        for _ in 0..2 {
            for j in 0..i {
                let qj = q.row(j).transpose();
                let r = qj.dot(&(g * &v));
                v -= qj * r;
            }
        }
        let nrm = v.dot(&(g * &v)).sqrt();
        if !(nrm > 1e-14 * norm0.max(scale.sqrt() * 1e-300)) {
            return None;
        }
        q.set_row(i, &(v / nrm).transpose());
    }
    Some(q)
}

/// Harmonic polynomials of degree at most `p`, as an exact basis of the
/// kernel of the Laplacian on monomials `x^a y^b`.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub degree: usize,
    /// Row `i`: rational monomial coefficients of member `i`, in
    /// [`monomial_exponents`] order.
    pub coeffs: Vec<Vec<Ratio<i128>>>,
}

impl HarmonicBasis {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Exact Laplacian of member `i` in the monomial basis of degree `p`.
    pub fn laplacian_exact(&self, i: usize) -> Vec<Ratio<i128>> {
        let exps = monomial_exponents(self.degree);
        let index = |a: usize, b: usize| exps.iter().position(|&e| e == (a, b));
        let mut out = vec![Ratio::from_integer(0); exps.len()];
        for (c, &(a, b)) in self.coeffs[i].iter().zip(&exps) {
            if a >= 2 {
                out[index(a - 2, b).unwrap()] += c * Ratio::from_integer((a * (a - 1)) as i128);
            }
            if b >= 2 {
                out[index(a, b - 2).unwrap()] += c * Ratio::from_integer((b * (b - 1)) as i128);
            }
        }
        out
    }

    /// Members as functions on a cell, in isotropically scaled coordinates
    /// so they stay harmonic.
    pub fn on_cell(&self, cell_id: usize, cell: &Cell) -> ElementBasis {
        let (center, half) = frame(cell);
        let s = half.x.max(half.y);
        let n = monomial_exponents(self.degree).len();
        let mut coeffs = DMatrix::zeros(self.dim(), n);
        for (i, row) in self.coeffs.iter().enumerate() {
            let v: Vec<f64> = row.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, x) in v.iter().enumerate() {
                coeffs[(i, j)] = x / nrm;
            }
        }
        ElementBasis {
            cell: cell_id,
            degree: self.degree,
            center,
            scale: Vector::new(s, s),
            coeffs,
            orthonormal: false,
        }
    }
}

/// Kernel of the Laplacian `P_p -> P_{p-2}` by exact row reduction.
pub fn harmonic_subspace(p: usize) -> HarmonicBasis {
    let exps = monomial_exponents(p);
    let n = exps.len();
    let rows = if p >= 2 { dim_p(p - 2) } else { 0 };
    let low = if p >= 2 { monomial_exponents(p - 2) } else { Vec::new() };
    let zero = Ratio::from_integer(0i128);
    let mut m = vec![vec![zero; n]; rows];
    for (j, &(a, b)) in exps.iter().enumerate() {
        if a >= 2 {
            let r = low.iter().position(|&e| e == (a - 2, b)).unwrap();
            m[r][j] += Ratio::from_integer((a * (a - 1)) as i128);
        }
        if b >= 2 {
            let r = low.iter().position(|&e| e == (a, b - 2)).unwrap();
            m[r][j] += Ratio::from_integer((b * (b - 1)) as i128);
        }
    }
    // reduced row echelon form
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        if r == rows {
            break;
        }
        let Some(piv) = (r..rows).find(|&i| m[i][c] != zero) else {
            continue;
        };
        m.swap(r, piv);
        let inv = Ratio::from_integer(1) / m[r][c];
        for x in m[r].iter_mut() {
            *x *= inv;
        }
        for i in 0..rows {
            if i != r && m[i][c] != zero {
                let f = m[i][c];
                for k in 0..n {
                    let v = m[r][k];
                    m[i][k] -= f * v;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let coeffs = free
        .iter()
        .map(|&fc| {
            let mut v = vec![zero; n];
            v[fc] = Ratio::from_integer(1);
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][fc];
            }
            v
        })
        .collect();
    HarmonicBasis { degree: p, coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::mesh::tests::unit_square_mesh;
    use crate::quadrature::cell_rule;

    fn raw(p: usize) -> ElementBasis {
        ElementBasis {
            cell: 0,
            degree: p,
            center: Point::origin(),
            scale: Vector::new(1.0, 1.0),
            coeffs: DMatrix::identity(dim_p(p), dim_p(p)),
            orthonormal: false,
        }
    }

    fn col(p: usize, a: usize, b: usize) -> usize {
        monomial_exponents(p).iter().position(|&e| e == (a, b)).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(dim_p(2), 6);
        assert_eq!(dim_p(5), 21);
        assert_eq!(monomial_exponents(2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn exact_derivatives_of_known_monomials() {
        let b = raw(4);
        let t = b.eval_tables(&[Point::new(1.0, 2.0)]);
        let c = col(4, 0, 0);
        assert_eq!((t.val[(0, c)], t.dx[(0, c)], t.lap[(0, c)], t.glap_x[(0, c)]), (1.0, 0.0, 0.0, 0.0));
        let c = col(4, 2, 0);
        assert_eq!((t.lap[(0, c)], t.glap_x[(0, c)], t.glap_y[(0, c)]), (2.0, 0.0, 0.0));
        // x^3 y: lap = 6xy, grad lap = (6y, 6x)
        let c = col(4, 3, 1);
        assert_eq!(t.lap[(0, c)], 12.0);
        assert_eq!((t.glap_x[(0, c)], t.glap_y[(0, c)]), (12.0, 6.0));
    }

    #[test]
    fn orthonormal_gram_is_identity() {
        let m = unit_square_mesh();
        let q = cell_rule(m.cell(0), 8);
        for p in [3, 5, 6] {
            let b = build_basis(0, m.cell(0), p, true, &q).unwrap();
            let g = b.mass(&q);
            let err = (g - DMatrix::identity(dim_p(p), dim_p(p))).abs().max();
            assert!(err < 1e-10, "p={p}: {err}");
        }
    }

    #[test]
    fn low_degree_is_rejected() {
        let m = unit_square_mesh();
        let q = cell_rule(m.cell(0), 4);
        assert!(matches!(
            build_basis(3, m.cell(0), 1, false, &q),
            Err(Error::DegreeTooLow { cell: 3, degree: 1 })
        ));
    }

    /// Rows of the reduced basis carry a unit entry on their own free
    /// column, so any member of the span is `sum_i t[free_i] row_i`.
    fn in_span(h: &HarmonicBasis, target: &[Ratio<i128>]) -> bool {
        let one = Ratio::from_integer(1);
        let mut combo = vec![Ratio::from_integer(0i128); target.len()];
        for (i, row) in h.coeffs.iter().enumerate() {
            let free = (0..target.len())
                .find(|&j| row[j] == one && h.coeffs.iter().enumerate().all(|(k, r)| k == i || *r[j].numer() == 0))
                .expect("reduced basis");
            for (c, r) in combo.iter_mut().zip(row) {
                *c += target[free] * r;
            }
        }
        combo == target
    }

    fn poly(p: usize, terms: &[(i128, usize, usize)]) -> Vec<Ratio<i128>> {
        let mut v = vec![Ratio::from_integer(0i128); dim_p(p)];
        for &(c, a, b) in terms {
            v[col(p, a, b)] += Ratio::from_integer(c);
        }
        v
    }

    #[test]
    fn harmonic_dimensions_and_members() {
        assert_eq!(harmonic_subspace(0).dim(), 1);
        assert_eq!(harmonic_subspace(1).dim(), 3);
        for p in 1..=8 {
            let h = harmonic_subspace(p);
            assert_eq!(h.dim(), 2 * p + 1);
            for i in 0..h.dim() {
                assert!(h.laplacian_exact(i).iter().all(|c| *c.numer() == 0));
            }
        }
        let h2 = harmonic_subspace(2);
        assert!(in_span(&h2, &poly(2, &[(1, 2, 0), (-1, 0, 2)])));
        assert!(in_span(&h2, &poly(2, &[(1, 1, 1)])));
        assert!(!in_span(&h2, &poly(2, &[(1, 2, 0), (1, 0, 2)])));
        let h3 = harmonic_subspace(3);
        assert!(in_span(&h3, &poly(3, &[(1, 3, 0), (-3, 1, 2)])));
        assert!(in_span(&h3, &poly(3, &[(3, 2, 1), (-1, 0, 3)])));
    }

    #[test]
    fn harmonic_members_on_a_cell_have_zero_laplacian() {
        let m = unit_square_mesh().scaled(3.0).unwrap();
        let h = harmonic_subspace(5).on_cell(0, m.cell(0));
        let pts = [Point::new(0.3, 2.1), Point::new(1.7, 0.2), Point::new(2.9, 2.9)];
        let t = h.eval_tables(&pts);
        let m2 = h.monomial_tables(&pts);
        let scale = m2.lap.abs().max();
        assert!(t.lap.abs().max() <= 1e-12 * scale);
    }
}
