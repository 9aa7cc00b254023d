//! Numerical checks of the trace and inverse inequalities behind the
//! penalty choice. Every extremal ratio comes from a generalized
//! eigenvalue problem on a pair of Gram matrices, which is the exact
//! maximizer over the polynomial space; random sampling is kept as a
//! lower-bound cross-check.

use crate::basis::{build_basis_any, harmonic_subspace, weighted_gram, ElementBasis};
use crate::error::{Error, Result};
use crate::geometry::{triangle_area, Point};
use crate::mesh::{cell_shape_constant, Cell, PolyMesh};
use crate::quadrature::{cell_rule, face_rule, triangle_quadrature};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Relative tolerance on `observed <= bound`.
pub const BOUND_RTOL: f64 = 1e-8;

/// Space dimension.
const D: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    SimplexTrace,
    PolytopicTrace,
    HarmonicH1,
}

/// Result of one inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityWitness {
    pub inequality: Inequality,
    pub degree: usize,
    /// Cell index, or triangle index in a random suite.
    pub subject: usize,
    pub max_ratio_observed: f64,
    pub bound: f64,
    /// Maximizer, as coefficients in the basis of the check (orthonormal
    /// for the trace checks, the harmonic basis for the H1 check).
    pub argmax: Vec<f64>,
    /// Random polynomials tried in addition to the eigen-solve.
    pub sample_count: usize,
}

impl InequalityWitness {
    pub fn holds(&self) -> bool {
        self.max_ratio_observed <= self.bound * (1.0 + BOUND_RTOL)
    }

    /// `bound / observed - 1`; infinite when the ratio vanishes.
    pub fn slack(&self) -> f64 {
        if self.max_ratio_observed > 0.0 {
            self.bound / self.max_ratio_observed - 1.0
        } else {
            f64::INFINITY
        }
    }
}

/// Largest eigenvalue of `A x = λ M x` and its eigenvector.
fn max_generalized(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    let l = m.clone().cholesky()?.unpack();
    let linv = l.try_inverse()?;
    let s = &linv * a * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let (i, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))?;
    let x = linv.transpose() * eig.eigenvectors.column(i);
    Some((lam.max(0.0), x))
}

fn rayleigh(a: &DMatrix<f64>, m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x)) / x.dot(&(m * x))
}

/// Random-coefficient lower bound for the extremal ratio.
fn sample_max(a: &DMatrix<f64>, m: &DMatrix<f64>, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = DVector::from_fn(a.nrows(), |_, _| rng.random_range(-1.0..1.0));
            rayleigh(a, m, &x)
        })
        .fold(0.0, f64::max)
}

fn extremal(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let (lam, x) = max_generalized(a, m).ok_or(Error::SingularMass { cell: 0, degree: 0 })?;
    let sampled = sample_max(a, m, samples, seed);
    // sampling never beats the eigen-solve beyond rounding
    debug_assert!(sampled <= lam * (1.0 + 1e-8) + 1e-300);
    Ok((lam.max(sampled), x.iter().copied().collect()))
}

fn reference_triangle() -> &'static (Cell, [Point; 3]) {
    static REF: OnceLock<(Cell, [Point; 3])> = OnceLock::new();
    REF.get_or_init(|| {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let mesh = PolyMesh::from_cells(v.clone(), vec![vec![0, 1, 2]]).expect("reference triangle");
        (mesh.cell(0).clone(), [v[0], v[1], v[2]])
    })
}

/// Orthonormal basis of `P_p` on the reference triangle, evaluated at
/// physical points through the inverse affine map of `t`. Polynomial
/// spaces are affine invariant, so this spans `P_p(t)` with a Gram matrix
/// that stays well conditioned on slivers.
fn affine_basis(t: &[Point; 3], p: usize) -> Result<impl Fn(&[Point]) -> DMatrix<f64>> {
    let (cell, _) = reference_triangle();
    let rq = cell_rule(cell, 2 * p + 2);
    let basis: ElementBasis = build_basis_any(0, cell, p, true, &rq)?;
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let jac = nalgebra::Matrix2::new(e1.x, e2.x, e1.y, e2.y);
    let inv = jac.try_inverse().ok_or(Error::InvalidMesh("degenerate triangle".into()))?;
    let origin = t[0];
    Ok(move |pts: &[Point]| {
        let mapped: Vec<Point> = pts.iter().map(|x| Point::from(inv * (x - origin))).collect();
        basis.eval_tables(&mapped).val
    })
}

/// `‖v‖²_F / ‖v‖²_T <= (p+1)(p+d)/d · |F|/|T|` over `v ∈ P_p(T)`, with `F`
/// the edge from `t[e]` to `t[(e+1) % 3]`.
pub fn check_simplex_trace(t: &[Point; 3], e: usize, p: usize, n_samples: usize) -> Result<InequalityWitness> {
    let area = triangle_area(t);
    if area <= 0.0 || e > 2 {
        return Err(Error::InvalidMesh(format!("edge {e} of a triangle of area {area}")));
    }
    let (a, b) = (t[e], t[(e + 1) % 3]);
    let len = (b - a).norm();
    let eval = affine_basis(t, p)?;
    let tq = triangle_quadrature(t, 2 * p);
    let fq = face_rule(&a, &b, 2 * p);
    let m = weighted_gram(&eval(&tq.points), &tq.weights);
    let f = weighted_gram(&eval(&fq.points), &fq.weights);
    let (ratio, argmax) = extremal(&f, &m, n_samples, (p * 3 + e) as u64)?;
    let pf = p as f64;
    Ok(InequalityWitness {
        inequality: Inequality::SimplexTrace,
        degree: p,
        subject: 0,
        max_ratio_observed: ratio,
        bound: (pf + 1.0) * (pf + D) / D * len / area,
        argmax,
        sample_count: n_samples,
    })
}

fn orthonormal_on(k: usize, cell: &Cell, p: usize) -> Result<ElementBasis> {
    build_basis_any(k, cell, p, true, &cell_rule(cell, 2 * p + 2))
}

/// `‖v‖²_{∂κ} / ‖v‖²_κ <= C_s (p+1)(p+d) / h_κ` over `v ∈ P_p(κ)`.
pub fn check_polytopic_trace(mesh: &PolyMesh, k: usize, p: usize, c_s: f64) -> Result<InequalityWitness> {
    let cell = mesh.cell(k);
    let basis = orthonormal_on(k, cell, p)?;
    let q = cell_rule(cell, 2 * p);
    let m = weighted_gram(&basis.eval_tables(&q.points).val, &q.weights);
    let mut f = DMatrix::zeros(basis.dim(), basis.dim());
    for &fi in &cell.faces {
        let (a, b) = mesh.face_endpoints(fi);
        let fq = face_rule(&a, &b, 2 * p);
        f += weighted_gram(&basis.eval_tables(&fq.points).val, &fq.weights);
    }
    let (ratio, argmax) = extremal(&f, &m, 0, 0)?;
    let pf = p as f64;
    Ok(InequalityWitness {
        inequality: Inequality::PolytopicTrace,
        degree: p,
        subject: k,
        max_ratio_observed: ratio,
        bound: c_s * (pf + 1.0) * (pf + D) / cell.diameter,
        argmax,
        sample_count: 0,
    })
}

fn stiffness_and_mass(basis: &ElementBasis, cell: &Cell, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = cell_rule(cell, 2 * p);
    let t = basis.eval_tables(&q.points);
    let s = weighted_gram(&t.dx, &q.weights) + weighted_gram(&t.dy, &q.weights);
    (s, weighted_gram(&t.val, &q.weights))
}

/// `‖∇v‖²_κ / ‖v‖²_κ <= (C_s (p+1)(p+d) / h_κ)²` over harmonic `v` of
/// degree at most `p`.
pub fn check_harmonic_h1(mesh: &PolyMesh, k: usize, p: usize, c_s: f64) -> Result<InequalityWitness> {
    if p > 6 {
        return Err(Error::Config(format!("harmonic check supports p <= 6, got {p}")));
    }
    let cell = mesh.cell(k);
    let basis = harmonic_subspace(p).on_cell(k, cell);
    let (s, m) = stiffness_and_mass(&basis, cell, p);
    let (ratio, argmax) = extremal(&s, &m, 0, 0)?;
    let pf = p as f64;
    let root = c_s * (pf + 1.0) * (pf + D) / cell.diameter;
    Ok(InequalityWitness {
        inequality: Inequality::HarmonicH1,
        degree: p,
        subject: k,
        max_ratio_observed: ratio,
        bound: root * root,
        argmax,
        sample_count: 0,
    })
}

/// The same quotient over all of `P_p`. The inverse inequality is only
/// claimed on harmonic polynomials; this is reported, never asserted.
pub fn full_space_h1_ratio(mesh: &PolyMesh, k: usize, p: usize) -> Result<f64> {
    let cell = mesh.cell(k);
    let basis = orthonormal_on(k, cell, p)?;
    let (s, m) = stiffness_and_mass(&basis, cell, p);
    Ok(extremal(&s, &m, 0, 0)?.0)
}

/// Harmonic ratio of cell `k` on copies of `mesh` dilated by each factor.
pub fn harmonic_dilation(mesh: &PolyMesh, k: usize, p: usize, factors: &[f64]) -> Result<Vec<f64>> {
    factors
        .iter()
        .map(|&s| {
            let scaled = mesh.scaled(s)?;
            let c_s = cell_shape_constant(&scaled, k);
            Ok(check_harmonic_h1(&scaled, k, p, c_s)?.max_ratio_observed)
        })
        .collect()
}

/// Summary of one suite, as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub inequality: Inequality,
    pub checks: usize,
    /// Smallest `bound / observed - 1` over all checks.
    pub min_slack: f64,
    /// The check with the smallest slack.
    pub tightest: Option<InequalityWitness>,
    pub violations: Vec<InequalityWitness>,
}

impl SuiteReport {
    pub fn from_witnesses(suite: impl Into<String>, inequality: Inequality, w: Vec<InequalityWitness>) -> Self {
        let tightest = w.iter().min_by(|a, b| a.slack().total_cmp(&b.slack())).cloned();
        SuiteReport {
            suite: suite.into(),
            inequality,
            checks: w.len(),
            min_slack: tightest.as_ref().map_or(f64::INFINITY, |t| t.slack()),
            tightest,
            violations: w.into_iter().filter(|x| !x.holds()).collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `n` triangles with vertices uniform in the unit square, degenerate
/// ones (area below `1e-6`) redrawn. Slivers are kept.
pub fn random_triangles(n: usize, seed: u64) -> Vec<[Point; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pt = || Point::new(rng.random(), rng.random());
        let t = [pt(), pt(), pt()];
        if triangle_area(&t) > 1e-6 {
            out.push(t);
        }
    }
    out
}

/// Simplex trace check on every edge of every triangle, for `p = 0..=p_max`.
pub fn simplex_suite(triangles: &[[Point; 3]], p_max: usize, n_samples: usize) -> Result<SuiteReport> {
    let w = triangles
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut v = Vec::with_capacity(3 * (p_max + 1));
            for p in 0..=p_max {
                for e in 0..3 {
                    let mut x = check_simplex_trace(t, e, p, n_samples)?;
                    x.subject = i;
                    v.push(x);
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_witnesses(
        "simplex-trace",
        Inequality::SimplexTrace,
        w.into_iter().flatten().collect(),
    ))
}

/// Polytopic trace and harmonic H1 checks on every cell of `mesh` for each
/// degree, with the cell's own shape constant.
pub fn mesh_suites(label: &str, mesh: &PolyMesh, degrees: &[usize]) -> Result<[SuiteReport; 2]> {
    let jobs: Vec<(usize, usize)> = (0..mesh.n_cells())
        .flat_map(|k| degrees.iter().map(move |&p| (k, p)))
        .collect();
    let pairs = jobs
        .par_iter()
        .map(|&(k, p)| {
            let c_s = cell_shape_constant(mesh, k);
            Ok((check_polytopic_trace(mesh, k, p, c_s)?, check_harmonic_h1(mesh, k, p, c_s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (trace, h1): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok([
        SuiteReport::from_witnesses(format!("{label}/polytopic-trace"), Inequality::PolytopicTrace, trace),
        SuiteReport::from_witnesses(format!("{label}/harmonic-h1"), Inequality::HarmonicH1, h1),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::unit_square_mesh;

    fn unit_right() -> [Point; 3] {
        [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]
    }

    #[test]
    fn constants_attain_the_simplex_bound() {
        let t = unit_right();
        let w = check_simplex_trace(&t, 0, 0, 10).unwrap();
        // |F| / |T| = 1 / 0.5
        assert!((w.max_ratio_observed - 2.0).abs() < 1e-13);
        assert!((w.bound - 2.0).abs() < 1e-15);
        assert!(w.holds());
    }

    #[test]
    fn hypotenuse_quadratics() {
        let t = unit_right();
        let w = check_simplex_trace(&t, 1, 2, 200).unwrap();
        let len = 2f64.sqrt();
        assert!((w.bound - 6.0 * len / 0.5).abs() < 1e-12);
        assert!(w.holds(), "{} > {}", w.max_ratio_observed, w.bound);
        // the constant is sharp on simplices
        assert!(w.slack() < 1e-9);
    }

    #[test]
    fn sliver_keeps_the_bound() {
        let t = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 1e-4)];
        for p in [1, 4, 6] {
            for e in 0..3 {
                let w = check_simplex_trace(&t, e, p, 50).unwrap();
                assert!(w.holds(), "p={p} e={e}: {} > {}", w.max_ratio_observed, w.bound);
                assert!(w.bound > 1e3);
            }
        }
    }

    #[test]
    fn square_trace_and_constant_case() {
        let m = unit_square_mesh();
        let c_s = cell_shape_constant(&m, 0);
        let w0 = check_polytopic_trace(&m, 0, 0, c_s).unwrap();
        // constants: perimeter / area
        assert!((w0.max_ratio_observed - 4.0).abs() < 1e-12);
        for p in 0..=6 {
            assert!(check_polytopic_trace(&m, 0, p, c_s).unwrap().holds());
        }
    }

    #[test]
    fn harmonic_linear_on_square() {
        let m = unit_square_mesh();
        let c_s = cell_shape_constant(&m, 0);
        let w = check_harmonic_h1(&m, 0, 1, c_s).unwrap();
        // x - 1/2 and y - 1/2 give |∇v|² / |v|² = 1 / (1/12) = 12; constants give 0
        assert!((w.max_ratio_observed - 12.0).abs() < 1e-10);
        let w0 = check_harmonic_h1(&m, 0, 0, c_s).unwrap();
        assert_eq!(w0.max_ratio_observed, 0.0);
        assert!(w.holds() && w0.holds());
    }

    #[test]
    fn full_space_exceeds_harmonic() {
        let m = unit_square_mesh();
        for p in 2..=4 {
            let h = check_harmonic_h1(&m, 0, p, 1.0).unwrap().max_ratio_observed;
            assert!(full_space_h1_ratio(&m, 0, p).unwrap() >= h * (1.0 - 1e-10));
        }
    }

    #[test]
    fn dilation_scales_as_inverse_square() {
        let m = unit_square_mesh();
        let r = harmonic_dilation(&m, 0, 3, &[1.0, 0.5, 0.25]).unwrap();
        for w in r.windows(2) {
            let slope = (w[1] / w[0]).ln() / 0.5f64.ln();
            assert!((slope + 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_suite_holds() {
        let tris = random_triangles(50, 3);
        let r = simplex_suite(&tris, 4, 5).unwrap();
        assert_eq!(r.checks, 50 * 3 * 5);
        assert!(r.passed(), "{:?}", r.violations.first());
        assert!(r.min_slack > -BOUND_RTOL);
    }
}
