//! Face-loop assembly of the interior-penalty form, the load functional and
//! the DG-norm Gram matrix.

use crate::basis::{build_basis, build_basis_any, default_orthonormalize, weighted_cross, weighted_gram, ElementBasis};
use crate::extended::{
    accumulate_cross, accumulate_weighted, split_vector, BlockAccumulator, CompBlock, Compensated, CrossTerm, SplitMatrix,
};
use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};
use crate::mesh::PolyMesh;
use crate::penalty::PenaltyField;
use crate::problems::ExactSolution;
use crate::quadrature::{cell_rule, face_rule, QuadRule};
use crate::solve::{solve_split, SolveOptions, SolveReport};
use crate::sparse::{BlockSparse, DofMap};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Discontinuous piecewise-polynomial space on a mesh.
#[derive(Clone, Debug)]
pub struct DgSpace<'m> {
    pub mesh: &'m PolyMesh,
    pub degrees: Vec<usize>,
    pub bases: Vec<ElementBasis>,
    pub dofmap: DofMap,
}

/// Quadrature degree used for every volume and face integral of degree-`p`
/// functions.
pub fn quad_degree(p: usize) -> usize {
    2 * p + 2
}

impl<'m> DgSpace<'m> {
    /// Uniform degree `p`; orthonormalization follows the default rule.
    pub fn uniform(mesh: &'m PolyMesh, p: usize) -> Result<Self> {
        Self::new(mesh, vec![p; mesh.n_cells()], None)
    }

    pub fn new(mesh: &'m PolyMesh, degrees: Vec<usize>, orthonormalize: Option<bool>) -> Result<Self> {
        if degrees.len() != mesh.n_cells() {
            return Err(Error::Config(format!(
                "{} degrees given for {} cells",
                degrees.len(),
                mesh.n_cells()
            )));
        }
        let bases = (0..mesh.n_cells())
            .into_par_iter()
            .map(|k| {
                let p = degrees[k];
                let ortho = orthonormalize.unwrap_or_else(|| default_orthonormalize(p));
                let quad = cell_rule(mesh.cell(k), quad_degree(p));
                build_basis(k, mesh.cell(k), p, ortho, &quad)
            })
            .collect::<Result<Vec<_>>>()?;
        let dofmap = DofMap::from_sizes(bases.iter().map(|b| b.dim()).collect());
        Ok(DgSpace {
            mesh,
            degrees,
            bases,
            dofmap,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofmap.total
    }

    pub fn cell_quadrature(&self, k: usize) -> QuadRule {
        cell_rule(self.mesh.cell(k), quad_degree(self.degrees[k]))
    }

    /// Gauss rule on face `f`, exact for products of the adjacent bases.
    pub fn face_quadrature(&self, f: usize) -> QuadRule {
        let p = self.mesh.face(f).cells().map(|k| self.degrees[k]).max().unwrap_or(0);
        let (a, b) = self.mesh.face_endpoints(f);
        face_rule(&a, &b, quad_degree(p))
    }

    /// Local coefficients of `u` restricted to cell `k`.
    pub fn local<'a>(&self, u: &'a DVector<f64>, k: usize) -> nalgebra::DVectorView<'a, f64> {
        u.rows(self.dofmap.offsets[k], self.dofmap.sizes[k])
    }

    /// Cellwise L2 projection of `g`; exact for polynomials of degree `<= p`.
    pub fn project(&self, g: impl Fn(&Point) -> f64 + Sync) -> Result<DVector<f64>> {
        let parts = (0..self.mesh.n_cells())
            .into_par_iter()
            .map(|k| {
                let quad = cell_rule(self.mesh.cell(k), quad_degree(self.degrees[k]) + 4);
                let vals: Vec<f64> = quad.points.iter().map(&g).collect();
                l2_project(&self.bases[k], &quad, &vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = DVector::zeros(self.n_dofs());
        for (k, c) in parts.into_iter().enumerate() {
            out.rows_mut(self.dofmap.offsets[k], self.dofmap.sizes[k]).copy_from(&c);
        }
        Ok(out)
    }

    /// Value of the discrete function `u` at `p`, taken from cell `k`.
    pub fn eval(&self, u: &DVector<f64>, k: usize, p: &Point) -> f64 {
        self.bases[k].eval(&self.local(u, k).into_owned(), p)
    }
}

/// Assembled linear system. The matrix and load are the rounded parts of
/// double-double sums whose remainders are kept in `matrix_lo`, `rhs_lo`.
#[derive(Clone, Debug)]
pub struct DgSystem {
    pub matrix: BlockSparse,
    pub matrix_lo: BlockSparse,
    pub rhs: DVector<f64>,
    pub rhs_lo: DVector<f64>,
    pub dofmap: DofMap,
    pub penalty: PenaltyField,
}

impl DgSystem {
    /// Direct solve refined against the full double-double system.
    pub fn solve(&self, opts: &SolveOptions) -> Result<SolveReport> {
        solve_split(&self.matrix, Some(&self.matrix_lo), &self.rhs, Some(&self.rhs_lo), opts)
    }
}

/// L2 projection onto the span of `basis` of a function sampled at the
/// points of `quad`.
pub fn l2_project(basis: &ElementBasis, quad: &QuadRule, values: &[f64]) -> Result<DVector<f64>> {
    let t = basis.eval_tables(&quad.points).val;
    let mass = weighted_gram(&t, &quad.weights);
    let rhs = weighted_cross(&t, &quad.weights, &DMatrix::from_column_slice(values.len(), 1, values));
    let chol = mass.cholesky().ok_or(Error::SingularMass {
        cell: basis.cell,
        degree: basis.degree,
    })?;
    Ok(chol.solve(&rhs).column(0).into_owned())
}

/// Projection of the Laplacians of a degree-`p` basis onto `P_{p-2}`:
/// column `i` holds the coefficients of `Π(Δφ_i)` in `low`.
pub fn l2_project_down(basis: &ElementBasis, low: &ElementBasis, quad: &QuadRule) -> Result<DMatrix<f64>> {
    let lo = low.eval_tables(&quad.points).val;
    let lap = basis.eval_tables(&quad.points).lap;
    let mass = weighted_gram(&lo, &quad.weights);
    let rhs = weighted_cross(&lo, &quad.weights, &lap);
    let chol = mass.cholesky().ok_or(Error::SingularMass {
        cell: low.cell,
        degree: low.degree,
    })?;
    Ok(chol.solve(&rhs))
}

/// The three symmetric forms built by the face loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Consistent,
    Inconsistent,
    DgNorm,
}

/// Per-cell data needed on faces for the inconsistent form.
struct Lowered {
    low: ElementBasis,
    proj: DMatrix<f64>,
}

/// Traces of one side of a face, with derivatives taken along the face
/// normal of the left cell.
struct Side {
    val: DMatrix<f64>,
    dn: DMatrix<f64>,
    lap: DMatrix<f64>,
    glap: DMatrix<f64>,
}

fn side_traces(space: &DgSpace, k: usize, pts: &[Point], n: &Vector, lowered: Option<&[Lowered]>) -> Side {
    let t = space.bases[k].eval_tables(pts);
    let dn = t.normal_derivative(n);
    let (lap, glap) = match lowered {
        Some(l) => {
            let lt = l[k].low.eval_tables(pts);
            (&lt.val * &l[k].proj, lt.normal_derivative(n) * &l[k].proj)
        }
        None => {
            let g = t.normal_glap(n);
            (t.lap, g)
        }
    };
    Side {
        val: t.val,
        dn,
        lap,
        glap,
    }
}

/// Volume terms carry no penalty weight, so plain double sums suffice.
fn volume_block(space: &DgSpace, k: usize) -> CompBlock {
    let quad = space.cell_quadrature(k);
    let lap = space.bases[k].eval_tables(&quad.points).lap;
    CompBlock::from_f64(&weighted_gram(&lap, &quad.weights))
}

/// Face blocks `(s, t)` for `s <= t`, indexed 0 = left, 1 = right.
fn face_blocks(
    space: &DgSpace,
    f: usize,
    sigma: f64,
    tau: f64,
    form: Form,
    lowered: Option<&[Lowered]>,
) -> Vec<(usize, usize, CompBlock)> {
    let face = space.mesh.face(f);
    let quad = space.face_quadrature(f);
    let n = face.normal;
    let cells: Vec<usize> = face.cells().collect();
    let avg = if cells.len() == 2 { 0.5 } else { 1.0 };
    let eps = [1.0, -1.0];
    let sides: Vec<Side> = cells
        .iter()
        .map(|&k| side_traces(space, k, &quad.points, &n, lowered))
        .collect();
    let term = |coef, a, b| CrossTerm { coef, a, b };
    let mut out = Vec::with_capacity(3);
    for s in 0..sides.len() {
        for t in s..sides.len() {
            let (a, b) = (&sides[s], &sides[t]);
            let e = eps[s] * eps[t];
            let mut terms = vec![term(sigma * e, &a.val, &b.val), term(tau * e, &a.dn, &b.dn)];
            if form != Form::DgNorm {
                // {∇Δu}[v] + {∇Δv}[u] - {Δu}[∇v] - {Δv}[∇u]
                terms.extend([
                    term(eps[s] * avg, &a.val, &b.glap),
                    term(eps[t] * avg, &a.glap, &b.val),
                    term(-eps[s] * avg, &a.dn, &b.lap),
                    term(-eps[t] * avg, &a.lap, &b.dn),
                ]);
            }
            let mut m = CompBlock::zeros(a.val.ncols(), b.val.ncols());
            accumulate_cross(&mut m, &quad.weights, &terms);
            out.push((cells[s], cells[t], m));
        }
    }
    out
}

fn lowered_bases(space: &DgSpace) -> Result<Vec<Lowered>> {
    (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let p = space.degrees[k];
            let cell = space.mesh.cell(k);
            let quad = space.cell_quadrature(k);
            let low = build_basis_any(k, cell, p - 2, false, &quad)?;
            let proj = l2_project_down(&space.bases[k], &low, &quad)?;
            Ok(Lowered { low, proj })
        })
        .collect()
}

fn assemble_form(space: &DgSpace, penalty: &PenaltyField, form: Form) -> Result<SplitMatrix> {
    let mesh = space.mesh;
    let penalties = (0..mesh.n_faces())
        .map(|f| penalty.on_face(f))
        .collect::<Result<Vec<_>>>()?;
    let lowered = match form {
        Form::Inconsistent => Some(lowered_bases(space)?),
        _ => None,
    };
    let volume: Vec<CompBlock> = (0..mesh.n_cells()).into_par_iter().map(|k| volume_block(space, k)).collect();
    let faces: Vec<_> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let (s, t) = penalties[f];
            face_blocks(space, f, s, t, form, lowered.as_deref())
        })
        .collect();
    // fixed summation order: volume terms, then faces by index
    let mut acc = BlockAccumulator::new(space.dofmap.clone());
    for (k, m) in volume.iter().enumerate() {
        acc.add(k, k, m);
    }
    for blocks in &faces {
        for (i, j, m) in blocks {
            acc.add(*i, *j, m);
            if i != j {
                acc.add(*j, *i, &m.transpose());
            }
        }
    }
    Ok(acc.finish())
}

/// Matrix of the consistent symmetric interior-penalty form.
pub fn assemble_bilinear(space: &DgSpace, penalty: &PenaltyField) -> Result<BlockSparse> {
    Ok(assemble_form(space, penalty, Form::Consistent)?.hi)
}

/// As [`assemble_bilinear`], keeping the double-double remainder.
pub fn assemble_bilinear_split(space: &DgSpace, penalty: &PenaltyField) -> Result<SplitMatrix> {
    assemble_form(space, penalty, Form::Consistent)
}

/// The form with Laplacian traces replaced by their projections onto
/// `P_{p-2}`; agrees with [`assemble_bilinear`] on the discrete space.
pub fn assemble_inconsistent(space: &DgSpace, penalty: &PenaltyField) -> Result<BlockSparse> {
    Ok(assemble_form(space, penalty, Form::Inconsistent)?.hi)
}

/// Gram matrix of the DG norm
/// `|v|² = sum |Δv|²_κ + ∫ σ |[v]|² + τ |[∇v]|²`.
pub fn dg_gram(space: &DgSpace, penalty: &PenaltyField) -> Result<BlockSparse> {
    Ok(assemble_form(space, penalty, Form::DgNorm)?.hi)
}

/// Boundary data callbacks. `g_n` receives the outward normal.
pub struct LoadData<'a> {
    pub f: &'a (dyn Fn(&Point) -> f64 + Sync),
    pub g_d: &'a (dyn Fn(&Point) -> f64 + Sync),
    pub g_n: &'a (dyn Fn(&Point, &Vector) -> f64 + Sync),
}

/// `ℓ(v) = sum ∫ f v + ∫_{∂Ω} g_D (∇Δv·n + σ v) + g_N (τ ∇v·n - Δv)`,
/// returned as rounded value and remainder.
pub fn assemble_load_split(
    space: &DgSpace,
    penalty: &PenaltyField,
    data: &LoadData,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mesh = space.mesh;
    let vol: Vec<Vec<Compensated>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let quad = space.cell_quadrature(k);
            let t = space.bases[k].eval_tables(&quad.points).val;
            let f = DMatrix::from_iterator(quad.len(), 1, quad.points.iter().map(|p| (data.f)(p)));
            let r = weighted_cross(&t, &quad.weights, &f);
            r.iter().map(|&v| Compensated::new(v, 0.0)).collect()
        })
        .collect();
    let boundary: Vec<usize> = (0..mesh.n_faces()).filter(|&f| mesh.face(f).is_boundary()).collect();
    let bnd = boundary
        .par_iter()
        .map(|&f| {
            let (sigma, tau) = penalty.on_face(f)?;
            let face = mesh.face(f);
            let quad = space.face_quadrature(f);
            let n = face.normal;
            let t = space.bases[face.left].eval_tables(&quad.points);
            let gd: Vec<f64> = quad.points.iter().map(|p| (data.g_d)(p)).collect();
            let gn: Vec<f64> = quad.points.iter().map(|p| (data.g_n)(p, &n)).collect();
            let scaled = |c: f64, g: &[f64]| g.iter().map(|v| c * v).collect::<Vec<f64>>();
            let mut r = vec![Compensated::default(); t.val.ncols()];
            let w = &quad.weights;
            accumulate_weighted(&mut r, w, &gd, &t.normal_glap(&n));
            accumulate_weighted(&mut r, w, &scaled(sigma, &gd), &t.val);
            accumulate_weighted(&mut r, w, &scaled(tau, &gn), &t.normal_derivative(&n));
            accumulate_weighted(&mut r, w, &scaled(-1.0, &gn), &t.lap);
            Ok((face.left, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rhs = vec![Compensated::default(); space.n_dofs()];
    let mut add = |k: usize, v: &[Compensated]| {
        for (o, x) in rhs[space.dofmap.range(k)].iter_mut().zip(v) {
            o.add(*x);
        }
    };
    for (k, v) in vol.iter().enumerate() {
        add(k, v);
    }
    for (k, v) in &bnd {
        add(*k, v);
    }
    Ok(split_vector(&rhs))
}

pub fn assemble_load(space: &DgSpace, penalty: &PenaltyField, data: &LoadData) -> Result<DVector<f64>> {
    Ok(assemble_load_split(space, penalty, data)?.0)
}

/// Load for the manufactured solution `u`: `f = Δ²u`, `g_D = u`,
/// `g_N = ∇u·n`.
pub fn load_for(space: &DgSpace, penalty: &PenaltyField, u: &dyn ExactSolution) -> Result<(DVector<f64>, DVector<f64>)> {
    let f = |p: &Point| u.bilaplacian(p);
    let g_d = |p: &Point| u.value(p);
    let g_n = |p: &Point, n: &Vector| u.gradient(p).dot(n);
    assemble_load_split(space, penalty, &LoadData { f: &f, g_d: &g_d, g_n: &g_n })
}

/// Matrix and load for `u` in one step.
pub fn assemble_system(space: &DgSpace, penalty: &PenaltyField, u: &dyn ExactSolution) -> Result<DgSystem> {
    let a = assemble_bilinear_split(space, penalty)?;
    let (rhs, rhs_lo) = load_for(space, penalty, u)?;
    Ok(DgSystem {
        matrix: a.hi,
        matrix_lo: a.lo,
        rhs,
        rhs_lo,
        dofmap: space.dofmap.clone(),
        penalty: penalty.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::{two_squares, unit_square_mesh};
    use crate::penalty::{compute_penalties, PenaltyParams, Regime};
    use crate::problems::Polynomial;

    fn uniform_penalty(m: &PolyMesh, sigma: f64, tau: f64) -> PenaltyField {
        let mut pf = compute_penalties(m, &vec![2; m.n_cells()], &PenaltyParams::default()).unwrap();
        pf.sigma = vec![sigma; m.n_faces()];
        pf.tau = vec![tau; m.n_faces()];
        pf
    }

    #[test]
    fn constant_function_sees_only_sigma() {
        let m = unit_square_mesh();
        let pf = compute_penalties(&m, &[2], &PenaltyParams::default()).unwrap();
        let space = DgSpace::new(&m, vec![2], Some(false)).unwrap();
        let a = assemble_bilinear(&space, &pf).unwrap();
        let expect: f64 = (0..4).map(|f| pf.sigma[f] * m.face(f).measure).sum();
        let got = a.block(0, 0).unwrap()[(0, 0)];
        assert!((got - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn matrix_is_symmetric() {
        let m = two_squares();
        for p in [2, 3, 5] {
            let pf = compute_penalties(&m, &[p, p], &PenaltyParams::default()).unwrap();
            let space = DgSpace::uniform(&m, p).unwrap();
            let a = assemble_bilinear(&space, &pf).unwrap();
            assert!(a.symmetry_error() <= 1e-12 * a.max_abs());
        }
    }

    #[test]
    fn smooth_quadratic_energy() {
        // u = x² + y² on [0,2]x[0,1], σ = τ = 0: interior jumps vanish and
        // ∇Δu = 0, leaving ∫(Δu)² - 2∫_{∂Ω} Δu ∂u/∂n = 16·2 - 2·4·∫Δu = -32.
        let m = two_squares();
        let pf = uniform_penalty(&m, 0.0, 0.0);
        let space = DgSpace::uniform(&m, 2).unwrap();
        let u = space.project(|p| p.x * p.x + p.y * p.y).unwrap();
        let a = assemble_bilinear(&space, &pf).unwrap();
        let e = u.dot(&a.matvec(&u));
        assert!((e + 32.0).abs() < 1e-10, "{e}");
        // volume part alone
        let vol: f64 = (0..2)
            .map(|k| {
                let c = space.local(&u, k).into_owned();
                c.dot(&(volume_block(&space, k).to_f64() * &c))
            })
            .sum();
        assert!((vol - 32.0).abs() < 1e-10);
    }

    #[test]
    fn inconsistent_form_agrees_on_discrete_space() {
        let m = two_squares();
        for p in [2, 3, 4, 5] {
            let pf = compute_penalties(&m, &[p, p], &PenaltyParams::default()).unwrap();
            let space = DgSpace::uniform(&m, p).unwrap();
            let a = assemble_bilinear(&space, &pf).unwrap().to_dense();
            let b = assemble_inconsistent(&space, &pf).unwrap().to_dense();
            let scale = a.abs().max();
            assert!((a - b).abs().max() <= 1e-11 * scale, "p = {p}");
        }
    }

    #[test]
    fn doubled_penalty_doubles_penalty_part() {
        let m = two_squares();
        let pf = compute_penalties(&m, &[3, 3], &PenaltyParams::default()).unwrap();
        let space = DgSpace::uniform(&m, 3).unwrap();
        let a1 = assemble_bilinear(&space, &pf).unwrap().to_dense();
        let a2 = assemble_bilinear(&space, &pf.scaled(2.0)).unwrap().to_dense();
        let g1 = dg_gram(&space, &pf).unwrap().to_dense();
        let g2 = dg_gram(&space, &pf.scaled(2.0)).unwrap().to_dense();
        let vol = &g1 * 2.0 - &g2;
        // A2 - A1 = penalty part = G1 - volume part
        let lhs = &a2 - &a1;
        let rhs = &g1 - &vol;
        assert!((lhs - rhs).abs().max() <= 1e-10 * a2.abs().max());
    }

    #[test]
    fn harmonic_quadratic_on_unit_square() {
        // v = x² - y²: Δv = 0, so B(v, v) = σ∫v² + τ∫(∂v/∂n)² = 22σ/15 + 8τ
        let m = unit_square_mesh();
        let (sigma, tau) = (3.0, 5.0);
        let pf = uniform_penalty(&m, sigma, tau);
        let space = DgSpace::uniform(&m, 2).unwrap();
        let v = space.project(|p| p.x * p.x - p.y * p.y).unwrap();
        let b = assemble_inconsistent(&space, &pf).unwrap();
        let e = v.dot(&b.matvec(&v));
        assert!((e - (22.0 * sigma / 15.0 + 8.0 * tau)).abs() < 1e-10);
    }

    #[test]
    fn projection_down_is_identity_on_range() {
        let m = unit_square_mesh();
        let cell = m.cell(0);
        let quad = cell_rule(cell, 12);
        for p in [2, 3, 5] {
            let b = build_basis(0, cell, p, false, &quad).unwrap();
            let low = build_basis_any(0, cell, p - 2, false, &quad).unwrap();
            let proj = l2_project_down(&b, &low, &quad).unwrap();
            let lap = b.eval_tables(&quad.points).lap;
            let back = low.eval_tables(&quad.points).val * &proj;
            assert!((lap - back).abs().max() < 1e-10);
        }
    }

    #[test]
    fn projection_of_cubic_is_legendre_truncation() {
        // On [-1,1]², x³ projected onto P_2 is (3/5) x.
        let v = vec![
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
        ];
        let m = PolyMesh::from_cells(v, vec![vec![0, 1, 2, 3]]).unwrap();
        let quad = cell_rule(m.cell(0), 14);
        let low = build_basis_any(0, m.cell(0), 2, false, &quad).unwrap();
        let vals: Vec<f64> = quad.points.iter().map(|p| p.x.powi(3)).collect();
        let c = l2_project(&low, &quad, &vals).unwrap();
        for p in [Point::new(0.3, -0.2), Point::new(-0.9, 0.5)] {
            assert!((low.eval(&c, &p) - 0.6 * p.x).abs() < 1e-12);
        }
    }

    #[test]
    fn load_hand_values() {
        let m = unit_square_mesh();
        let pf = compute_penalties(&m, &[2], &PenaltyParams::default()).unwrap();
        let space = DgSpace::new(&m, vec![2], Some(false)).unwrap();
        let zero = |_: &Point| 0.0;
        let zn = |_: &Point, _: &Vector| 0.0;
        let one = |_: &Point| 1.0;
        let r = assemble_load(&space, &pf, &LoadData { f: &zero, g_d: &zero, g_n: &zn }).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
        let r = assemble_load(&space, &pf, &LoadData { f: &one, g_d: &zero, g_n: &zn }).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn polynomial_solution_is_reproduced() {
        let m = two_squares();
        let u = Polynomial::harmonic_quartic();
        for regime in [Regime::Bounded, Regime::Arbitrary] {
            let mut params = PenaltyParams::with_regime(regime);
            params.allow_any_degree = true;
            let pf = compute_penalties(&m, &[4, 4], &params).unwrap();
            let space = DgSpace::uniform(&m, 4).unwrap();
            let sys = assemble_system(&space, &pf, &u).unwrap();
            let x = sys.solve(&SolveOptions::default()).unwrap().solution;
            let exact = space.project(|p| u.value(p)).unwrap();
            assert!((x - exact).amax() < 1e-8);
        }
    }
}
