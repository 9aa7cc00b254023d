//! Linear solvers and eigenvalue estimates for SPD systems.

use crate::error::{Error, Result};
use crate::sparse::{BlockCholesky, BlockSparse};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Systems below this many unknowns are factored densely.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// Conjugate gradients with block-Jacobi preconditioning.
    Cg,
    /// Dense Cholesky below [`DENSE_LIMIT`] unknowns, block sparse above.
    Cholesky,
    /// Same as `Cholesky`; kept as a separate name for configuration.
    Auto,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cg" => Ok(SolveMethod::Cg),
            "cholesky" => Ok(SolveMethod::Cholesky),
            "auto" => Ok(SolveMethod::Auto),
            _ => Err(Error::Config(format!("unknown solve method `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 20_000,
            method: SolveMethod::Auto,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `|A x - b| / |b|` (absolute when `b = 0`).
    pub residual: f64,
    /// Normwise backward error `|b - A x|_inf / (|A|_inf |x|_inf + |b|_inf)`.
    pub backward_error: f64,
    pub method: &'static str,
    pub history: Vec<f64>,
}

/// A factorization of an SPD matrix `A = L L^T` (possibly permuted).
pub enum Factor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sparse(BlockCholesky),
}

impl Factor {
    pub fn new(a: &BlockSparse) -> Result<Self> {
        if a.dim() < DENSE_LIMIT {
            a.to_dense()
                .cholesky()
                .map(Factor::Dense)
                .ok_or(Error::NotPositiveDefinite { block: 0 })
        } else {
            BlockCholesky::factor(a).map(Factor::Sparse)
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Dense(c) => c.solve(b),
            Factor::Sparse(c) => c.solve(b),
        }
    }

    /// `x -> L^{-1} G L^{-T} x` is symmetric and shares its spectrum with
    /// `A^{-1} G`.
    pub fn congruence(&self, g: &BlockSparse, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Dense(c) => {
                let l = c.l_dirty();
                let y = l.tr_solve_lower_triangular(x).expect("nonsingular");
                let gy = g.matvec(&y);
                l.solve_lower_triangular(&gy).expect("nonsingular")
            }
            Factor::Sparse(c) => {
                let y = c.solve_upper(x);
                c.solve_lower(&g.matvec(&y))
            }
        }
    }
}

/// Normwise backward error of `x` as a solution of `A x = b`. Direct
/// solves are judged by this: their relative residual is bounded below by
/// roughly `eps * cond(A)`, far above any useful tolerance for fourth-order
/// problems on fine meshes.
pub fn backward_error(a: &BlockSparse, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = (b - a.matvec(x)).amax();
    let denom = a.inf_norm() * x.amax() + b.amax();
    if denom > 0.0 {
        r / denom
    } else {
        r
    }
}

fn relative_residual(a: &BlockSparse, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = (b - a.matvec(x)).norm();
    let nb = b.norm();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

pub fn solve_spd(a: &BlockSparse, b: &DVector<f64>, opts: &SolveOptions) -> Result<SolveReport> {
    solve_split(a, None, b, None, opts)
}

/// Solve `(A + A_lo) x = b + b_lo`, where the optional low parts carry
/// the rounding remainders of an extended-precision assembly. The
/// factorization uses `A` alone; the remainders enter through the
/// refinement residual.
pub fn solve_split(
    a: &BlockSparse,
    a_lo: Option<&BlockSparse>,
    b: &DVector<f64>,
    b_lo: Option<&DVector<f64>>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if b.norm() == 0.0 {
        return Ok(SolveReport {
            solution: DVector::zeros(b.len()),
            iterations: 0,
            residual: 0.0,
            backward_error: 0.0,
            method: "trivial",
            history: vec![],
        });
    }
    match opts.method {
        SolveMethod::Cg => conjugate_gradient(a, b, opts.tol, opts.max_iter),
        SolveMethod::Cholesky | SolveMethod::Auto => {
            let f = Factor::new(a)?;
            let mut x = f.solve(b);
            let mut berr = backward_error(a, &x, b);
            let mut history = vec![berr];
            // refinement with residuals in extended precision: recovers the
            // accuracy that eps * cond(A) would otherwise cost
            let mut last = f64::INFINITY;
            for _ in 0..REFINEMENT_SWEEPS {
                let r = a.residual_split(a_lo, &x, b, b_lo);
                let dx = f.solve(&r);
                let step = dx.amax() / x.amax().max(f64::MIN_POSITIVE);
                x += dx;
                berr = backward_error(a, &x, b);
                history.push(berr);
                if step <= 4.0 * f64::EPSILON || step >= 0.5 * last {
                    break;
                }
                last = step;
            }
            let method = match f {
                Factor::Dense(_) => "dense-cholesky",
                Factor::Sparse(_) => "block-cholesky",
            };
            if berr > opts.tol {
                return Err(Error::NotConverged {
                    iterations: history.len(),
                    final_residual: berr,
                    history,
                });
            }
            Ok(SolveReport {
                residual: relative_residual(a, &x, b),
                backward_error: berr,
                solution: x,
                iterations: history.len() - 1,
                method,
                history,
            })
        }
    }
}

/// Preconditioned CG with the inverse diagonal blocks of `a`.
pub fn conjugate_gradient(a: &BlockSparse, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let dm = &a.dofmap;
    let inv: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>> = a
        .diagonal_blocks()
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.cholesky().ok_or(Error::NotPositiveDefinite { block: i }))
        .collect::<Result<_>>()?;
    let precond = |r: &DVector<f64>| {
        let mut z = DVector::zeros(r.len());
        for (i, c) in inv.iter().enumerate() {
            let rr = r.rows(dm.offsets[i], dm.sizes[i]).into_owned();
            z.rows_mut(dm.offsets[i], dm.sizes[i]).copy_from(&c.solve(&rr));
        }
        z
    };
    let nb = b.norm();
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let res = r.norm() / nb;
        history.push(res);
        if res <= tol {
            let true_res = relative_residual(a, &x, b);
            if true_res <= tol {
                return Ok(SolveReport {
                    backward_error: backward_error(a, &x, b),
                    solution: x,
                    iterations: it,
                    residual: true_res,
                    method: "pcg-block-jacobi",
                    history,
                });
            }
            // recurrence drifted: restart from the true residual
            r = b - a.matvec(&x);
            z = precond(&r);
            p = z.clone();
            rz = r.dot(&z);
            continue;
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        final_residual: *history.last().unwrap(),
        history,
    })
}

/// Extreme eigenvalues `(min, max)` of a symmetric operator by Lanczos with
/// full reorthogonalization. Stops when both extreme Ritz values change by
/// less than `rtol` relative over five steps.
pub fn lanczos_extremes(
    n: usize,
    op: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_steps: usize,
    rtol: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_unit = |basis: &[DVector<f64>]| -> Option<DVector<f64>> {
        let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..2 {
            for q in basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        (nv > 1e-10 * (n as f64).sqrt()).then(|| v / nv)
    };
    let steps = max_steps.min(n).max(1);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut alpha: Vec<f64> = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    basis.push(random_unit(&[]).expect("n >= 1"));
    let mut restarts = 0;
    let mut history: Vec<(f64, f64)> = Vec::new();
    let ritz = |alpha: &[f64], beta: &[f64]| -> (f64, f64) {
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i == j + 1 {
                beta[j]
            } else if j == i + 1 {
                beta[i]
            } else {
                0.0
            }
        });
        let ev = SymmetricEigen::new(t).eigenvalues;
        (ev.min(), ev.max())
    };
    loop {
        let j = basis.len() - 1;
        let mut w = op(&basis[j]);
        let a = basis[j].dot(&w);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let b = w.norm();
        let est = ritz(&alpha, &beta);
        history.push(est);
        if basis.len() >= steps {
            return Ok(est);
        }
        let rel = |x: f64, y: f64| (x - y).abs() <= rtol * x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
        let settled = |back: usize| {
            history.len() > back && {
                let old = history[history.len() - 1 - back];
                rel(old.0, est.0) && rel(old.1, est.1)
            }
        };
        let converged = settled(5);
        if converged {
            return Ok(est);
        }
        let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if b <= 1e-12 * scale {
            // invariant subspace: continue from a fresh direction
            match random_unit(&basis) {
                None => return Ok(est),
                Some(v) => {
                    restarts += 1;
                    if restarts > 3 {
                        return if settled(1) {
                            Ok(est)
                        } else {
                            Err(Error::LanczosBreakdown { restarts })
                        };
                    }
                    beta.push(0.0);
                    basis.push(v);
                }
            }
        } else {
            beta.push(b);
            basis.push(w / b);
        }
    }
}

/// Upper bound on iterative-refinement sweeps after a direct solve.
const REFINEMENT_SWEEPS: usize = 8;

const LANCZOS_STEPS: usize = 300;

/// `lambda_max / lambda_min` of an SPD matrix; the smallest eigenvalue is
/// obtained as the reciprocal of the largest eigenvalue of the inverse.
pub fn estimate_condition(a: &BlockSparse) -> Result<f64> {
    let f = Factor::new(a)?;
    estimate_condition_with(a, &f)
}

pub fn estimate_condition_with(a: &BlockSparse, f: &Factor) -> Result<f64> {
    let (_, lmax) = lanczos_extremes(a.dim(), |x| a.matvec(x), LANCZOS_STEPS, 1e-4, 11)?;
    let (_, inv_max) = lanczos_extremes(a.dim(), |x| f.solve(x), LANCZOS_STEPS, 1e-4, 13)?;
    Ok(lmax * inv_max)
}

/// Extreme generalized eigenvalues `(min, max)` of `A x = lambda G x`,
/// both SPD. Each end comes from the largest eigenvalue of a congruent
/// operator, where Lanczos converges fastest.
pub fn generalized_extremes(a: &BlockSparse, g: &BlockSparse) -> Result<(f64, f64)> {
    let fa = Factor::new(a)?;
    let fg = Factor::new(g)?;
    let (_, inv_min) = lanczos_extremes(a.dim(), |x| fa.congruence(g, x), LANCZOS_STEPS, 1e-8, 17)?;
    let (_, lmax) = lanczos_extremes(a.dim(), |x| fg.congruence(a, x), LANCZOS_STEPS, 1e-6, 19)?;
    Ok((1.0 / inv_min, lmax))
}

/// Dense reference for [`generalized_extremes`].
pub fn generalized_extremes_dense(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Option<(f64, f64)> {
    let l = g.clone().cholesky()?.unpack();
    let linv = l.clone().try_inverse()?;
    let s = &linv * a * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let ev = SymmetricEigen::new(s).eigenvalues;
    Some((ev.min(), ev.max()))
}
