//! Error norms and observed convergence rates.

use crate::assembly::{quad_degree, DgSpace};
use crate::error::Result;
use crate::penalty::PenaltyField;
use crate::problems::ExactSolution;
use crate::quadrature::cell_rule;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Extra quadrature degree for integrands involving a non-polynomial
/// exact solution.
const EXTRA_DEGREE: usize = 6;

/// `‖u - u_h‖_DG`, with `‖v‖²_DG = Σ‖Δv‖² + ∫σ|[v]|² + ∫τ|[∇v]|²`.
pub fn dg_norm_error(space: &DgSpace, penalty: &PenaltyField, uh: &DVector<f64>, u: &dyn ExactSolution) -> Result<f64> {
    let mesh = space.mesh;
    let vol: f64 = (0..mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let quad = cell_rule(mesh.cell(k), quad_degree(space.degrees[k]) + EXTRA_DEGREE);
            let lap = space.bases[k].eval_tables(&quad.points).lap * space.local(uh, k);
            quad.points
                .iter()
                .zip(&quad.weights)
                .enumerate()
                .map(|(q, (p, w))| w * (u.laplacian(p) - lap[q]).powi(2))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let faces = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let (sigma, tau) = penalty.on_face(f)?;
            let face = mesh.face(f);
            let (a, b) = mesh.face_endpoints(f);
            let p = face.cells().map(|k| space.degrees[k]).max().unwrap_or(0);
            let quad = crate::quadrature::face_rule(&a, &b, quad_degree(p) + EXTRA_DEGREE);
            let n = face.normal;
            // jumps of e = u - u_h measured along the left normal
            let mut jv = DVector::<f64>::zeros(quad.len());
            let mut jd = DVector::<f64>::zeros(quad.len());
            for (side, k) in face.cells().enumerate() {
                let sign = if side == 0 { 1.0 } else { -1.0 };
                let t = space.bases[k].eval_tables(&quad.points);
                let c = space.local(uh, k);
                jv -= sign * (&t.val * c);
                jd -= sign * (t.normal_derivative(&n) * c);
            }
            if face.is_boundary() {
                for (q, p) in quad.points.iter().enumerate() {
                    jv[q] += u.value(p);
                    jd[q] += u.gradient(p).dot(&n);
                }
            }
            Ok(quad
                .weights
                .iter()
                .enumerate()
                .map(|(q, w)| w * (sigma * jv[q] * jv[q] + tau * jd[q] * jd[q]))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((vol + faces.iter().sum::<f64>()).sqrt())
}

fn cellwise(space: &DgSpace, uh: &DVector<f64>, term: impl Fn(usize, &crate::basis::Tables, &nalgebra::DVectorView<f64>, usize, &crate::geometry::Point) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let quad = cell_rule(space.mesh.cell(k), quad_degree(space.degrees[k]) + EXTRA_DEGREE);
            let t = space.bases[k].eval_tables(&quad.points);
            let c = space.local(uh, k);
            quad.points
                .iter()
                .zip(&quad.weights)
                .enumerate()
                .map(|(q, (p, w))| w * term(k, &t, &c, q, p))
                .sum()
        })
        .collect();
    parts.iter().sum()
}

/// Broken `H¹` seminorm of `u - u_h`.
pub fn broken_h1_error(space: &DgSpace, uh: &DVector<f64>, u: &dyn ExactSolution) -> f64 {
    cellwise(space, uh, |_, t, c, q, p| {
        let g = u.gradient(p);
        let gx = (t.dx.row(q) * c)[0];
        let gy = (t.dy.row(q) * c)[0];
        (g.x - gx).powi(2) + (g.y - gy).powi(2)
    })
    .sqrt()
}

pub fn l2_error(space: &DgSpace, uh: &DVector<f64>, u: &dyn ExactSolution) -> f64 {
    cellwise(space, uh, |_, t, c, q, p| (u.value(p) - (t.val.row(q) * c)[0]).powi(2)).sqrt()
}

/// Errors of one run in a refinement sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub level: usize,
    pub h_max: f64,
    /// Mean cell diameter.
    pub h_mean: f64,
    pub dofs: usize,
    pub err_dg: f64,
    pub err_h1: f64,
    pub err_l2: f64,
}

impl ErrorReport {
    pub fn compute(
        level: usize,
        space: &DgSpace,
        penalty: &PenaltyField,
        uh: &DVector<f64>,
        u: &dyn ExactSolution,
    ) -> Result<Self> {
        Ok(ErrorReport {
            level,
            h_max: space.mesh.h_max(),
            h_mean: space.mesh.h_mean(),
            dofs: space.n_dofs(),
            err_dg: dg_norm_error(space, penalty, uh, u)?,
            err_h1: broken_h1_error(space, uh, u),
            err_l2: l2_error(space, uh, u),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub report: ErrorReport,
    /// Rates against the previous level; `None` on the first row.
    pub eoc_dg: Option<f64>,
    pub eoc_h1: Option<f64>,
    pub eoc_l2: Option<f64>,
}

/// `log(e0/e1) / log(h0/h1)`; NaN (with a warning) when `h0 == h1`.
pub fn eoc(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    if h0 == h1 {
        log::warn!("identical mesh sizes h = {h0}; rate undefined");
        return f64::NAN;
    }
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// Mesh size used for rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMeasure {
    /// Largest cell diameter. On Lloyd-relaxed Voronoi meshes it depends
    /// on a single cell, and its ratio between levels scatters by ±10%.
    Max,
    /// Mean cell diameter.
    #[default]
    Mean,
}

impl SizeMeasure {
    pub fn of(self, r: &ErrorReport) -> f64 {
        match self {
            SizeMeasure::Max => r.h_max,
            SizeMeasure::Mean => r.h_mean,
        }
    }
}

pub fn eoc_table(reports: &[ErrorReport], measure: SizeMeasure) -> Vec<EocRow> {
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let rate = |get: fn(&ErrorReport) -> f64| {
                (i > 0).then(|| {
                    let prev = &reports[i - 1];
                    eoc(get(prev), get(r), measure.of(prev), measure.of(r))
                })
            };
            EocRow {
                report: r.clone(),
                eoc_dg: rate(|r| r.err_dg),
                eoc_h1: rate(|r| r.err_h1),
                eoc_l2: rate(|r| r.err_l2),
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "level,h_max,dofs,err_dg,err_h1,err_l2,eoc_dg,eoc_h1,eoc_l2,h_mean";

pub fn write_csv(rows: &[EocRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for row in rows {
        let r = &row.report;
        writeln!(
            w,
            "{},{:.6e},{},{:.6e},{:.6e},{:.6e},{},{},{},{:.6e}",
            r.level,
            r.h_max,
            r.dofs,
            r.err_dg,
            r.err_h1,
            r.err_l2,
            opt(row.eoc_dg),
            opt(row.eoc_h1),
            opt(row.eoc_l2),
            r.h_mean
        )?;
    }
    Ok(())
}
