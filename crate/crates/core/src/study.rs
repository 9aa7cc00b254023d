//! Configuration-driven convergence studies.

use crate::assembly::{assemble_system, dg_gram, DgSpace};
use crate::error::{Error, Result};
use crate::mesh::{agglomerate, compute_metrics, generate_voronoi, read_mesh_file, structured_triangles, Diagonal, MeshMetrics, PolyMesh, Rect};
use crate::norms::{eoc_table, write_csv, EocRow, ErrorReport, SizeMeasure};
use crate::penalty::{compute_penalties, PenaltyParams};
use crate::problems::{by_name, ExactSolution, Polynomial};
use crate::solve::{estimate_condition_with, generalized_extremes, Factor, SolveOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `example1`, `example2`, `harmonic4` or `custom`.
    pub name: String,
    /// Terms `[c, a, b]` of `sum c x^a y^b` for `custom`.
    #[serde(default)]
    pub terms: Vec<(f64, usize, usize)>,
}

impl ProblemConfig {
    pub fn named(name: &str) -> Self {
        ProblemConfig {
            name: name.into(),
            terms: vec![],
        }
    }

    pub fn solution(&self) -> Result<Box<dyn ExactSolution>> {
        if self.name == "custom" {
            if self.terms.is_empty() {
                return Err(Error::Config("custom problem needs `terms`".into()));
            }
            return Ok(Box::new(Polynomial::new(self.terms.clone())));
        }
        by_name(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFamily {
    /// Lloyd-relaxed Voronoi meshes with `sizes` cells.
    Voronoi,
    /// Agglomerates of a structured triangulation into `sizes` cells.
    Agglomerated,
    /// Structured triangulations with `2 sizes²` triangles.
    Triangles,
    /// Mesh files listed in `files`.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub family: MeshFamily,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub lloyd_iters: usize,
    /// Squares per side of the fine triangulation that is agglomerated.
    pub fine_n: usize,
    pub domain: Rect,
    pub files: Vec<PathBuf>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            family: MeshFamily::Voronoi,
            sizes: vec![64, 256, 1024],
            seed: 1,
            lloyd_iters: 100,
            fine_n: 256,
            domain: Rect::unit_square(),
            files: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Estimate condition numbers (costs two Lanczos runs per case).
    pub condition: bool,
    /// Compute the coercivity eigenvalue against the DG-norm Gram matrix.
    pub coercivity: bool,
    /// Mesh size used for the rates.
    pub size_measure: SizeMeasure,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            condition: false,
            coercivity: false,
            size_measure: SizeMeasure::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub degrees: Vec<usize>,
    #[serde(default)]
    pub penalty: PenaltyParams,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.solution()?;
        if self.degrees.is_empty() {
            return Err(Error::Config("`degrees` is empty".into()));
        }
        if let Some(&p) = self.degrees.iter().find(|&&p| p < 2) {
            return Err(Error::Config(format!("degree {p} below 2")));
        }
        let m = &self.mesh;
        if m.family == MeshFamily::File {
            if m.files.is_empty() {
                return Err(Error::Config("mesh family `file` needs `files`".into()));
            }
        } else {
            if m.sizes.is_empty() {
                return Err(Error::Config("mesh `sizes` is empty".into()));
            }
            if m.sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("mesh sizes must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        match self.mesh.family {
            MeshFamily::File => self.mesh.files.len(),
            _ => self.mesh.sizes.len(),
        }
    }
}

/// Builds refinement level `level` of the configured family.
pub fn build_mesh(cfg: &MeshConfig, level: usize) -> Result<PolyMesh> {
    let (mesh, diagnostics) = match cfg.family {
        MeshFamily::Voronoi => {
            let g = generate_voronoi(cfg.domain, cfg.sizes[level], cfg.lloyd_iters, cfg.seed)?;
            (g.mesh, g.diagnostics)
        }
        MeshFamily::Agglomerated => {
            let fine = structured_triangles(cfg.domain, cfg.fine_n, cfg.fine_n, Diagonal::Uniform)?;
            let g = agglomerate(&fine, cfg.sizes[level], cfg.seed)?;
            (g.mesh, g.diagnostics)
        }
        MeshFamily::Triangles => {
            let n = cfg.sizes[level];
            (structured_triangles(cfg.domain, n, n, Diagonal::Uniform)?, vec![])
        }
        MeshFamily::File => (read_mesh_file(&cfg.files[level])?, vec![]),
    };
    for d in diagnostics {
        log::info!("mesh level {level}: {d}");
    }
    Ok(mesh)
}

/// Builds every level; agglomerates share one fine triangulation.
pub fn build_meshes(cfg: &MeshConfig, n_levels: usize) -> Result<Vec<PolyMesh>> {
    if cfg.family == MeshFamily::Agglomerated {
        let fine = structured_triangles(cfg.domain, cfg.fine_n, cfg.fine_n, Diagonal::Uniform)?;
        return cfg.sizes[..n_levels]
            .par_iter()
            .map(|&n| agglomerate(&fine, n, cfg.seed).map(|g| g.mesh))
            .collect();
    }
    (0..n_levels).into_par_iter().map(|l| build_mesh(cfg, l)).collect()
}

/// Outcome of one assemble-solve-evaluate run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseResult {
    pub degree: usize,
    pub n_cells: usize,
    pub errors: ErrorReport,
    pub metrics: MeshMetrics,
    pub penalty: PenaltyParams,
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
    pub condition: Option<f64>,
    /// Extreme generalized eigenvalues of the stiffness matrix against the
    /// DG-norm Gram matrix.
    pub coercivity: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CaseExtras {
    pub condition: bool,
    pub coercivity: bool,
}

pub fn solve_case(
    mesh: &PolyMesh,
    level: usize,
    p: usize,
    params: &PenaltyParams,
    u: &dyn ExactSolution,
    opts: &SolveOptions,
    extras: CaseExtras,
) -> Result<CaseResult> {
    let degrees = vec![p; mesh.n_cells()];
    let penalty = compute_penalties(mesh, &degrees, params)?;
    let space = DgSpace::new(mesh, degrees.clone(), None)?;
    let sys = assemble_system(&space, &penalty, u)?;
    let report = sys.solve(opts)?;
    let errors = ErrorReport::compute(level, &space, &penalty, &report.solution, u)?;
    let condition = if extras.condition {
        Some(estimate_condition_with(&sys.matrix, &Factor::new(&sys.matrix)?)?)
    } else {
        None
    };
    let coercivity = if extras.coercivity {
        let g = dg_gram(&space, &penalty)?;
        Some(generalized_extremes(&sys.matrix, &g)?)
    } else {
        None
    };
    log::info!(
        "p = {p}, {} cells, {} dofs: dg {:.3e} h1 {:.3e} l2 {:.3e} ({}, residual {:.1e})",
        mesh.n_cells(),
        space.n_dofs(),
        errors.err_dg,
        errors.err_h1,
        errors.err_l2,
        report.method,
        report.residual
    );
    Ok(CaseResult {
        degree: p,
        n_cells: mesh.n_cells(),
        errors,
        metrics: compute_metrics(mesh, &degrees),
        penalty: *params,
        method: report.method.into(),
        iterations: report.iterations,
        residual: report.residual,
        condition,
        coercivity,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeStudy {
    pub degree: usize,
    pub cases: Vec<CaseResult>,
    pub rates: Vec<EocRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub config: StudyConfig,
    pub problem: String,
    pub studies: Vec<DegreeStudy>,
    /// Failed `(degree, level, message)` runs.
    pub failures: Vec<(usize, usize, String)>,
}

impl StudyOutcome {
    pub fn study(&self, p: usize) -> Option<&DegreeStudy> {
        self.studies.iter().find(|s| s.degree == p)
    }
}

/// h-refinement study over every configured degree and mesh level, run in
/// parallel over `(level, p)`. Failures are recorded, not fatal.
pub fn run_study_in_memory(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let u = cfg.problem.solution()?;
    let meshes = build_meshes(&cfg.mesh, cfg.n_levels())?;
    let extras = CaseExtras {
        condition: cfg.output.condition,
        coercivity: cfg.output.coercivity,
    };
    let jobs: Vec<(usize, usize)> = cfg
        .degrees
        .iter()
        .flat_map(|&p| (0..meshes.len()).map(move |l| (p, l)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(p, l)| solve_case(&meshes[l], l, p, &cfg.penalty, u.as_ref(), &cfg.solve, extras))
        .collect();
    let mut studies = Vec::new();
    let mut failures = Vec::new();
    for &p in &cfg.degrees {
        let mut cases = Vec::new();
        for ((q, l), r) in jobs.iter().zip(&results) {
            if *q != p {
                continue;
            }
            match r {
                Ok(c) => cases.push(c.clone()),
                Err(e) => failures.push((p, *l, e.to_string())),
            }
        }
        let reports: Vec<ErrorReport> = cases.iter().map(|c| c.errors.clone()).collect();
        studies.push(DegreeStudy {
            degree: p,
            cases,
            rates: eoc_table(&reports, cfg.output.size_measure),
        });
    }
    Ok(StudyOutcome {
        config: cfg.clone(),
        problem: u.name(),
        studies,
        failures,
    })
}

/// Runs the study and writes `rates_p{p}.csv`, `study.json` and
/// `rates.gp` to `out`.
pub fn run_study(cfg: &StudyConfig, out: &Path) -> Result<StudyOutcome> {
    let outcome = run_study_in_memory(cfg)?;
    write_study(&outcome, out)?;
    Ok(outcome)
}

pub fn write_study(outcome: &StudyOutcome, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for s in &outcome.studies {
        let f = std::fs::File::create(out.join(format!("rates_p{}.csv", s.degree)))?;
        write_csv(&s.rates, std::io::BufWriter::new(f))?;
    }
    let json = serde_json::to_string_pretty(outcome).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out.join("study.json"), json)?;
    std::fs::write(out.join("rates.gp"), gnuplot_script(outcome))?;
    Ok(())
}

fn gnuplot_script(outcome: &StudyOutcome) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset logscale xy\nset key top left\nset xlabel 'h'\nset ylabel 'error'\n",
    );
    let plots: Vec<String> = outcome
        .studies
        .iter()
        .flat_map(|st| {
            let p = st.degree;
            [(4, "DG"), (5, "H1"), (6, "L2")]
                .map(|(col, name)| format!("'rates_p{p}.csv' every ::1 using 2:{col} with linespoints title '{name}, p = {p}'"))
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PSweepRow {
    pub degree: usize,
    pub dofs: usize,
    pub err_dg: f64,
    /// Error at the level of the solver tolerance.
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PSweep {
    pub rows: Vec<PSweepRow>,
    /// Least-squares fit `ln err = intercept + slope p`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// p-refinement on a fixed mesh. Rows flagged `exact` are left out of the
/// exponential fit.
pub fn run_prefinement(
    mesh: &PolyMesh,
    degrees: &[usize],
    params: &PenaltyParams,
    u: &dyn ExactSolution,
    opts: &SolveOptions,
) -> Result<PSweep> {
    let rows = degrees
        .par_iter()
        .map(|&p| {
            let c = solve_case(mesh, 0, p, params, u, opts, CaseExtras::default())?;
            let exact = u.polynomial_degree().is_some_and(|d| d <= p);
            Ok(PSweepRow {
                degree: p,
                dofs: c.errors.dofs,
                err_dg: c.errors.err_dg,
                exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit: Vec<&PSweepRow> = rows.iter().filter(|r| !r.exact && r.err_dg > 0.0).collect();
    let x: Vec<f64> = fit.iter().map(|r| r.degree as f64).collect();
    let y: Vec<f64> = fit.iter().map(|r| r.err_dg.ln()).collect();
    let (slope, intercept, r_squared) = if x.len() >= 2 {
        linear_fit(&x, &y)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(PSweep {
        rows,
        slope,
        intercept,
        r_squared,
    })
}
