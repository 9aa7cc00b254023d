//! `polydg`: meshes, single solves, convergence studies and inequality checks.

use clap::{Args, Parser, Subcommand, ValueEnum};
use polydg::mesh::{
    agglomerate, compute_metrics, generate_voronoi, read_mesh_file, structured_triangles, write_mesh_file, Diagonal,
    Rect,
};
use polydg::study::{build_mesh, run_prefinement, run_study, solve_case, CaseExtras, MeshFamily, StudyConfig};
use polydg::verify::{mesh_suites, random_triangles, simplex_suite, SuiteReport};
use polydg::{Error, PolyMesh};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit status when an inequality check finds a violated bound.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "polydg", version, about = "Interior-penalty DG for the biharmonic problem on polygonal meshes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Study configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the mesh seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, agglomerate or inspect meshes.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// One assemble-solve-evaluate run.
    Solve {
        /// Mesh level from the configuration.
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Polynomial degree (default: the first configured one).
        #[arg(long)]
        degree: Option<usize>,
    },
    /// h-refinement study over every configured degree and level.
    Study,
    /// p-refinement on one mesh level.
    Psweep {
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Degrees to sweep (default: the configured ones).
        #[arg(long, value_delimiter = ',')]
        degrees: Vec<usize>,
    },
    /// Inverse-inequality suites.
    Verify {
        /// Random triangles for the simplex trace suite.
        #[arg(long, default_value_t = 1000)]
        triangles: usize,
        /// Largest degree checked.
        #[arg(long, default_value_t = 6)]
        p_max: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFamily {
    Voronoi,
    Triangles,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Voronoi or structured triangle mesh of the unit square.
    Generate {
        #[arg(long, value_enum, default_value_t = GenFamily::Voronoi)]
        family: GenFamily,
        /// Cell count (Voronoi) or squares per side (triangles).
        #[arg(long)]
        cells: usize,
        #[arg(long, default_value_t = 100)]
        lloyd_iters: usize,
    },
    /// Agglomerate a fine mesh into `cells` polygons.
    Agglomerate {
        #[arg(long)]
        cells: usize,
        /// Fine mesh file (default: a structured triangulation).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Squares per side of the default fine triangulation.
        #[arg(long, default_value_t = 64)]
        fine_n: usize,
    },
    /// Print regularity metrics of a mesh file as JSON.
    Inspect { path: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Violation,
    Partial(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Core(Error::Config(e.to_string())))
}

fn load_config(g: &Global) -> Result<StudyConfig, Failure> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = StudyConfig::from_file(path)?;
    if let Some(s) = g.seed {
        cfg.mesh.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn save_mesh(mesh: &PolyMesh, out: Option<&Path>) -> Result<(), Failure> {
    let out = out.ok_or_else(|| Error::Config("mesh output needs --out".into()))?;
    write_mesh_file(mesh, out)?;
    log::info!("wrote {} cells to {}", mesh.n_cells(), out.display());
    Ok(())
}

fn run_mesh(cmd: &MeshCommand, g: &Global) -> Result<(), Failure> {
    let seed = g.seed.unwrap_or(1);
    let out = g.out.as_deref();
    match *cmd {
        MeshCommand::Generate {
            family,
            cells,
            lloyd_iters,
        } => {
            let mesh = match family {
                GenFamily::Voronoi => {
                    let gm = generate_voronoi(Rect::unit_square(), cells, lloyd_iters, seed)?;
                    gm.diagnostics.iter().for_each(|d| log::warn!("{d}"));
                    gm.mesh
                }
                GenFamily::Triangles => structured_triangles(Rect::unit_square(), cells, cells, Diagonal::Uniform)?,
            };
            save_mesh(&mesh, out)
        }
        MeshCommand::Agglomerate {
            cells,
            ref input,
            fine_n,
        } => {
            let fine = match input {
                Some(p) => read_mesh_file(p)?,
                None => structured_triangles(Rect::unit_square(), fine_n, fine_n, Diagonal::Uniform)?,
            };
            let gm = agglomerate(&fine, cells, seed)?;
            gm.diagnostics.iter().for_each(|d| log::warn!("{d}"));
            save_mesh(&gm.mesh, out)
        }
        MeshCommand::Inspect { ref path } => {
            let mesh = read_mesh_file(path)?;
            let metrics = compute_metrics(&mesh, &vec![2; mesh.n_cells()]);
            let summary = serde_json::json!({
                "cells": mesh.n_cells(),
                "faces": mesh.n_faces(),
                "h_max": mesh.h_max(),
                "h_mean": mesh.h_mean(),
                "metrics": metrics,
            });
            write_or_print(out, &to_json(&summary)?)
        }
    }
}

fn run_solve(cfg: &StudyConfig, level: usize, degree: Option<usize>) -> Result<(), Failure> {
    if level >= cfg.n_levels() {
        return Err(Error::Config(format!("level {level} out of range (have {})", cfg.n_levels())).into());
    }
    let p = degree.unwrap_or(cfg.degrees[0]);
    let u = cfg.problem.solution()?;
    let mesh = build_mesh(&cfg.mesh, level)?;
    let extras = CaseExtras {
        condition: cfg.output.condition,
        coercivity: cfg.output.coercivity,
    };
    let case = solve_case(&mesh, level, p, &cfg.penalty, u.as_ref(), &cfg.solve, extras)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    std::fs::write(cfg.output.dir.join("case.json"), to_json(&case)?)?;
    println!(
        "p = {p}, {} cells, {} dofs: dg {:.4e}  h1 {:.4e}  l2 {:.4e}",
        case.n_cells, case.errors.dofs, case.errors.err_dg, case.errors.err_h1, case.errors.err_l2
    );
    Ok(())
}

fn run_study_cmd(cfg: &StudyConfig) -> Result<(), Failure> {
    let outcome = run_study(cfg, &cfg.output.dir)?;
    for s in &outcome.studies {
        println!("p = {}", s.degree);
        for r in &s.rates {
            let fmt = |x: Option<f64>| x.map_or("    -".into(), |v| format!("{v:5.2}"));
            println!(
                "  {:>7} dofs  dg {:.3e} ({})  h1 {:.3e} ({})  l2 {:.3e} ({})",
                r.report.dofs,
                r.report.err_dg,
                fmt(r.eoc_dg),
                r.report.err_h1,
                fmt(r.eoc_h1),
                r.report.err_l2,
                fmt(r.eoc_l2)
            );
        }
    }
    for (p, l, msg) in &outcome.failures {
        log::error!("p = {p}, level {l}: {msg}");
    }
    match outcome.failures.len() {
        0 => Ok(()),
        n => Err(Failure::Partial(n)),
    }
}

fn run_psweep(cfg: &StudyConfig, level: usize, degrees: &[usize]) -> Result<(), Failure> {
    let degrees = if degrees.is_empty() { &cfg.degrees[..] } else { degrees };
    let u = cfg.problem.solution()?;
    let mesh = build_mesh(&cfg.mesh, level)?;
    let sweep = run_prefinement(&mesh, degrees, &cfg.penalty, u.as_ref(), &cfg.solve)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    let mut csv = String::from("degree,dofs,err_dg,exact\n");
    for r in &sweep.rows {
        csv.push_str(&format!("{},{},{:e},{}\n", r.degree, r.dofs, r.err_dg, r.exact));
        println!("p = {}  {:>6} dofs  dg {:.4e}{}", r.degree, r.dofs, r.err_dg, if r.exact { "  (exact)" } else { "" });
    }
    std::fs::write(cfg.output.dir.join("psweep.csv"), csv)?;
    std::fs::write(cfg.output.dir.join("psweep.json"), to_json(&sweep)?)?;
    println!("ln err = {:.4} + {:.4} p, R² = {:.4}", sweep.intercept, sweep.slope, sweep.r_squared);
    Ok(())
}

fn run_verify(g: &Global, triangles: usize, p_max: usize) -> Result<(), Failure> {
    let seed = g.seed.unwrap_or(1);
    let mut reports: Vec<SuiteReport> = vec![simplex_suite(&random_triangles(triangles, seed), p_max, 0)?];
    let out_dir = match &g.config {
        Some(_) => {
            let cfg = load_config(g)?;
            let degrees: Vec<usize> = (0..=p_max).collect();
            for level in 0..cfg.n_levels() {
                let mesh = build_mesh(&cfg.mesh, level)?;
                let label = match cfg.mesh.family {
                    MeshFamily::File => format!("{}", cfg.mesh.files[level].display()),
                    f => format!("{f:?}-{}", cfg.mesh.sizes[level]).to_lowercase(),
                };
                reports.extend(mesh_suites(&label, &mesh, &degrees)?);
            }
            cfg.output.dir
        }
        None => g.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    for r in &reports {
        println!(
            "{:<40} {:>7} checks  min slack {:.3e}  {}",
            r.suite,
            r.checks,
            r.min_slack,
            if r.passed() { "ok" } else { "VIOLATED" }
        );
    }
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("verify.json"), to_json(&reports)?)?;
    let violations: Vec<_> = reports.iter().flat_map(|r| r.violations.iter()).collect();
    if violations.is_empty() {
        return Ok(());
    }
    std::fs::write(out_dir.join("witness.json"), to_json(&violations)?)?;
    Err(Failure::Violation)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Mesh(m) => run_mesh(m, g),
        Command::Solve { level, degree } => run_solve(&load_config(g)?, *level, *degree),
        Command::Study => run_study_cmd(&load_config(g)?),
        Command::Psweep { level, degrees } => run_psweep(&load_config(g)?, *level, degrees),
        Command::Verify { triangles, p_max } => run_verify(g, *triangles, *p_max),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => {
            eprintln!("error: an inequality bound is violated (witness written to witness.json)");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(Failure::Partial(n)) => {
            eprintln!("error: {n} solve(s) failed; partial results were written");
            ExitCode::FAILURE
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
