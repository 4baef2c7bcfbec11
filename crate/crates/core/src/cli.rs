//! Command-line front end: `solve`, `adapt` and `check`.
//!
//! Exit codes: 0 success, 2 bad input (configuration, mesh file, missing
//! file), 3 solver failure, 1 anything else (e.g. the output directory is
//! not writable).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, ReferenceKind};
use crate::error::{Error, Result};
use crate::estimator::{
    adaptive_loop, equilibrate, evaluate_indicators, make_overkill, solve_msfem, AdaptHistory, Reference,
};
use crate::vtk;

#[derive(Debug, Parser)]
#[command(name = "msfem-eddy", version, about = "2D/1D eddy-current solver for laminated sheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve once, estimate, and write VTK plus a manifest.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the adaptive loop and write the convergence history.
    Adapt {
        config: PathBuf,
        /// Number of refinement steps (overrides the config).
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        dof_budget: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Refine every triangle instead of marking.
        #[arg(long)]
        uniform: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Validate a configuration and print the sheet data.
    Check { config: PathBuf },
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory (overrides `[output] directory`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::ConfigAt { .. }
        | Error::MeshFormat { .. }
        | Error::InvalidGeometry(_)
        | Error::InvalidArgument(_) => 2,
        Error::Singular { .. } | Error::Solver(_) | Error::Consistency(_) | Error::Domain(_) => 3,
        Error::Io(_) => 1,
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Solve { config, out } => solve(&config, out.out),
        Command::Adapt { config, max_iter, dof_budget, threshold, uniform, out } => {
            adapt(&config, AdaptOverrides { max_iter, dof_budget, threshold, uniform }, out.out)
        }
        Command::Check { config } => check(&config),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// `MSFEM_THREADS` sizes the global worker pool; results do not depend on it.
fn configure_threads() {
    if let Some(n) = std::env::var("MSFEM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails harmlessly if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn output_dir(cfg: &LoadedConfig, cli: Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli.unwrap_or_else(|| cfg.base_dir.join(&cfg.config.output.directory));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    orders: OrdersOut,
    gauges: [&'static str; 3],
    threshold: f64,
    threads: usize,
    results: serde_json::Value,
}

#[derive(Serialize)]
struct OrdersOut {
    edge: usize,
    h1: usize,
    flux: usize,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(dir: &Path, cfg: &LoadedConfig, command: &str, threshold: f64, results: serde_json::Value) -> Result<()> {
    let o = cfg.orders();
    let m = Manifest {
        tool: "msfem-eddy",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: sha256_hex(&cfg.text),
        orders: OrdersOut { edge: o.edge, h1: o.h1, flux: o.flux },
        gauges: [
            "Phi0: zero on symmetry edges; without any, fixed at the lowest boundary vertex",
            "T2: tangential trace zero on the rim of the conductor and on conductor/air interfaces",
            "equilibration: one stream-function value fixed per conductor component",
        ],
        threshold,
        threads: rayon::current_num_threads(),
        results,
    };
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &m).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_vtk(path: &Path, sol: &crate::estimator::MsfemSolution, ind: &crate::estimator::IndicatorField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    vtk::write_solution(&mut w, sol, Some(ind))?;
    w.flush()?;
    Ok(())
}

fn solve(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = LoadedConfig::from_path(path)?;
    let setup = cfg.setup()?;
    let dir = output_dir(&cfg, out)?;
    let sol = solve_msfem(&setup)?;
    let flux = equilibrate(&setup, &sol)?;
    let ind = evaluate_indicators(&setup, &sol, &flux)?;
    write_vtk(&dir.join("solution.vtk"), &sol, &ind)?;
    println!("dofs       {}", sol.n_dofs());
    println!("losses     {:.6e} W", sol.losses());
    println!("eta        {:.6e}", ind.eta_total());
    println!("residuals  {:.2e} {:.2e}", flux.residuals[0], flux.residuals[1]);
    let results = serde_json::json!({
        "n_dofs": sol.n_dofs(),
        "losses": sol.losses(),
        "eta_total": ind.eta_total(),
        "constraint_residuals": flux.residuals,
    });
    write_manifest(&dir, &cfg, "solve", cfg.config.adaptivity.threshold, results)
}

struct AdaptOverrides {
    max_iter: Option<usize>,
    dof_budget: Option<usize>,
    threshold: Option<f64>,
    uniform: bool,
}

fn adapt(path: &Path, ov: AdaptOverrides, out: Option<PathBuf>) -> Result<()> {
    let cfg = LoadedConfig::from_path(path)?;
    let setup = cfg.setup()?;
    let mut opts = cfg.adapt_options();
    if let Some(n) = ov.max_iter {
        opts.max_iterations = n;
    }
    if let Some(n) = ov.dof_budget {
        opts.dof_budget = n;
    }
    if let Some(t) = ov.threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidArgument(format!("--threshold must lie in (0, 1], got {t}")));
        }
        opts.threshold = t;
    }
    opts.uniform = ov.uniform;
    let dir = output_dir(&cfg, out)?;

    let a = &cfg.config.adaptivity;
    let reference = match a.reference {
        ReferenceKind::None => None,
        ReferenceKind::Overkill => Some(Reference::Overkill(Box::new(make_overkill(&setup, a.overkill_levels)?))),
        ReferenceKind::Analytic => Some(Reference::AnalyticSlab {
            h_surface: cfg.config.excitation.h_bs.expect("validated"),
        }),
    };

    let history = adaptive_loop(&setup, &opts, reference.as_ref(), |s| {
        write_vtk(&dir.join(format!("iter_{:03}.vtk", s.iteration)), s.solution, s.indicators)
    })?;
    write_history(&dir.join("history.csv"), &history)?;
    for r in &history.rows {
        match r.error {
            Some(e) => println!("{:3} {:8} eta {:.6e} err {:.6e}", r.iteration, r.n_dofs, r.eta_total, e),
            None => println!("{:3} {:8} eta {:.6e}", r.iteration, r.n_dofs, r.eta_total),
        }
    }
    let last = history.rows.last().expect("at least one iteration");
    let results = serde_json::json!({
        "iterations": history.rows.len(),
        "converged": history.converged,
        "final_n_dofs": last.n_dofs,
        "final_eta_total": last.eta_total,
        "final_error": last.error,
        "uniform": opts.uniform,
    });
    write_manifest(&dir, &cfg, "adapt", opts.threshold, results)
}

fn write_history(path: &Path, h: &AdaptHistory) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "n_dofs", "eta_total", "error", "efficiency"]).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
    for r in &h.rows {
        w.write_record([
            r.iteration.to_string(),
            r.n_dofs.to_string(),
            format!("{:.12e}", r.eta_total),
            opt(r.error),
            opt(r.efficiency()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn check(path: &Path) -> Result<()> {
    let cfg = LoadedConfig::from_path(path)?;
    let setup = cfg.setup()?;
    let p = setup.profile();
    let mesh = setup.mesh();
    let conductor = mesh.regions().iter().filter(|r| **r == crate::mesh::Region::Conductor).count();
    println!("configuration ok: {}", path.display());
    println!("d_Fe = {:.3} mm, d_0 = {:.3} mm, fill factor {:.4}", p.d_fe() * 1e3, p.d_0() * 1e3, p.fill_factor());
    println!(
        "mesh: {} vertices, {} triangles ({} conductor), min angle {:.1} deg",
        mesh.n_vertices(),
        mesh.n_triangles(),
        conductor,
        mesh.min_angle().to_degrees()
    );
    let o = setup.orders();
    println!("orders: edge {}, h1 {}, flux {}", o.edge, o.h1, o.flux);
    let c = setup.coefficients();
    for (name, table) in [("rho", &c.rho), ("sigma", &c.sigma), ("mu", &c.mu), ("mu_air", &c.mu_air), ("unit", &c.unit)] {
        println!("[{name}]");
        for (k, v) in table.entries() {
            println!("  {k:<26} {v:.6e}");
        }
    }
    if let crate::sources::Excitation::Sources(s) = setup.excitation() {
        for w in s.warnings() {
            println!("warning: {w}");
        }
    }
    Ok(())
}
