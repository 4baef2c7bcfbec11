//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::sync::Arc;
use std::time::Instant;

use msfem_eddy::assembly::ProblemSetup;
use msfem_eddy::estimator::{
    adaptive_loop, equilibrate, make_overkill, mark, solve_msfem, true_error_sq, AdaptOptions,
    IndicatorField, MsfemSolution, Reference,
};
use msfem_eddy::mesh::Region;
use msfem_eddy::reference::{l_shape_benchmark, merge_meshes, periodic_slab, slab_benchmark, slab_losses, spearman};
use msfem_eddy::thickness::{coefficient_table, ThicknessProfile};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 5-point Gauss-Legendre on [-1, 1]; exact for the degree-6 products below.
const GL5: [(f64, f64); 5] = [
    (-0.906179845938664, 0.236926885056189),
    (-0.538469310105683, 0.478628670499366),
    (0.0, 0.568888888888889),
    (0.538469310105683, 0.478628670499366),
    (0.906179845938664, 0.236926885056189),
];

fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL5.iter().map(|&(x, w)| h * w * f(m + h * x)).sum()
}

fn coefficient_tables() -> Check {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = 10f64.powf(rng.random_range(-5.0..-2.0));
        let d0 = d * rng.random_range(0.0..0.3);
        let (k_fe, k_0) = (10f64.powf(rng.random_range(-8.0..8.0)), 10f64.powf(rng.random_range(-8.0..8.0)));
        let p = ThicknessProfile::new(d, d0).unwrap();
        let t = coefficient_table(k_fe, k_0, &p);
        // profiles in the scaled variable s = 2z/d
        let phi1 = |z: f64| z;
        let phi2 = |z: f64| {
            let s = 2.0 * z / d;
            0.5 * 1.5f64.sqrt() * (s * s - 1.0)
        };
        let dphi2 = |z: f64| 6f64.sqrt() * 2.0 * z / (d * d);
        let phi3 = |z: f64| {
            let s = 2.0 * z / d;
            d * 6f64.sqrt() / 8.0 * s * (s * s / 3.0 - 1.0)
        };
        let sheet = |f: &dyn Fn(f64) -> f64| k_fe * integrate(-0.5 * d, 0.5 * d, f);
        let ins = 2.0 * k_0 * 0.5 * d0;
        let want = [
            sheet(&|z| phi1(z) * phi1(z)),
            sheet(&|z| phi2(z) * phi2(z)),
            sheet(&|z| dphi2(z) * dphi2(z)),
            sheet(&phi2),
            sheet(&|z| phi3(z) * phi3(z)),
            sheet(&|z| phi1(z) * phi3(z)),
            sheet(&|_| 1.0) + ins,
            sheet(&|_| 1.0),
        ];
        for ((_, got), want) in t.entries().iter().zip(want) {
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= 1e-12 && secs < 1.0, format!("max rel. deviation {worst:.2e} over 100 draws, {secs:.3} s"))
}

fn equilibration_residuals() -> Check {
    let mut setup = slab_benchmark(1).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        setup = setup.with_mesh(Arc::new(setup.mesh().uniform_refine())).unwrap();
        let sol = solve_msfem(&setup).unwrap();
        let f = equilibrate(&setup, &sol).unwrap();
        worst = worst.max(f.residuals[0]).max(f.residuals[1]);
    }
    verdict(worst <= 1e-8, format!("max constraint residual {worst:.2e} on 3 refinement levels"))
}

/// Solutions and indicators of the first `n` iterations of an adaptive run.
struct Run {
    steps: Vec<(ProblemSetup, MsfemSolution, IndicatorField)>,
}

fn adaptive_run(setup: &ProblemSetup, iterations: usize) -> Run {
    let mut steps = Vec::new();
    let opts = AdaptOptions { max_iterations: iterations, ..Default::default() };
    adaptive_loop(setup, &opts, None, |s| {
        steps.push((s.setup.clone(), s.solution.clone(), s.indicators.clone()));
        Ok(())
    })
    .unwrap();
    Run { steps }
}

impl Run {
    /// Overkill of the finest mesh, 3 uniform levels with raised edge order.
    fn reference(&self) -> Reference {
        let finest = &self.steps.last().unwrap().0;
        Reference::Overkill(Box::new(make_overkill(finest, 3).unwrap()))
    }
}

fn upper_bound(slab: &Run, reference: &Reference) -> Check {
    let mut lines = Vec::new();
    let mut ok = slab.steps.len() >= 5;
    for (setup, sol, ind) in &slab.steps {
        let err_sq = true_error_sq(setup, sol, reference).unwrap().total;
        let eta_sq = ind.total();
        ok &= eta_sq >= err_sq - 0.05 * eta_sq;
        lines.push(format!("{}:{:.3}", sol.n_dofs(), eta_sq / err_sq));
    }
    verdict(ok, format!("eta^2/err^2 per mesh (dofs:ratio) {}", lines.join(" ")))
}

fn efficiency_after_two(runs: &[(&str, &Run, &Reference)]) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, run, reference) in runs {
        let (setup, sol, ind) = &run.steps[2];
        let eff = ind.eta_total() / true_error_sq(setup, sol, reference).unwrap().total.sqrt();
        ok &= (1.0..=3.0).contains(&eff);
        parts.push(format!("{name} {eff:.3}"));
    }
    verdict(ok, format!("efficiency after 2 refinements: {}", parts.join(", ")))
}

fn local_correlation(runs: &[(&str, &Run, &Reference)]) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, run, reference) in runs {
        let (setup, sol, ind) = &run.steps[2];
        let err = true_error_sq(setup, sol, reference).unwrap();
        let mesh = setup.mesh();
        let cond: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| mesh.region(t) == Region::Conductor).collect();
        let eta: Vec<f64> = cond.iter().map(|&t| ind.eta_sq(t)).collect();
        let e: Vec<f64> = cond.iter().map(|&t| err.per_element[t]).collect();
        let rho = spearman(&eta, &e);
        ok &= rho >= 0.8;
        parts.push(format!("{name} {rho:.3}"));
    }
    verdict(ok, format!("Spearman(eta_T^2, err_T^2) after 2 refinements: {}", parts.join(", ")))
}

fn adaptive_beats_uniform() -> Check {
    let start = Instant::now();
    let setup = l_shape_benchmark(1).unwrap();
    let uniform = AdaptOptions { max_iterations: 4, uniform: true, ..Default::default() };
    let mut last_uniform = None;
    adaptive_loop(&setup, &uniform, None, |s| {
        last_uniform = Some((s.setup.clone(), s.solution.clone()));
        Ok(())
    })
    .unwrap();
    let (u_setup, u_sol) = last_uniform.unwrap();
    let budget = u_sol.n_dofs() / 2;

    let opts = AdaptOptions { max_iterations: 100, dof_budget: budget, ..Default::default() };
    let mut adaptive = Vec::new();
    adaptive_loop(&setup, &opts, None, |s| {
        // the step that crosses the budget is not admissible
        if s.solution.n_dofs() <= budget {
            adaptive.push((s.setup.clone(), s.solution.clone()));
        }
        Ok(())
    })
    .unwrap();
    let (a_setup, a_sol) = adaptive.last().unwrap();

    let merged = merge_meshes(a_setup.mesh(), u_setup.mesh()).unwrap();
    let reference =
        Reference::Overkill(Box::new(make_overkill(&setup.with_mesh(Arc::new(merged)).unwrap(), 1).unwrap()));
    let e_uniform = true_error_sq(&u_setup, &u_sol, &reference).unwrap().total.sqrt();
    let e_adaptive = true_error_sq(a_setup, a_sol, &reference).unwrap().total.sqrt();
    let secs = start.elapsed().as_secs_f64();
    let ratio = a_sol.n_dofs() as f64 / u_sol.n_dofs() as f64;
    verdict(
        e_adaptive <= e_uniform && ratio <= 0.5 && secs < 300.0,
        format!(
            "uniform {} dofs err {e_uniform:.3e}; adaptive {} dofs ({:.0}%) err {e_adaptive:.3e}; {secs:.1} s",
            u_sol.n_dofs(),
            a_sol.n_dofs(),
            100.0 * ratio
        ),
    )
}

fn analytic_losses() -> Check {
    let setup = periodic_slab(2).unwrap();
    let over = make_overkill(&setup, 3).unwrap();
    let m = setup.materials();
    let area = 1e-6;
    let want = slab_losses(setup.profile().d_fe(), m.sigma, m.mu_fe, 50.0, 1000.0) * area;
    let rel = (over.losses() / want - 1.0).abs();
    verdict(rel <= 0.01, format!("overkill {:.6e} W vs analytic {want:.6e} W, rel. {rel:.2e}", over.losses()))
}

fn marking_rule() -> Check {
    let mut rng = StdRng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        // some exact ties with the maximum and with zero
        let v: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            })
            .collect();
        let max = v.iter().cloned().fold(0.0, f64::max);
        let want: Vec<usize> = if max > 0.0 { (0..n).filter(|&i| v[i] >= 0.5 * max).collect() } else { Vec::new() };
        let got = mark(&IndicatorField::new(v, (0..n).collect())).unwrap().marked;
        mismatches += usize::from(got != want);
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches in 1000 random vectors"))
}

fn documented_scope() -> Check {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap_or_default();
    verdict(
        readme.contains("## Not reproduced"),
        "absolute error magnitudes of the full machine study are out of scope (README, \"Not reproduced\"); \
         criteria 3 to 6 are the property-based substitute"
            .into(),
    )
}

fn main() {
    let slab = adaptive_run(&slab_benchmark(1).unwrap(), 4);
    let slab_ref = slab.reference();
    let l_shape = adaptive_run(&l_shape_benchmark(1).unwrap(), 2);
    let l_ref = l_shape.reference();
    let runs = [("slab", &slab, &slab_ref), ("l-shape", &l_shape, &l_ref)];

    let results: Vec<(usize, &str, Check)> = vec![
        (1, "coefficient tables", coefficient_tables()),
        (2, "equilibration", equilibration_residuals()),
        (3, "upper bound", upper_bound(&slab, &slab_ref)),
        (4, "efficiency", efficiency_after_two(&runs)),
        (5, "adaptive vs uniform", adaptive_beats_uniform()),
        (6, "local correlation", local_correlation(&runs)),
        (7, "analytic losses", analytic_losses()),
        (8, "marking rule", marking_rule()),
        (9, "scope", documented_scope()),
    ];
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n} ({name}): PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL  {d}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
