//! Solving, flux equilibration, the guaranteed error estimator, marking and
//! the adaptive loop.
//!
//! All loss-norm quantities use peak phasor amplitudes: `‖J‖²_ρ = ∫ ρ J·J*`,
//! which is twice the time-averaged eddy-current loss.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::assembly::{
    assemble_equilibration_1, assemble_equilibration_2, assemble_msfem, constraint_residual, Orders, ProblemSetup,
    SparseSystem,
};
use crate::error::{Error, Result};
use crate::fespace::{locate, ElementGeometry, H1Space, HCurlSpace};
use crate::linsolve;
use crate::mesh::{ancestor_key, Mesh2D, Region, TriKey};
use crate::quadrature::{gauss_interval, triangle_rule};
use crate::thickness::{eval_phi2_derivative, eval_shape, Shape};

/// Solved main problem.
#[derive(Debug, Clone)]
pub struct MsfemSolution {
    setup: ProblemSetup,
    t_space: HCurlSpace,
    phi_space: H1Space,
    t2: Vec<C64>,
    phi0: Vec<C64>,
    n_dofs: usize,
}

impl MsfemSolution {
    /// Wraps coefficient vectors; `n_dofs` is the number of free unknowns.
    pub fn new(setup: ProblemSetup, t2: Vec<C64>, phi0: Vec<C64>, n_dofs: usize) -> Result<Self> {
        let t_space = setup.t_space();
        let phi_space = setup.phi_space();
        if t2.len() != t_space.n_dofs() || phi0.len() != phi_space.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "coefficient lengths ({}, {}) do not match the spaces ({}, {})",
                t2.len(),
                phi0.len(),
                t_space.n_dofs(),
                phi_space.n_dofs()
            )));
        }
        Ok(Self { setup, t_space, phi_space, t2, phi0, n_dofs })
    }

    pub fn setup(&self) -> &ProblemSetup {
        &self.setup
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        self.setup.mesh()
    }

    pub fn t_space(&self) -> &HCurlSpace {
        &self.t_space
    }

    pub fn phi_space(&self) -> &H1Space {
        &self.phi_space
    }

    pub fn t2(&self) -> &[C64] {
        &self.t2
    }

    pub fn phi0(&self) -> &[C64] {
        &self.phi0
    }

    /// Free unknowns of the main system.
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// `‖curl T_2D/1D‖²_ρ` over the conductor.
    pub fn loss_norm_sq(&self) -> f64 {
        loss_norm_sq(&self.setup, &self.t_space, &self.t2).expect("solution lives on the conductor")
    }

    /// Time-averaged eddy-current loss of one sheet over the modelled
/// cross-section (W).
    pub fn losses(&self) -> f64 {
        0.5 * self.loss_norm_sq()
    }
}

/// Assembles and solves the main problem.
pub fn solve_msfem(setup: &ProblemSetup) -> Result<MsfemSolution> {
    let sys = assemble_msfem(setup)?;
    let x = linsolve::solve(&sys.matrix, &sys.rhs)?;
    let t2 = sys.layout.extract(&x, 0);
    let phi0 = sys.layout.extract(&x, 1);
    MsfemSolution::new(setup.clone(), t2, phi0, sys.layout.n_dofs())
}

/// Solution of both equilibration problems.
#[derive(Debug, Clone)]
pub struct EquilibratedFlux {
    flux_space: H1Space,
    pub gamma0: Vec<C64>,
    pub phi1: Vec<C64>,
    pub lambda1: Vec<C64>,
    pub gamma2: Vec<C64>,
    pub phi3: Vec<C64>,
    pub lambda2: Vec<C64>,
    /// Constraint residuals in the multiplier dual norm, relative.
    pub residuals: [f64; 2],
}

impl EquilibratedFlux {
    pub fn flux_space(&self) -> &H1Space {
        &self.flux_space
    }
}

fn solve_saddle(sys: &SparseSystem) -> Result<(Vec<C64>, f64)> {
    let x = linsolve::solve(&sys.matrix, &sys.rhs)?;
    let r = constraint_residual(sys, &x)?;
    Ok((x, r))
}

/// Solves both saddle problems (concurrently; they are independent).
pub fn equilibrate(setup: &ProblemSetup, sol: &MsfemSolution) -> Result<EquilibratedFlux> {
    let (a, b) = rayon::join(
        || -> Result<_> {
            let sys = assemble_equilibration_1(setup, sol)?;
            let (x, r) = solve_saddle(&sys)?;
            Ok((sys, x, r))
        },
        || -> Result<_> {
            let sys = assemble_equilibration_2(setup, sol)?;
            let (x, r) = solve_saddle(&sys)?;
            Ok((sys, x, r))
        },
    );
    let (s1, x1, r1) = a?;
    let (s2, x2, r2) = b?;
    Ok(EquilibratedFlux {
        flux_space: setup.flux_space(),
        gamma0: s1.layout.extract(&x1, 0),
        phi1: s1.layout.extract(&x1, 1),
        lambda1: s1.layout.extract(&x1, 2),
        gamma2: s2.layout.extract(&x2, 0),
        phi3: s2.layout.extract(&x2, 1),
        lambda2: s2.layout.extract(&x2, 2),
        residuals: [r1, r2],
    })
}

fn dot(a: [C64; 2], b: [C64; 2]) -> C64 {
    a[0] * b[0].conj() + a[1] * b[1].conj()
}

/// `∫ ρ̄φ₂'² |T₂|² + ρ̄φ₂² |curl T₂|²` per conductor triangle.
pub fn loss_norm_per_element(setup: &ProblemSetup, space: &HCurlSpace, coeffs: &[C64]) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    if coeffs.len() != space.n_dofs() {
        return Err(Error::InvalidArgument("coefficient vector does not match the space".into()));
    }
    let c = &setup.coefficients().rho;
    let rule = triangle_rule(2 * space.order());
    let out = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| -> Result<f64> {
            if !space.is_active(t) {
                return Ok(0.0);
            }
            let geo = ElementGeometry::new(mesh, t);
            let mut s = 0.0;
            for q in &rule {
                let (v, cu) = space.eval_local(coeffs, t, q.bary);
                let val = c.dphi2_sq * dot(v, v).re + c.phi2_sq * cu.norm_sqr();
                if mesh.region(t) != Region::Conductor && val != 0.0 {
                    return Err(Error::Domain(format!("field is nonzero on non-conducting triangle {t}")));
                }
                s += q.weight * 2.0 * geo.area * val;
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(out)
}

/// Loss norm squared of the current `curl(φ₂ T₂)` (peak convention).
pub fn loss_norm_sq(setup: &ProblemSetup, space: &HCurlSpace, coeffs: &[C64]) -> Result<f64> {
    Ok(loss_norm_per_element(setup, space, coeffs)?.iter().sum())
}

/// Elementwise estimator contributions `η²_T` on the conductor.
#[derive(Debug, Clone)]
pub struct IndicatorField {
    values: Vec<f64>,
    conductor: Vec<usize>,
    total: f64,
}

impl IndicatorField {
    /// Builds a field from per-triangle values; `conductor` lists the
    /// triangles that carry indicators.
    pub fn new(values: Vec<f64>, conductor: Vec<usize>) -> Self {
        let total = conductor.iter().map(|&t| values[t]).sum();
        Self { values, conductor, total }
    }

    /// Per-triangle values (zero off the conductor).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn conductor_triangles(&self) -> &[usize] {
        &self.conductor
    }

    pub fn eta_sq(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn eta_total(&self) -> f64 {
        self.total.sqrt()
    }
}

/// Integrand of `‖σγ - curl T_2D/1D‖²_ρ` after integration over the sheet
/// thickness, at one point of the plane.
#[allow(clippy::too_many_arguments)]
pub fn estimator_density(
    setup: &ProblemSetup,
    grad_phi1: [C64; 2],
    grad_phi3: [C64; 2],
    gamma0: C64,
    gamma2: C64,
    t2: [C64; 2],
    curl_t2: C64,
) -> f64 {
    let co = setup.coefficients();
    let (s, u, rho) = (&co.sigma, &co.unit, &co.rho);
    let k = setup.profile().k_const();
    let r = [-t2[1], t2[0]];
    let g1 = grad_phi1;
    let g3 = grad_phi3;
    let c = curl_t2;
    s.phi1hat_sq * dot(g1, g1).re + s.phi3hat_sq * dot(g3, g3).re
        + s.phi1hat_phi3hat * 2.0 * dot(g1, g3).re
        - k * u.phi1hat_sq * 2.0 * dot(g1, r).re
        - k * u.phi1hat_phi3hat * 2.0 * dot(g3, r).re
        + k * k * rho.phi1hat_sq * dot(r, r).re
        + s.phi0_sq_sheet * gamma0.norm_sqr()
        + s.phi0_phi2 * 2.0 * (gamma0 * gamma2.conj()).re
        + s.phi2_sq * gamma2.norm_sqr()
        - u.phi0_phi2 * 2.0 * (gamma0 * c.conj()).re
        - u.phi2_sq * 2.0 * (gamma2 * c.conj()).re
        + rho.phi2_sq * c.norm_sqr()
}

fn indicator_rule(setup: &ProblemSetup) -> Vec<crate::quadrature::TriPoint> {
    let o = setup.orders();
    triangle_rule(2 * o.edge.max(o.flux).max(o.h1) + 2)
}

/// Integrates the estimator density over every conductor triangle.
pub fn evaluate_indicators(setup: &ProblemSetup, sol: &MsfemSolution, flux: &EquilibratedFlux) -> Result<IndicatorField> {
    let mesh = setup.mesh();
    if flux.flux_space().mesh().forest_id() != mesh.forest_id()
        || flux.flux_space().mesh().n_triangles() != mesh.n_triangles()
    {
        return Err(Error::InvalidArgument("flux and setup live on different meshes".into()));
    }
    let fs = flux.flux_space();
    let rule = indicator_rule(setup);
    let mut values: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            if mesh.region(t) != Region::Conductor {
                return 0.0;
            }
            let geo = ElementGeometry::new(mesh, t);
            let mut s = 0.0;
            for q in &rule {
                let (g0, _) = fs.eval_local(&flux.gamma0, t, q.bary);
                let (g2, _) = fs.eval_local(&flux.gamma2, t, q.bary);
                let (_, d1) = fs.eval_local(&flux.phi1, t, q.bary);
                let (_, d3) = fs.eval_local(&flux.phi3, t, q.bary);
                let (tv, tc) = sol.t_space().eval_local(sol.t2(), t, q.bary);
                s += q.weight * 2.0 * geo.area * estimator_density(setup, d1, d3, g0, g2, tv, tc);
            }
            s
        })
        .collect();
    let conductor: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| mesh.region(t) == Region::Conductor).collect();
    let total: f64 = conductor.iter().map(|&t| values[t]).sum();
    let scale = conductor.iter().map(|&t| values[t].abs()).sum::<f64>();
    for &t in &conductor {
        if values[t] < 0.0 {
            if values[t] < -1e-12 * total.max(0.0) && values[t] < -1e-14 * scale {
                return Err(Error::Consistency(format!(
                    "negative estimator contribution {:e} on triangle {t} (total {total:e})",
                    values[t]
                )));
            }
            values[t] = 0.0;
        }
    }
    Ok(IndicatorField::new(values, conductor))
}

/// Result of the marking rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    pub marked: Vec<usize>,
    /// All indicators vanish; nothing left to refine.
    pub converged: bool,
}

/// Marks every conductor triangle with `η²_T ≥ ½ max η²`.
pub fn mark(indicators: &IndicatorField) -> Result<Marking> {
    mark_with_threshold(indicators, 0.5)
}

/// Marks every conductor triangle with `η²_T ≥ threshold · max η²`.
pub fn mark_with_threshold(indicators: &IndicatorField, threshold: f64) -> Result<Marking> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let tris = indicators.conductor_triangles();
    if tris.is_empty() {
        return Err(Error::InvalidArgument("no conductor triangles to mark".into()));
    }
    let max = tris.iter().map(|&t| indicators.eta_sq(t)).fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Marking { marked: Vec::new(), converged: true });
    }
    let cut = threshold * max;
    let marked = tris.iter().copied().filter(|&t| indicators.eta_sq(t) >= cut).collect();
    Ok(Marking { marked, converged: false })
}

/// Reference for measuring the true discretization error.
#[derive(Debug, Clone)]
pub enum Reference {
    /// A finer 2D/1D solution in the same bisection forest.
    Overkill(Box<MsfemSolution>),
    /// The exact solution of an infinite sheet under a uniform tangential
    /// surface field (peak amplitude, A/m).
    AnalyticSlab { h_surface: [f64; 2] },
}

/// True error `‖curl T_ref - curl T_2D/1D‖²_ρ`, total and per triangle of
/// the solution mesh.
#[derive(Debug, Clone)]
pub struct TrueError {
    pub total: f64,
    pub per_element: Vec<f64>,
}

pub fn true_error_sq(setup: &ProblemSetup, sol: &MsfemSolution, reference: &Reference) -> Result<TrueError> {
    match reference {
        Reference::Overkill(r) => overkill_error(sol, r),
        Reference::AnalyticSlab { h_surface } => analytic_slab_error(setup, sol, *h_surface),
    }
}

/// Pairs `(solution triangle, reference triangle, integrate over the reference one)`
/// covering the conductor once.
fn common_refinement(a: &Mesh2D, b: &Mesh2D) -> Result<Vec<(usize, usize, bool)>> {
    if a.forest_id() != b.forest_id() {
        return Err(Error::InvalidArgument("meshes do not share a bisection forest".into()));
    }
    let ka = a.key_index();
    let kb = b.key_index();
    let find = |idx: &HashMap<TriKey, usize>, key: TriKey, from: u16| -> Option<usize> {
        (from..=key.1).find_map(|l| ancestor_key(key, l).and_then(|k| idx.get(&k).copied()))
    };
    let mut pairs = Vec::new();
    for t in 0..a.n_triangles() {
        if a.region(t) != Region::Conductor {
            continue;
        }
        if let Some(r) = find(&kb, a.lineage(t).key(), 0) {
            pairs.push((t, r, false));
        }
    }
    for r in 0..b.n_triangles() {
        if b.region(r) != Region::Conductor {
            continue;
        }
        if let Some(t) = find(&ka, b.lineage(r).key(), 1) {
            pairs.push((t, r, true));
        }
    }
    Ok(pairs)
}

fn overkill_error(sol: &MsfemSolution, r: &MsfemSolution) -> Result<TrueError> {
    let a = sol.mesh();
    let b = r.mesh();
    let pairs = common_refinement(a, b)?;
    let c = sol.setup().coefficients().rho;
    let deg = 2 * sol.t_space().order().max(r.t_space().order());
    let rule = triangle_rule(deg);
    let contrib: Vec<(usize, f64)> = pairs
        .par_iter()
        .map(|&(t, rt, on_ref)| {
            let (mesh, tri) = if on_ref { (b.as_ref(), rt) } else { (a.as_ref(), t) };
            let geo = ElementGeometry::new(mesh, tri);
            // identical triangles share the quadrature points exactly
            let same = a.corners(t) == b.corners(rt);
            let mut s = 0.0;
            for q in &rule {
                let p = geo.point(q.bary);
                let ba = if on_ref && !same { a.barycentric(t, p) } else { q.bary };
                let bb = if on_ref || same { q.bary } else { b.barycentric(rt, p) };
                let (v1, c1) = sol.t_space().eval_local(sol.t2(), t, ba);
                let (v2, c2) = r.t_space().eval_local(r.t2(), rt, bb);
                let dv = [v1[0] - v2[0], v1[1] - v2[1]];
                let dc = c1 - c2;
                s += q.weight * 2.0 * geo.area * (c.dphi2_sq * dot(dv, dv).re + c.phi2_sq * dc.norm_sqr());
            }
            (t, s)
        })
        .collect();
    let mut per = vec![0.0; a.n_triangles()];
    for (t, s) in contrib {
        per[t] += s;
    }
    Ok(TrueError { total: per.iter().sum(), per_element: per })
}

/// Exact current density of an infinite sheet at height `z`: with
/// `H(z) = H₀ cosh(kz)/cosh(kd/2)`, `k² = iωμσ`, the current is
/// `J = (-∂H_y/∂z, ∂H_x/∂z, 0)`.
pub fn slab_current(setup: &ProblemSetup, h_surface: [f64; 2], z: f64) -> [C64; 3] {
    let m = setup.materials();
    let k = (C64::new(0.0, setup.omega() * m.mu_fe * m.sigma)).sqrt();
    let d = setup.profile().d_fe();
    let f = k * (k * z).sinh() / (k * 0.5 * d).cosh();
    [-f * h_surface[1], f * h_surface[0], C64::new(0.0, 0.0)]
}

fn analytic_slab_error(setup: &ProblemSetup, sol: &MsfemSolution, h0: [f64; 2]) -> Result<TrueError> {
    let mesh = sol.mesh();
    let profile = *setup.profile();
    let rho = 1.0 / setup.materials().sigma;
    let half = 0.5 * profile.d_fe();
    let zq = gauss_interval(24, -half, half);
    let rule = triangle_rule(2 * sol.t_space().order() + 2);
    let per: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| -> Result<f64> {
            if mesh.region(t) != Region::Conductor {
                return Ok(0.0);
            }
            let geo = ElementGeometry::new(mesh, t);
            let mut s = 0.0;
            for q in &rule {
                let (tv, tc) = sol.t_space().eval_local(sol.t2(), t, q.bary);
                let mut line = 0.0;
                for &(z, wz) in &zq {
                    let dp = eval_phi2_derivative(z, &profile);
                    let p2 = eval_shape(Shape::Phi2, z, &profile)?;
                    let jh = [-tv[1] * dp, tv[0] * dp, tc * p2];
                    let je = slab_current(setup, h0, z);
                    line += wz * rho * (0..3).map(|i| (jh[i] - je[i]).norm_sqr()).sum::<f64>();
                }
                s += q.weight * 2.0 * geo.area * line;
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrueError { total: per.iter().sum(), per_element: per })
}

/// Solution on a mesh refined `levels` times uniformly, with the edge order
/// raised by one (orders are capped at 2).
pub fn make_overkill(setup: &ProblemSetup, levels: usize) -> Result<MsfemSolution> {
    if levels == 0 {
        return Err(Error::InvalidArgument("overkill needs at least one refinement level".into()));
    }
    let mut mesh = setup.mesh().as_ref().clone();
    for _ in 0..levels {
        mesh = mesh.uniform_refine();
    }
    let o = setup.orders();
    let orders = Orders { edge: (o.edge + 1).min(2), h1: (o.h1 + 1).min(2), flux: o.flux };
    let fine = setup.with_mesh(Arc::new(mesh))?.with_orders(orders)?;
    solve_msfem(&fine)
}

/// Options of the adaptive (or uniform) refinement loop.
#[derive(Debug, Clone)]
pub struct AdaptOptions {
    pub max_iterations: usize,
    pub dof_budget: usize,
    pub threshold: f64,
    pub uniform: bool,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self { max_iterations: 10, dof_budget: usize::MAX, threshold: 0.5, uniform: false }
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub n_dofs: usize,
    pub eta_total: f64,
    pub error: Option<f64>,
}

impl HistoryRow {
    pub fn efficiency(&self) -> Option<f64> {
        self.error.filter(|&e| e > 0.0).map(|e| self.eta_total / e)
    }
}

/// Everything computed in one iteration of the loop.
#[derive(Debug)]
pub struct IterationState<'a> {
    pub iteration: usize,
    pub setup: &'a ProblemSetup,
    pub solution: &'a MsfemSolution,
    pub flux: &'a EquilibratedFlux,
    pub indicators: &'a IndicatorField,
    pub error: Option<&'a TrueError>,
}

#[derive(Debug, Clone)]
pub struct AdaptHistory {
    pub rows: Vec<HistoryRow>,
    /// The loop stopped because all indicators vanished.
    pub converged: bool,
    pub final_mesh: Arc<Mesh2D>,
}

/// Solve, equilibrate, estimate, mark, refine; stops after
/// `max_iterations` refinements, once the DoF budget is reached, or when all
/// indicators vanish. `reference` (if any) provides the error column.
pub fn adaptive_loop(
    setup: &ProblemSetup,
    options: &AdaptOptions,
    reference: Option<&Reference>,
    mut observe: impl FnMut(&IterationState) -> Result<()>,
) -> Result<AdaptHistory> {
    let mut current = setup.clone();
    let mut rows = Vec::new();
    let mut converged = false;
    for iteration in 0..=options.max_iterations {
        let sol = solve_msfem(&current)?;
        let flux = equilibrate(&current, &sol)?;
        let ind = evaluate_indicators(&current, &sol, &flux)?;
        let err = reference.map(|r| true_error_sq(&current, &sol, r)).transpose()?;
        rows.push(HistoryRow {
            iteration,
            n_dofs: sol.n_dofs(),
            eta_total: ind.eta_total(),
            error: err.as_ref().map(|e| e.total.sqrt()),
        });
        observe(&IterationState {
            iteration,
            setup: &current,
            solution: &sol,
            flux: &flux,
            indicators: &ind,
            error: err.as_ref(),
        })?;
        if iteration == options.max_iterations || sol.n_dofs() >= options.dof_budget {
            break;
        }
        let next = if options.uniform {
            current.mesh().uniform_refine()
        } else {
            let m = mark_with_threshold(&ind, options.threshold)?;
            if m.converged {
                converged = true;
                break;
            }
            current.mesh().refine(&m.marked)?
        };
        current = current.with_mesh(Arc::new(next))?;
    }
    Ok(AdaptHistory { rows, converged, final_mesh: current.mesh().clone() })
}

/// Value of `T₂` at an arbitrary point of triangle `t` (domain error when
/// outside).
pub fn t2_at(sol: &MsfemSolution, p: [f64; 2], t: usize) -> Result<[C64; 2]> {
    let b = locate(sol.mesh(), t, p)?;
    if !sol.t_space().is_active(t) {
        return Err(Error::Domain(format!("triangle {t} is outside the conductor")));
    }
    Ok(sol.t_space().eval_local(sol.t2(), t, b).0)
}
