//! Problem description and assembly of the three linear systems: the main
//! 2D/1D problem for `(T₂, Φ₀)` and the two equilibration saddle problems
//! for `(γ₀, Φ₁, λ₁)` and `(γ₂, Φ₃, λ₂)`.
//!
//! Every thickness integral comes from a `CoefficientTable`; element loops
//! only integrate in the plane.
//!
//! Boundary conditions. `Outer` edges are flux walls for `Φ₀` (natural) and
//! carry `T₂ × n = 0` where they bound the conductor. `Symmetry` edges carry
//! `Φ₀ = 0` and leave `T₂` free. Interior conductor/air edges bound the
//! conductor and carry `T₂ × n = 0`. Without any `Symmetry` edge, `Φ₀` is
//! pinned at the lowest numbered vertex on the outer boundary.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::MsfemSolution;
use crate::fespace::{
    h1_local_basis, hcurl_local_basis, Domain, EdgeOrientation, ElementGeometry, H1Space, HCurlSpace, MultiplierSpace,
};
use crate::linsolve::CscMatrix;
use crate::mesh::{BoundaryTag, Mesh2D, Region};
use crate::quadrature::triangle_rule;
use crate::sources::Excitation;
use crate::thickness::{coefficient_table, CoefficientTable, ThicknessProfile};

pub const MU0: f64 = 4.0e-7 * PI;

const NONE: usize = usize::MAX;

/// Material data. The sheet has conductivity `sigma` and permeability
/// `mu_fe`; the insulation layer and the air region are non-conducting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Materials {
    pub sigma: f64,
    pub mu_fe: f64,
    pub mu_insulation: f64,
    pub mu_air: f64,
}

impl Materials {
    /// Electrical steel: σ = 2.08 MS/m, μ = 1000 μ₀, μ₀ elsewhere.
    pub fn electrical_steel() -> Self {
        Self { sigma: 2.08e6, mu_fe: 1000.0 * MU0, mu_insulation: MU0, mu_air: MU0 }
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        check("sigma", self.sigma)?;
        check("mu_fe", self.mu_fe)?;
        check("mu_insulation", self.mu_insulation)?;
        check("mu_air", self.mu_air)
    }
}

/// Polynomial orders: edge space for `T₂`, nodal space for `Φ₀`, and the
/// nodal space shared by `γ₀, γ₂, Φ₁, Φ₃` and the stream functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orders {
    pub edge: usize,
    pub h1: usize,
    pub flux: usize,
}

impl Default for Orders {
    fn default() -> Self {
        Self { edge: 1, h1: 2, flux: 2 }
    }
}

/// Thickness-integrated parameters, one table per weighting.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    /// weighted by ρ in the sheet
    pub rho: CoefficientTable,
    /// weighted by σ in the sheet
    pub sigma: CoefficientTable,
    /// weighted by μ_fe in the sheet and μ_insulation in the insulation
    pub mu: CoefficientTable,
    /// weighted by μ_air across the whole period
    pub mu_air: CoefficientTable,
    /// unweighted, sheet only
    pub unit: CoefficientTable,
}

#[derive(Debug, Clone)]
pub struct ProblemSetup {
    mesh: Arc<Mesh2D>,
    profile: ThicknessProfile,
    materials: Materials,
    frequency: f64,
    excitation: Excitation,
    orders: Orders,
    coeffs: Coefficients,
    orientation: EdgeOrientation,
}

impl ProblemSetup {
    pub fn new(
        mesh: Arc<Mesh2D>,
        profile: ThicknessProfile,
        materials: Materials,
        frequency: f64,
        excitation: Excitation,
        orders: Orders,
    ) -> Result<Self> {
        materials.validate()?;
        if !(frequency >= 0.0 && frequency.is_finite()) {
            return Err(Error::Config(format!("frequency must be non-negative, got {frequency}")));
        }
        for (name, o) in [("edge", orders.edge), ("h1", orders.h1), ("flux", orders.flux)] {
            if !(1..=2).contains(&o) {
                return Err(Error::Config(format!("{name} order must be 1 or 2, got {o}")));
            }
        }
        if !mesh.has_conductor() {
            return Err(Error::Config("the mesh has no conductor region".into()));
        }
        let coeffs = Coefficients {
            rho: coefficient_table(1.0 / materials.sigma, 0.0, &profile),
            sigma: coefficient_table(materials.sigma, 0.0, &profile),
            mu: coefficient_table(materials.mu_fe, materials.mu_insulation, &profile),
            mu_air: coefficient_table(materials.mu_air, materials.mu_air, &profile),
            unit: coefficient_table(1.0, 0.0, &profile),
        };
        Ok(Self { mesh, profile, materials, frequency, excitation, orders, coeffs, orientation: EdgeOrientation::LowToHigh })
    }

    /// Same problem on another mesh (e.g. after refinement).
    pub fn with_mesh(&self, mesh: Arc<Mesh2D>) -> Result<Self> {
        if !mesh.has_conductor() {
            return Err(Error::Config("the mesh has no conductor region".into()));
        }
        Ok(Self { mesh, ..self.clone() })
    }

    pub fn with_orders(&self, orders: Orders) -> Result<Self> {
        Self::new(self.mesh.clone(), self.profile, self.materials, self.frequency, self.excitation.clone(), orders)
            .map(|s| s.with_edge_orientation(self.orientation))
    }

    pub fn with_excitation(&self, excitation: Excitation) -> Result<Self> {
        Ok(Self { excitation, ..self.clone() })
    }

    /// Global sign convention of the edge DOFs of `T₂`. The solution does
    /// not depend on it.
    pub fn with_edge_orientation(&self, orientation: EdgeOrientation) -> Self {
        Self { orientation, ..self.clone() }
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn profile(&self) -> &ThicknessProfile {
        &self.profile
    }

    pub fn materials(&self) -> &Materials {
        &self.materials
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn excitation(&self) -> &Excitation {
        &self.excitation
    }

    pub fn orders(&self) -> Orders {
        self.orders
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn t_space(&self) -> HCurlSpace {
        HCurlSpace::with_orientation(self.mesh.clone(), self.orders.edge, Domain::Conductor, self.orientation)
            .expect("orders validated")
    }

    pub fn phi_space(&self) -> H1Space {
        H1Space::new(self.mesh.clone(), self.orders.h1, Domain::Full).expect("orders validated")
    }

    pub fn flux_space(&self) -> H1Space {
        H1Space::new(self.mesh.clone(), self.orders.flux, Domain::Conductor).expect("orders validated")
    }

    pub fn multiplier_space(&self) -> Result<MultiplierSpace> {
        MultiplierSpace::new(self.mesh.clone(), self.orders.flux)
    }

    /// Quadrature degree for products of basis functions (plus two when the
    /// source field is not constant).
    fn quad_degree(&self, a: usize, b: usize) -> usize {
        2 * a.max(b) + if self.excitation.is_uniform() { 0 } else { 2 }
    }
}

/// One block of unknowns with its constrained (eliminated) DOFs.
#[derive(Debug, Clone)]
pub struct DofBlock {
    pub name: &'static str,
    n_full: usize,
    map: Vec<usize>,
    n_free: usize,
    offset: usize,
}

impl DofBlock {
    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn constrained(&self) -> Vec<usize> {
        (0..self.n_full).filter(|&i| self.map[i] == NONE).collect()
    }
}

/// Maps the DOFs of several spaces onto the rows of one linear system;
/// constrained DOFs (homogeneous Dirichlet values and gauges) are dropped.
#[derive(Debug, Clone)]
pub struct DofLayout {
    blocks: Vec<DofBlock>,
    n: usize,
}

impl DofLayout {
    pub fn new(blocks: Vec<(&'static str, usize, Vec<usize>)>) -> Self {
        let mut out = Vec::new();
        let mut offset = 0;
        for (name, n_full, constrained) in blocks {
            let mut fixed = vec![false; n_full];
            for c in constrained {
                fixed[c] = true;
            }
            let mut map = vec![NONE; n_full];
            let mut k = 0;
            for i in 0..n_full {
                if !fixed[i] {
                    map[i] = offset + k;
                    k += 1;
                }
            }
            out.push(DofBlock { name, n_full, map, n_free: k, offset });
            offset += k;
        }
        Self { blocks: out, n: offset }
    }

    pub fn n_dofs(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[DofBlock] {
        &self.blocks
    }

    /// System row of DOF `dof` of block `b`, `None` when constrained.
    pub fn index(&self, b: usize, dof: usize) -> Option<usize> {
        Some(self.blocks[b].map[dof]).filter(|&i| i != NONE)
    }

    /// Full coefficient vector of block `b`, zeros at constrained DOFs.
    pub fn extract(&self, x: &[C64], b: usize) -> Vec<C64> {
        self.blocks[b]
            .map
            .iter()
            .map(|&i| if i == NONE { C64::new(0.0, 0.0) } else { x[i] })
            .collect()
    }

    /// Inverse of `extract`: restrict full block vectors to the free DOFs.
    pub fn compose(&self, parts: &[&[C64]]) -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); self.n];
        for (b, part) in parts.iter().enumerate() {
            for (d, &i) in self.blocks[b].map.iter().enumerate() {
                if i != NONE {
                    x[i] = part[d];
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<C64>,
    pub layout: DofLayout,
}

type Local = (Vec<(usize, usize, C64)>, Vec<(usize, C64)>);

fn collect(layout: DofLayout, locals: Vec<Local>) -> Result<SparseSystem> {
    let n = layout.n_dofs();
    let mut triplets = Vec::with_capacity(locals.iter().map(|l| l.0.len()).sum());
    let mut rhs = vec![C64::new(0.0, 0.0); n];
    for (t, r) in locals {
        triplets.extend(t);
        for (i, v) in r {
            rhs[i] += v;
        }
    }
    let matrix = CscMatrix::from_triplets(n, n, &triplets)?;
    Ok(SparseSystem { matrix, rhs, layout })
}

/// Adds `coef * local[i][j]` for every pair of mapped DOFs.
fn scatter(
    out: &mut Vec<(usize, usize, C64)>,
    layout: &DofLayout,
    (bi, di): (usize, &[usize]),
    (bj, dj): (usize, &[usize]),
    coef: C64,
    local: &[[f64; 8]],
    symmetric_pair: bool,
) {
    for (i, &gi) in di.iter().enumerate() {
        let Some(ri) = layout.index(bi, gi) else { continue };
        for (j, &gj) in dj.iter().enumerate() {
            let Some(rj) = layout.index(bj, gj) else { continue };
            let v = coef * local[i][j];
            out.push((ri, rj, v));
            if symmetric_pair {
                out.push((rj, ri, v));
            }
        }
    }
}

fn scatter_rhs(out: &mut Vec<(usize, C64)>, layout: &DofLayout, b: usize, dofs: &[usize], values: &[C64]) {
    for (k, &g) in dofs.iter().enumerate() {
        if let Some(r) = layout.index(b, g) {
            out.push((r, values[k]));
        }
    }
}

/// DOFs of the main problem fixed to zero: `T₂` on the conductor rim, `Φ₀`
/// on symmetry edges (or one gauge vertex).
pub fn main_constraints(setup: &ProblemSetup, t_space: &HCurlSpace, phi_space: &H1Space) -> (Vec<usize>, Vec<usize>) {
    let mesh = setup.mesh();
    let mut t_fixed = Vec::new();
    let mut p_fixed = Vec::new();
    let mut any_symmetry = false;
    for e in 0..mesh.n_edges() {
        let tag = mesh.boundary_tag(e);
        if mesh.is_conductor_boundary(e) && tag != Some(BoundaryTag::Symmetry) {
            t_fixed.extend(t_space.edge_dofs(e));
        }
        if tag == Some(BoundaryTag::Symmetry) {
            any_symmetry = true;
            p_fixed.extend(phi_space.edge_dofs(e));
        }
    }
    if !any_symmetry {
        let v = (0..mesh.n_edges())
            .filter(|&e| mesh.is_domain_boundary(e))
            .flat_map(|e| mesh.edge(e))
            .min()
            .expect("a finite mesh has boundary edges");
        p_fixed.push(phi_space.vertex_dof(v).expect("full-domain space covers every vertex"));
    }
    t_fixed.sort_unstable();
    t_fixed.dedup();
    p_fixed.sort_unstable();
    p_fixed.dedup();
    (t_fixed, p_fixed)
}

/// Main system with blocks `[T₂, Φ₀]`.
pub fn assemble_msfem(setup: &ProblemSetup) -> Result<SparseSystem> {
    let t_space = setup.t_space();
    let phi_space = setup.phi_space();
    let (t_fixed, p_fixed) = main_constraints(setup, &t_space, &phi_space);
    let layout = DofLayout::new(vec![
        ("T2", t_space.n_dofs(), t_fixed),
        ("Phi0", phi_space.n_dofs(), p_fixed),
    ]);
    let mesh = setup.mesh();
    let c = setup.coefficients();
    let iw = C64::new(0.0, setup.omega());
    let a_mass = C64::new(c.rho.dphi2_sq, 0.0) + iw * c.mu.phi2_sq;
    let a_curl = C64::new(c.rho.phi2_sq, 0.0);
    let a_tp = iw * c.mu.phi0_phi2;
    let a_pp_cond = iw * c.mu.phi0_sq_full;
    let a_pp_air = iw * c.mu_air.phi0_sq_full;
    let rule = triangle_rule(setup.quad_degree(setup.orders.edge, setup.orders.h1));
    let nt = t_space.local_count();
    let np = phi_space.local_count();

    let locals: Vec<Local> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let geo = ElementGeometry::new(mesh, t);
            let conductor = mesh.region(t) == Region::Conductor;
            let pd = phi_space.element_dofs(t).unwrap();
            let mut s_pp = [[0.0; 8]; 8];
            let mut f_p = [0.0; 6];
            let mut m_tt = [[0.0; 8]; 8];
            let mut c_tt = [[0.0; 8]; 8];
            let mut g_tp = [[0.0; 8]; 8];
            let mut f_t = [0.0; 8];
            let signs = t_space.local_signs(t);
            for q in &rule {
                let w = q.weight * 2.0 * geo.area;
                let h = setup.excitation.eval(geo.point(q.bary));
                let (_, pg) = h1_local_basis(setup.orders.h1, q.bary, &geo.grad_lambda);
                for i in 0..np {
                    for j in 0..np {
                        s_pp[i][j] += w * (pg[i][0] * pg[j][0] + pg[i][1] * pg[j][1]);
                    }
                    f_p[i] += w * (h[0] * pg[i][0] + h[1] * pg[i][1]);
                }
                if conductor {
                    let (tv, tc) = hcurl_local_basis(setup.orders.edge, q.bary, &geo.grad_lambda, signs);
                    for i in 0..nt {
                        for j in 0..nt {
                            m_tt[i][j] += w * (tv[i][0] * tv[j][0] + tv[i][1] * tv[j][1]);
                            c_tt[i][j] += w * tc[i] * tc[j];
                        }
                        for j in 0..np {
                            g_tp[i][j] += w * (tv[i][0] * pg[j][0] + tv[i][1] * pg[j][1]);
                        }
                        f_t[i] += w * (h[0] * tv[i][0] + h[1] * tv[i][1]);
                    }
                }
            }
            let mut trip = Vec::new();
            let mut rhs = Vec::new();
            let pd = &pd[..np];
            let a_pp = if conductor { a_pp_cond } else { a_pp_air };
            scatter(&mut trip, &layout, (1, pd), (1, pd), a_pp, &s_pp, false);
            let fp: Vec<C64> = (0..np).map(|i| -a_pp * f_p[i]).collect();
            scatter_rhs(&mut rhs, &layout, 1, pd, &fp);
            if conductor {
                let td = t_space.element_dofs(t).unwrap();
                let td = &td[..nt];
                scatter(&mut trip, &layout, (0, td), (0, td), a_mass, &m_tt, false);
                scatter(&mut trip, &layout, (0, td), (0, td), a_curl, &c_tt, false);
                scatter(&mut trip, &layout, (0, td), (1, pd), a_tp, &g_tp, true);
                let ft: Vec<C64> = (0..nt).map(|i| -a_tp * f_t[i]).collect();
                scatter_rhs(&mut rhs, &layout, 0, td, &ft);
            }
            (trip, rhs)
        })
        .collect();
    collect(layout, locals)
}

/// Gauged DOFs and the block layout shared by both equilibration systems.
fn equilibration_layout(flux: &H1Space, names: [&'static str; 3]) -> DofLayout {
    let gauge = flux.component_gauge_dofs();
    DofLayout::new(vec![
        (names[0], flux.n_dofs(), Vec::new()),
        (names[1], flux.n_dofs(), gauge.clone()),
        (names[2], flux.n_dofs(), gauge),
    ])
}

fn check_same_mesh(setup: &ProblemSetup, sol: &MsfemSolution) -> Result<()> {
    let a = setup.mesh();
    let b = sol.setup().mesh();
    if Arc::ptr_eq(a, b) || (a.forest_id() == b.forest_id() && a.n_triangles() == b.n_triangles()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("solution lives on a different mesh than the setup".into()))
    }
}

/// Per-quadrature-point data of the primal solution.
struct PrimalAt {
    t2: [C64; 2],
    curl_t2: C64,
    grad_phi0: [C64; 2],
}

fn primal_at(sol: &MsfemSolution, t: usize, bary: [f64; 3]) -> PrimalAt {
    let (t2, curl_t2) = sol.t_space().eval_local(sol.t2(), t, bary);
    let (_, grad_phi0) = sol.phi_space().eval_local(sol.phi0(), t, bary);
    PrimalAt { t2, curl_t2, grad_phi0 }
}

/// Which saddle problem to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Equilibration {
    First,
    Second,
}

fn assemble_equilibration(setup: &ProblemSetup, sol: &MsfemSolution, which: Equilibration) -> Result<SparseSystem> {
    check_same_mesh(setup, sol)?;
    let flux = setup.flux_space();
    let names = match which {
        Equilibration::First => ["gamma0", "Phi1", "lambda1"],
        Equilibration::Second => ["gamma2", "Phi3", "lambda2"],
    };
    let layout = equilibration_layout(&flux, names);
    let mesh = setup.mesh();
    let c = setup.coefficients();
    let k = setup.profile().k_const();
    let iwmu = C64::new(0.0, setup.omega() * setup.materials().mu_fe);
    let (a_mass, a_stiff) = match which {
        Equilibration::First => (c.sigma.phi0_sq_sheet, c.sigma.phi1hat_sq),
        Equilibration::Second => (c.sigma.phi2_sq, c.sigma.phi3hat_sq),
    };
    let po = setup.orders.flux;
    let rule = triangle_rule(setup.quad_degree(po, setup.orders.edge.max(setup.orders.h1)));
    let nf = flux.local_count();

    let locals: Vec<Local> = (0..mesh.n_triangles())
        .into_par_iter()
        .filter(|&t| mesh.region(t) == Region::Conductor)
        .map(|t| {
            let geo = ElementGeometry::new(mesh, t);
            let fd = flux.element_dofs(t).unwrap();
            let fd = &fd[..nf];
            let mut m = [[0.0; 8]; 8];
            let mut s = [[0.0; 8]; 8];
            let mut r_min = [C64::new(0.0, 0.0); 6];
            let mut r_con = [C64::new(0.0, 0.0); 6];
            for q in &rule {
                let w = q.weight * 2.0 * geo.area;
                let (v, g) = h1_local_basis(po, q.bary, &geo.grad_lambda);
                let p = primal_at(sol, t, q.bary);
                let h = setup.excitation.eval(geo.point(q.bary));
                for i in 0..nf {
                    for j in 0..nf {
                        m[i][j] += w * v[i] * v[j];
                        s[i][j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                    let rot = [g[i][1], -g[i][0]];
                    match which {
                        Equilibration::First => {
                            // (-T₂y, T₂x)·∇χ and (∇Φ₀ + H_BS)·rot χ
                            r_min[i] += (p.t2[0] * g[i][1] - p.t2[1] * g[i][0]) * w;
                            r_con[i] += ((p.grad_phi0[0] + h[0]) * rot[0] + (p.grad_phi0[1] + h[1]) * rot[1]) * w;
                        }
                        Equilibration::Second => {
                            r_min[i] += p.curl_t2 * (w * v[i]);
                            r_con[i] += (p.t2[0] * rot[0] + p.t2[1] * rot[1]) * w;
                        }
                    }
                }
            }
            let mut trip = Vec::new();
            let mut rhs = Vec::new();
            let one = C64::new(1.0, 0.0);
            scatter(&mut trip, &layout, (0, fd), (0, fd), one * a_mass, &m, false);
            scatter(&mut trip, &layout, (1, fd), (1, fd), one * a_stiff, &s, false);
            scatter(&mut trip, &layout, (2, fd), (0, fd), one, &s, true);
            scatter(&mut trip, &layout, (2, fd), (1, fd), -one, &s, true);
            let (b_min, coef) = match which {
                Equilibration::First => (1, k * c.unit.phi1hat_sq),
                Equilibration::Second => (0, c.unit.phi2_sq),
            };
            let rm: Vec<C64> = (0..nf).map(|i| r_min[i] * coef).collect();
            let rc: Vec<C64> = (0..nf).map(|i| -iwmu * r_con[i]).collect();
            scatter_rhs(&mut rhs, &layout, b_min, fd, &rm);
            scatter_rhs(&mut rhs, &layout, 2, fd, &rc);
            (trip, rhs)
        })
        .collect();
    collect(layout, locals)
}

/// Saddle system with blocks `[γ₀, Φ₁, λ₁]`.
pub fn assemble_equilibration_1(setup: &ProblemSetup, sol: &MsfemSolution) -> Result<SparseSystem> {
    assemble_equilibration(setup, sol, Equilibration::First)
}

/// Saddle system with blocks `[γ₂, Φ₃, λ₂]`.
pub fn assemble_equilibration_2(setup: &ProblemSetup, sol: &MsfemSolution) -> Result<SparseSystem> {
    assemble_equilibration(setup, sol, Equilibration::Second)
}

/// Dual-norm residual of a saddle system's constraint rows: with `B` the
/// constraint block, `g` its right-hand side and `S` the stream-function
/// stiffness (gauged), returns `‖Bx - g‖_{S⁻¹} / ‖g‖_{S⁻¹}`.
pub fn constraint_residual(sys: &SparseSystem, x: &[C64]) -> Result<f64> {
    let lb = &sys.layout.blocks()[2];
    let (start, n) = (lb.offset, lb.n_free);
    let ax = sys.matrix.matvec(x);
    let r: Vec<C64> = (start..start + n).map(|i| ax[i] - sys.rhs[i]).collect();
    let g: Vec<C64> = (start..start + n).map(|i| sys.rhs[i]).collect();
    // The γ-ψ coupling block is the gauged stream stiffness itself.
    let g0 = &sys.layout.blocks()[0];
    let mut trip = Vec::new();
    for (d, &row) in lb.map.iter().enumerate() {
        if row == NONE {
            continue;
        }
        let col = g0.map[d];
        for (i, v) in sys.matrix.column(col) {
            if i >= start && i < start + n {
                trip.push((i - start, row - start, v));
            }
        }
    }
    let s = CscMatrix::from_triplets(n, n, &trip)?;
    let f = crate::linsolve::factorize(&s)?;
    let dual = |v: &[C64]| -> Result<f64> {
        let y = f.solve(v)?;
        Ok(v.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum::<f64>().max(0.0).sqrt())
    };
    let gn = dual(&g)?;
    if gn == 0.0 {
        return dual(&r);
    }
    Ok(dual(&r)? / gn)
}
