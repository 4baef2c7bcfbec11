//! Discrete spaces on a `Mesh2D`.
//!
//! * `H1Space`: continuous Lagrange elements of order 1 or 2.
//! * `HCurlSpace`: tangentially continuous edge elements. Order 1 is the
//!   Whitney space; order 2 is the first-kind Nédélec space with linear curl,
//!   spanned hierarchically by the Whitney functions, gradients of the edge
//!   bubbles `λaλb` and the two cell functions `λ2 w01`, `λ0 w12`.
//! * `MultiplierSpace`: divergence-free fields represented as rotated
//!   gradients of stream functions, plus one cut-based harmonic field per
//!   hole of the conductor.
//!
//! Local numbering follows the mesh: local edge `k` joins local vertices `k`
//! and `k + 1`.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mesh::{Mesh2D, Region};

const NONE: usize = usize::MAX;
const LOCAL_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];
const INSIDE_TOL: f64 = 1e-10;

/// Which triangles a space lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Full,
    Conductor,
}

/// Sign convention for Whitney degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOrientation {
    /// Edges run from the lower to the higher vertex index.
    LowToHigh,
    /// The reverse; only useful to audit sign handling.
    HighToLow,
}

/// 2D cross product `a × b = a_x b_y - a_y b_x`.
#[inline]
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Affine data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub corners: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh2D, t: usize) -> Self {
        let c = mesh.corners(t);
        let area = mesh.area(t);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let p = c[(i + 1) % 3];
            let q = c[(i + 2) % 3];
            g[i] = [(p[1] - q[1]) / (2.0 * area), (q[0] - p[0]) / (2.0 * area)];
        }
        Self { corners: c, area, grad_lambda: g }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let c = &self.corners;
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }
}

/// Barycentric coordinates of `p` in triangle `t`, or a domain error when
/// `p` lies outside it.
pub fn locate(mesh: &Mesh2D, t: usize, p: [f64; 2]) -> Result<[f64; 3]> {
    if t >= mesh.n_triangles() {
        return Err(Error::InvalidArgument(format!("triangle {t} out of range")));
    }
    let b = mesh.barycentric(t, p);
    if b.iter().any(|&l| l < -INSIDE_TOL) {
        return Err(Error::Domain(format!("point {p:?} lies outside triangle {t}")));
    }
    Ok(b)
}

/// Values and gradients of the local Lagrange basis. Slots: vertices 0..3,
/// then (order 2) edge midpoints 3..6.
pub fn h1_local_basis(order: usize, l: [f64; 3], g: &[[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let mut val = [0.0; 6];
    let mut grad = [[0.0; 2]; 6];
    if order == 1 {
        val[..3].copy_from_slice(&l);
        grad[..3].copy_from_slice(g);
    } else {
        for i in 0..3 {
            val[i] = l[i] * (2.0 * l[i] - 1.0);
            let s = 4.0 * l[i] - 1.0;
            grad[i] = [s * g[i][0], s * g[i][1]];
        }
        for (k, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            val[3 + k] = 4.0 * l[a] * l[b];
            grad[3 + k] = [
                4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
                4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
            ];
        }
    }
    (val, grad)
}

/// Values and curls of the local edge basis, signs applied. Slots: Whitney
/// 0..3, then (order 2) edge-bubble gradients 3..6 and cell functions 6..8.
pub fn hcurl_local_basis(
    order: usize,
    l: [f64; 3],
    g: &[[f64; 2]; 3],
    signs: [f64; 3],
) -> ([[f64; 2]; 8], [f64; 8]) {
    let mut val = [[0.0; 2]; 8];
    let mut curl = [0.0; 8];
    let whitney = |a: usize, b: usize| -> ([f64; 2], f64) {
        (
            [l[a] * g[b][0] - l[b] * g[a][0], l[a] * g[b][1] - l[b] * g[a][1]],
            2.0 * cross(g[a], g[b]),
        )
    };
    for (k, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
        let (w, c) = whitney(a, b);
        val[k] = [signs[k] * w[0], signs[k] * w[1]];
        curl[k] = signs[k] * c;
    }
    if order >= 2 {
        for (k, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            val[3 + k] = [l[a] * g[b][0] + l[b] * g[a][0], l[a] * g[b][1] + l[b] * g[a][1]];
            curl[3 + k] = 0.0;
        }
        // λ2 w01 and λ0 w12: zero tangential trace on every edge.
        for (slot, (f, a, b)) in [(2, 0, 1), (0, 1, 2)].into_iter().enumerate() {
            let (w, c) = whitney(a, b);
            val[6 + slot] = [l[f] * w[0], l[f] * w[1]];
            curl[6 + slot] = cross(g[f], w) + l[f] * c;
        }
    }
    (val, curl)
}

fn active(mesh: &Mesh2D, domain: Domain, t: usize) -> bool {
    domain == Domain::Full || mesh.region(t) == Region::Conductor
}

/// Connected components of the triangles of `domain` (adjacency through
/// shared edges). Returns the component of every triangle (`NONE` if
/// inactive) and the component count.
fn components(mesh: &Mesh2D, domain: Domain) -> (Vec<usize>, usize) {
    let n = mesh.n_triangles();
    let mut comp = vec![NONE; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if comp[seed] != NONE || !active(mesh, domain, seed) {
            continue;
        }
        comp[seed] = count;
        stack.push(seed);
        while let Some(t) = stack.pop() {
            for e in mesh.triangle_edges(t) {
                for nb in mesh.edge_triangles(e).into_iter().flatten() {
                    if comp[nb] == NONE && active(mesh, domain, nb) {
                        comp[nb] = count;
                        stack.push(nb);
                    }
                }
            }
        }
        count += 1;
    }
    (comp, count)
}

/// Continuous Lagrange space of order 1 or 2.
#[derive(Debug, Clone)]
pub struct H1Space {
    mesh: Arc<Mesh2D>,
    order: usize,
    domain: Domain,
    vertex_dof: Vec<usize>,
    edge_dof: Vec<usize>,
    n_dofs: usize,
}

impl H1Space {
    pub fn new(mesh: Arc<Mesh2D>, order: usize, domain: Domain) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidArgument(format!("H1 order {order} not supported (1 or 2)")));
        }
        let mut vertex_dof = vec![NONE; mesh.n_vertices()];
        let mut edge_dof = vec![NONE; mesh.n_edges()];
        let mut used_v = vec![false; mesh.n_vertices()];
        let mut used_e = vec![false; mesh.n_edges()];
        for t in 0..mesh.n_triangles() {
            if active(&mesh, domain, t) {
                for v in mesh.triangle(t) {
                    used_v[v] = true;
                }
                for e in mesh.triangle_edges(t) {
                    used_e[e] = true;
                }
            }
        }
        let mut n = 0;
        for v in 0..mesh.n_vertices() {
            if used_v[v] {
                vertex_dof[v] = n;
                n += 1;
            }
        }
        if order == 2 {
            for e in 0..mesh.n_edges() {
                if used_e[e] {
                    edge_dof[e] = n;
                    n += 1;
                }
            }
        }
        Ok(Self { mesh, order, domain, vertex_dof, edge_dof, n_dofs: n })
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn local_count(&self) -> usize {
        if self.order == 1 {
            3
        } else {
            6
        }
    }

    pub fn is_active(&self, t: usize) -> bool {
        active(&self.mesh, self.domain, t)
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        Some(self.vertex_dof[v]).filter(|&d| d != NONE)
    }

    pub fn edge_dof(&self, e: usize) -> Option<usize> {
        Some(self.edge_dof[e]).filter(|&d| d != NONE)
    }

    /// Global DOFs of triangle `t` in local slot order, `None` when `t` is
    /// outside the space's domain.
    pub fn element_dofs(&self, t: usize) -> Option<[usize; 6]> {
        if !self.is_active(t) {
            return None;
        }
        let mut d = [NONE; 6];
        for (k, v) in self.mesh.triangle(t).into_iter().enumerate() {
            d[k] = self.vertex_dof[v];
        }
        if self.order == 2 {
            for (k, e) in self.mesh.triangle_edges(t).into_iter().enumerate() {
                d[3 + k] = self.edge_dof[e];
            }
        }
        Some(d)
    }

    /// DOFs lying on mesh edge `e` (its endpoints and, for order 2, its midpoint).
    pub fn edge_dofs(&self, e: usize) -> Vec<usize> {
        let [a, b] = self.mesh.edge(e);
        let mut out = Vec::with_capacity(3);
        for d in [self.vertex_dof[a], self.vertex_dof[b], self.edge_dof[e]] {
            if d != NONE {
                out.push(d);
            }
        }
        out
    }

    /// Coordinates of the Lagrange node of every DOF.
    pub fn dof_points(&self) -> Vec<[f64; 2]> {
        let mut pts = vec![[0.0; 2]; self.n_dofs];
        for (v, &d) in self.vertex_dof.iter().enumerate() {
            if d != NONE {
                pts[d] = self.mesh.vertex(v);
            }
        }
        for (e, &d) in self.edge_dof.iter().enumerate() {
            if d != NONE {
                pts[d] = self.mesh.edge_midpoint(e);
            }
        }
        pts
    }

    /// One DOF per connected component of the space's domain (the lowest
    /// numbered vertex DOF), used to pin constants.
    pub fn component_gauge_dofs(&self) -> Vec<usize> {
        let (comp, count) = components(&self.mesh, self.domain);
        let mut best = vec![NONE; count];
        for t in 0..self.mesh.n_triangles() {
            if comp[t] == NONE {
                continue;
            }
            for v in self.mesh.triangle(t) {
                let d = self.vertex_dof[v];
                if d < best[comp[t]] {
                    best[comp[t]] = d;
                }
            }
        }
        best
    }

    pub fn eval_local(&self, coeffs: &[C64], t: usize, bary: [f64; 3]) -> (C64, [C64; 2]) {
        let dofs = match self.element_dofs(t) {
            Some(d) => d,
            None => return (C64::new(0.0, 0.0), [C64::new(0.0, 0.0); 2]),
        };
        let geo = ElementGeometry::new(&self.mesh, t);
        let (val, grad) = h1_local_basis(self.order, bary, &geo.grad_lambda);
        let mut u = C64::new(0.0, 0.0);
        let mut du = [C64::new(0.0, 0.0); 2];
        for k in 0..self.local_count() {
            let c = coeffs[dofs[k]];
            u += c * val[k];
            du[0] += c * grad[k][0];
            du[1] += c * grad[k][1];
        }
        (u, du)
    }

    /// Value of the FE function at `p` inside triangle `t`.
    pub fn interpolate(&self, coeffs: &[C64], p: [f64; 2], t: usize) -> Result<C64> {
        let b = locate(&self.mesh, t, p)?;
        self.check_active(t)?;
        Ok(self.eval_local(coeffs, t, b).0)
    }

    /// Gradient of the FE function at `p` inside triangle `t`.
    pub fn gradient(&self, coeffs: &[C64], p: [f64; 2], t: usize) -> Result<[C64; 2]> {
        let b = locate(&self.mesh, t, p)?;
        self.check_active(t)?;
        Ok(self.eval_local(coeffs, t, b).1)
    }

    fn check_active(&self, t: usize) -> Result<()> {
        if self.is_active(t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("triangle {t} is outside the space's domain")))
        }
    }

    /// Nodal interpolation of `f(t, p)`, where `t` is an active triangle containing node `p`.
    pub fn nodal_interpolate(&self, f: impl Fn(usize, [f64; 2]) -> C64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_dofs];
        let mut done = vec![false; self.n_dofs];
        for t in 0..self.mesh.n_triangles() {
            let Some(dofs) = self.element_dofs(t) else { continue };
            let geo = ElementGeometry::new(&self.mesh, t);
            let nodes: [[f64; 3]; 6] = [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.5, 0.5, 0.0],
                [0.0, 0.5, 0.5],
                [0.5, 0.0, 0.5],
            ];
            for k in 0..self.local_count() {
                if !done[dofs[k]] {
                    out[dofs[k]] = f(t, geo.point(nodes[k]));
                    done[dofs[k]] = true;
                }
            }
        }
        out
    }
}

/// Tangentially continuous edge-element space of order 1 or 2.
#[derive(Debug, Clone)]
pub struct HCurlSpace {
    mesh: Arc<Mesh2D>,
    order: usize,
    domain: Domain,
    orientation: EdgeOrientation,
    edge_dof: Vec<usize>,
    edge_grad_dof: Vec<usize>,
    cell_dof: Vec<usize>,
    n_dofs: usize,
}

impl HCurlSpace {
    pub fn new(mesh: Arc<Mesh2D>, order: usize, domain: Domain) -> Result<Self> {
        Self::with_orientation(mesh, order, domain, EdgeOrientation::LowToHigh)
    }

    pub fn with_orientation(
        mesh: Arc<Mesh2D>,
        order: usize,
        domain: Domain,
        orientation: EdgeOrientation,
    ) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidArgument(format!("H(curl) order {order} not supported (1 or 2)")));
        }
        let mut used_e = vec![false; mesh.n_edges()];
        for t in 0..mesh.n_triangles() {
            if active(&mesh, domain, t) {
                for e in mesh.triangle_edges(t) {
                    used_e[e] = true;
                }
            }
        }
        let mut n = 0;
        let mut edge_dof = vec![NONE; mesh.n_edges()];
        for e in 0..mesh.n_edges() {
            if used_e[e] {
                edge_dof[e] = n;
                n += 1;
            }
        }
        let mut edge_grad_dof = vec![NONE; mesh.n_edges()];
        let mut cell_dof = vec![NONE; mesh.n_triangles()];
        if order == 2 {
            for e in 0..mesh.n_edges() {
                if used_e[e] {
                    edge_grad_dof[e] = n;
                    n += 1;
                }
            }
            for t in 0..mesh.n_triangles() {
                if active(&mesh, domain, t) {
                    cell_dof[t] = n;
                    n += 2;
                }
            }
        }
        Ok(Self { mesh, order, domain, orientation, edge_dof, edge_grad_dof, cell_dof, n_dofs: n })
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn orientation(&self) -> EdgeOrientation {
        self.orientation
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn local_count(&self) -> usize {
        if self.order == 1 {
            3
        } else {
            8
        }
    }

    pub fn is_active(&self, t: usize) -> bool {
        active(&self.mesh, self.domain, t)
    }

    /// Sign of the local Whitney function on each local edge relative to
    /// the global edge direction.
    pub fn local_signs(&self, t: usize) -> [f64; 3] {
        let tri = self.mesh.triangle(t);
        let flip = match self.orientation {
            EdgeOrientation::LowToHigh => 1.0,
            EdgeOrientation::HighToLow => -1.0,
        };
        let mut s = [0.0; 3];
        for (k, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            s[k] = if tri[a] < tri[b] { flip } else { -flip };
        }
        s
    }

    pub fn element_dofs(&self, t: usize) -> Option<[usize; 8]> {
        if !self.is_active(t) {
            return None;
        }
        let mut d = [NONE; 8];
        let te = self.mesh.triangle_edges(t);
        for k in 0..3 {
            d[k] = self.edge_dof[te[k]];
        }
        if self.order == 2 {
            for k in 0..3 {
                d[3 + k] = self.edge_grad_dof[te[k]];
            }
            d[6] = self.cell_dof[t];
            d[7] = self.cell_dof[t] + 1;
        }
        Some(d)
    }

    /// DOFs whose tangential trace lives on edge `e`.
    pub fn edge_dofs(&self, e: usize) -> Vec<usize> {
        [self.edge_dof[e], self.edge_grad_dof[e]].into_iter().filter(|&d| d != NONE).collect()
    }

    pub fn eval_local(&self, coeffs: &[C64], t: usize, bary: [f64; 3]) -> ([C64; 2], C64) {
        let zero = C64::new(0.0, 0.0);
        let Some(dofs) = self.element_dofs(t) else { return ([zero; 2], zero) };
        let geo = ElementGeometry::new(&self.mesh, t);
        let (val, curl) = hcurl_local_basis(self.order, bary, &geo.grad_lambda, self.local_signs(t));
        let mut u = [zero; 2];
        let mut c = zero;
        for k in 0..self.local_count() {
            let x = coeffs[dofs[k]];
            u[0] += x * val[k][0];
            u[1] += x * val[k][1];
            c += x * curl[k];
        }
        (u, c)
    }

    /// Field value at `p` inside triangle `t`.
    pub fn interpolate(&self, coeffs: &[C64], p: [f64; 2], t: usize) -> Result<[C64; 2]> {
        let b = locate(&self.mesh, t, p)?;
        if !self.is_active(t) {
            return Err(Error::Domain(format!("triangle {t} is outside the space's domain")));
        }
        Ok(self.eval_local(coeffs, t, b).0)
    }

    /// Scalar rotation `∂x V_y - ∂y V_x` at `p` inside triangle `t`.
    pub fn curl2d(&self, coeffs: &[C64], p: [f64; 2], t: usize) -> Result<C64> {
        let b = locate(&self.mesh, t, p)?;
        if !self.is_active(t) {
            return Err(Error::Domain(format!("triangle {t} is outside the space's domain")));
        }
        Ok(self.eval_local(coeffs, t, b).1)
    }

    /// Coefficients of the gradient of an H¹ function. Exact when the edge
    /// space contains the gradients (order 2 edges, any H¹ order up to 2);
    /// for Whitney edges this is the canonical interpolant, which drops the
    /// edge-bubble part of a quadratic.
    pub fn interpolate_gradient(&self, h1: &H1Space, coeffs: &[C64]) -> Result<Vec<C64>> {
        if !Arc::ptr_eq(&self.mesh, h1.mesh()) && self.mesh.forest_id() != h1.mesh().forest_id() {
            return Err(Error::InvalidArgument("spaces live on different meshes".into()));
        }
        let zero = C64::new(0.0, 0.0);
        let flip = match self.orientation {
            EdgeOrientation::LowToHigh => 1.0,
            EdgeOrientation::HighToLow => -1.0,
        };
        let mut out = vec![zero; self.n_dofs];
        for e in 0..self.mesh.n_edges() {
            let d = self.edge_dof[e];
            if d == NONE {
                continue;
            }
            let [lo, hi] = self.mesh.edge(e);
            let (Some(dl), Some(dh)) = (h1.vertex_dof(lo), h1.vertex_dof(hi)) else {
                continue;
            };
            out[d] = (coeffs[dh] - coeffs[dl]) * flip;
            if self.order == 2 {
                if let Some(dm) = h1.edge_dof(e) {
                    out[self.edge_grad_dof[e]] = coeffs[dm] * 4.0 - (coeffs[dl] + coeffs[dh]) * 2.0;
                }
            }
        }
        Ok(out)
    }

    /// Canonical interpolation of a field given per active triangle:
    /// tangential edge moments (against 1 and, for order 2, the linear odd
    /// edge function) and, for order 2, cell moments against constants.
    pub fn interpolate_field(&self, f: impl Fn(usize, [f64; 2]) -> [C64; 2]) -> Vec<C64> {
        let zero = C64::new(0.0, 0.0);
        let mut out = vec![zero; self.n_dofs];
        let line = crate::quadrature::gauss_interval(6, 0.0, 1.0);
        let flip = match self.orientation {
            EdgeOrientation::LowToHigh => 1.0,
            EdgeOrientation::HighToLow => -1.0,
        };
        for e in 0..self.mesh.n_edges() {
            if self.edge_dof[e] == NONE {
                continue;
            }
            let t = self
                .mesh
                .edge_triangles(e)
                .into_iter()
                .flatten()
                .find(|&t| self.is_active(t))
                .expect("an active edge touches an active triangle");
            let [lo, hi] = self.mesh.edge(e);
            let (p, q) = (self.mesh.vertex(lo), self.mesh.vertex(hi));
            let tv = [q[0] - p[0], q[1] - p[1]];
            let mut m0 = zero;
            let mut m1 = zero;
            for &(s, w) in &line {
                let x = [p[0] + s * tv[0], p[1] + s * tv[1]];
                let v = f(t, x);
                let ft = v[0] * tv[0] + v[1] * tv[1];
                m0 += ft * w;
                // λ_lo - λ_hi along the edge
                m1 += ft * (w * (1.0 - 2.0 * s));
            }
            out[self.edge_dof[e]] = m0 * flip;
            if self.order == 2 {
                out[self.edge_grad_dof[e]] = m1 * 3.0;
            }
        }
        if self.order == 2 {
            let rule = crate::quadrature::triangle_rule(6);
            for t in 0..self.mesh.n_triangles() {
                if !self.is_active(t) {
                    continue;
                }
                let geo = ElementGeometry::new(&self.mesh, t);
                let dofs = self.element_dofs(t).unwrap();
                let signs = self.local_signs(t);
                let mut rhs = [zero; 2];
                let mut mat = [[0.0; 2]; 2];
                for q in &rule {
                    let w = q.weight * 2.0 * geo.area;
                    let (val, _) = hcurl_local_basis(2, q.bary, &geo.grad_lambda, signs);
                    let mut r = f(t, geo.point(q.bary));
                    for k in 0..6 {
                        r[0] -= out[dofs[k]] * val[k][0];
                        r[1] -= out[dofs[k]] * val[k][1];
                    }
                    for i in 0..2 {
                        rhs[i] += r[i] * w;
                        for j in 0..2 {
                            mat[i][j] += val[6 + j][i] * w;
                        }
                    }
                }
                let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
                out[dofs[6]] = (rhs[0] * mat[1][1] - rhs[1] * mat[0][1]) / det;
                out[dofs[7]] = (rhs[1] * mat[0][0] - rhs[0] * mat[1][0]) / det;
            }
        }
        out
    }
}

/// A divergence-free field that is not the rotation of a single-valued
/// stream function: the elementwise rotation of a function jumping by one
/// across a cut from a hole to the outer boundary.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    rot: Vec<Option<[f64; 2]>>,
    cut: Vec<usize>,
}

impl HarmonicField {
    /// Constant field on triangle `t` (zero off the support).
    pub fn on_triangle(&self, t: usize) -> [f64; 2] {
        self.rot[t].unwrap_or([0.0, 0.0])
    }

    /// Vertex path of the cut, from the hole to the outer boundary.
    pub fn cut(&self) -> &[usize] {
        &self.cut
    }
}

/// Lagrange-multiplier space of divergence-free fields on the conductor,
/// represented by stream functions `ψ ↦ (∂ψ/∂y, -∂ψ/∂x)` plus one harmonic
/// field per hole. Coefficient vectors hold the stream-function DOFs first,
/// then one coefficient per harmonic field.
#[derive(Debug, Clone)]
pub struct MultiplierSpace {
    stream: H1Space,
    harmonics: Vec<HarmonicField>,
    gauge: Vec<usize>,
}

impl MultiplierSpace {
    pub fn new(mesh: Arc<Mesh2D>, order: usize) -> Result<Self> {
        let stream = H1Space::new(mesh.clone(), order, Domain::Conductor)?;
        let gauge = stream.component_gauge_dofs();
        let harmonics = harmonic_fields(&mesh)?;
        Ok(Self { stream, harmonics, gauge })
    }

    pub fn stream_space(&self) -> &H1Space {
        &self.stream
    }

    pub fn harmonics(&self) -> &[HarmonicField] {
        &self.harmonics
    }

    /// Stream-function DOFs pinned to zero, one per conductor component.
    pub fn gauge_dofs(&self) -> &[usize] {
        &self.gauge
    }

    pub fn n_dofs(&self) -> usize {
        self.stream.n_dofs() + self.harmonics.len()
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        self.stream.mesh()
    }

    /// Represented vector field at barycentric point `bary` of triangle `t`.
    pub fn eval_local(&self, coeffs: &[C64], t: usize, bary: [f64; 3]) -> [C64; 2] {
        let (_, g) = self.stream.eval_local(coeffs, t, bary);
        let mut v = [g[1], -g[0]];
        let n = self.stream.n_dofs();
        for (k, h) in self.harmonics.iter().enumerate() {
            let r = h.on_triangle(t);
            v[0] += coeffs[n + k] * r[0];
            v[1] += coeffs[n + k] * r[1];
        }
        v
    }

    /// `(∂ψ/∂y, -∂ψ/∂x)` (plus harmonic parts) at `p` inside triangle `t`.
    pub fn rot_stream(&self, coeffs: &[C64], p: [f64; 2], t: usize) -> Result<[C64; 2]> {
        let b = locate(self.mesh(), t, p)?;
        if !self.stream.is_active(t) {
            return Err(Error::Domain(format!("triangle {t} is outside the conductor")));
        }
        Ok(self.eval_local(coeffs, t, b))
    }
}

/// Builds one harmonic field per hole of every conductor component.
fn harmonic_fields(mesh: &Mesh2D) -> Result<Vec<HarmonicField>> {
    let (comp, ncomp) = components(mesh, Domain::Conductor);
    // Directed boundary edges of the conductor with the conductor on the left.
    let mut next: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut boundary_vertex = vec![false; mesh.n_vertices()];
    let mut edge_comp = Vec::new();
    for e in 0..mesh.n_edges() {
        if !mesh.is_conductor_boundary(e) {
            continue;
        }
        let t = mesh
            .edge_triangles(e)
            .into_iter()
            .flatten()
            .find(|&t| mesh.region(t) == Region::Conductor)
            .unwrap();
        let tri = mesh.triangle(t);
        let [a, b] = mesh.edge(e);
        let k = tri.iter().position(|&v| v == a).unwrap();
        let (from, to) = if tri[(k + 1) % 3] == b { (a, b) } else { (b, a) };
        next.entry(from).or_default().push(to);
        boundary_vertex[a] = true;
        boundary_vertex[b] = true;
        edge_comp.push((from, comp[t]));
    }
    let vertex_comp: std::collections::HashMap<usize, usize> = edge_comp.into_iter().collect();
    // Walk loops.
    let mut loops: Vec<(usize, Vec<usize>, f64)> = Vec::new();
    let mut remaining = next.clone();
    loop {
        let Some((&start, _)) = remaining.iter().find(|(_, v)| !v.is_empty()) else { break };
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let outs = remaining.get_mut(&cur).unwrap();
            let to = outs.remove(0);
            if to == start {
                break;
            }
            path.push(to);
            cur = to;
            if remaining.get(&cur).map(|v| v.is_empty()).unwrap_or(true) {
                return Err(Error::InvalidGeometry("conductor boundary is not a closed loop".into()));
            }
        }
        let mut area2 = 0.0;
        for i in 0..path.len() {
            let p = mesh.vertex(path[i]);
            let q = mesh.vertex(path[(i + 1) % path.len()]);
            area2 += p[0] * q[1] - q[0] * p[1];
        }
        loops.push((vertex_comp[&start], path, area2));
    }

    let mut fields = Vec::new();
    for c in 0..ncomp {
        let outer: Vec<&(usize, Vec<usize>, f64)> = loops.iter().filter(|l| l.0 == c && l.2 > 0.0).collect();
        let holes: Vec<&(usize, Vec<usize>, f64)> = loops.iter().filter(|l| l.0 == c && l.2 < 0.0).collect();
        if holes.is_empty() {
            continue;
        }
        let mut on_outer = vec![false; mesh.n_vertices()];
        for l in &outer {
            for &v in &l.1 {
                on_outer[v] = true;
            }
        }
        for hole in holes {
            let cut = find_cut(mesh, &hole.1, &on_outer, &boundary_vertex).ok_or_else(|| {
                Error::InvalidGeometry("no interior path from a conductor hole to its outer boundary".into())
            })?;
            fields.push(cut_field(mesh, cut));
        }
    }
    Ok(fields)
}

/// Breadth-first path through conductor edges from a hole loop to the outer
/// loop, passing only through interior vertices.
fn find_cut(mesh: &Mesh2D, hole: &[usize], on_outer: &[bool], boundary_vertex: &[bool]) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for e in 0..mesh.n_edges() {
        let conductor = mesh
            .edge_triangles(e)
            .into_iter()
            .flatten()
            .any(|t| mesh.region(t) == Region::Conductor);
        if conductor && !mesh.is_conductor_boundary(e) {
            let [a, b] = mesh.edge(e);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut prev = vec![NONE; mesh.n_vertices()];
    let mut seen = vec![false; mesh.n_vertices()];
    let mut queue = std::collections::VecDeque::new();
    let mut starts = hole.to_vec();
    starts.sort_unstable();
    for &s in &starts {
        seen[s] = true;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if seen[w] {
                continue;
            }
            seen[w] = true;
            prev[w] = v;
            if on_outer[w] {
                let mut path = vec![w];
                let mut cur = w;
                while prev[cur] != NONE {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            if !boundary_vertex[w] {
                queue.push_back(w);
            }
        }
    }
    None
}

/// Elementwise rotation of the function equal to `Σ λ_v` over cut vertices
/// `v` on triangles left of the cut, zero elsewhere.
fn cut_field(mesh: &Mesh2D, cut: Vec<usize>) -> HarmonicField {
    let mut cut_edges = std::collections::HashSet::new();
    for w in cut.windows(2) {
        cut_edges.insert(mesh.edge_index(w[0], w[1]).unwrap());
    }
    let left_of = |a: usize, b: usize| -> usize {
        let e = mesh.edge_index(a, b).unwrap();
        mesh.edge_triangles(e)
            .into_iter()
            .flatten()
            .find(|&t| {
                let tri = mesh.triangle(t);
                mesh.region(t) == Region::Conductor
                    && (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b)
            })
            .expect("cut edges are interior to the conductor")
    };
    let mut rot: Vec<Option<[f64; 2]>> = vec![None; mesh.n_triangles()];
    for (i, &v) in cut.iter().enumerate() {
        let seed = if i + 1 < cut.len() { left_of(v, cut[i + 1]) } else { left_of(cut[i - 1], v) };
        // Flood the fan around v without crossing cut edges.
        let mut fan = vec![seed];
        let mut stack = vec![seed];
        while let Some(t) = stack.pop() {
            for e in mesh.triangle_edges(t) {
                let [a, b] = mesh.edge(e);
                if (a != v && b != v) || cut_edges.contains(&e) {
                    continue;
                }
                for nb in mesh.edge_triangles(e).into_iter().flatten() {
                    if mesh.region(nb) == Region::Conductor && !fan.contains(&nb) {
                        fan.push(nb);
                        stack.push(nb);
                    }
                }
            }
        }
        for t in fan {
            let geo = ElementGeometry::new(mesh, t);
            let k = mesh.triangle(t).iter().position(|&x| x == v).unwrap();
            let g = geo.grad_lambda[k];
            let r = rot[t].get_or_insert([0.0, 0.0]);
            r[0] += g[1];
            r[1] -= g[0];
        }
    }
    HarmonicField { rot, cut }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid_mesh, build_rect_mesh};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn square(n: usize) -> Arc<Mesh2D> {
        Arc::new(build_rect_mesh(1.0, 1.0, n, n, |_| Region::Conductor).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = square(3);
        assert_eq!(H1Space::new(m.clone(), 1, Domain::Full).unwrap().n_dofs(), m.n_vertices());
        assert_eq!(
            H1Space::new(m.clone(), 2, Domain::Full).unwrap().n_dofs(),
            m.n_vertices() + m.n_edges()
        );
        assert_eq!(HCurlSpace::new(m.clone(), 1, Domain::Full).unwrap().n_dofs(), m.n_edges());
        assert_eq!(
            HCurlSpace::new(m.clone(), 2, Domain::Full).unwrap().n_dofs(),
            2 * m.n_edges() + 2 * m.n_triangles()
        );
    }

    #[test]
    fn restricted_space_touches_conductor_only() {
        let m = Arc::new(
            build_rect_mesh(1.0, 1.0, 4, 4, |p| if p[1] < 0.5 { Region::Conductor } else { Region::Air }).unwrap(),
        );
        let h = H1Space::new(m.clone(), 2, Domain::Conductor).unwrap();
        for (d, p) in h.dof_points().iter().enumerate() {
            assert!(p[1] <= 0.5 + 1e-12, "dof {d} at {p:?}");
        }
        assert_eq!(h.n_dofs(), 5 * 3 + (4 * 2 + 5 * 2 + 4 * 2 * 2 - 4));
    }

    #[test]
    fn p1_barycenter_value() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = Arc::new(Mesh2D::new(v, vec![[0, 1, 2]], vec![Region::Conductor], &Default::default()).unwrap());
        let h = H1Space::new(m.clone(), 1, Domain::Full).unwrap();
        let mut coeffs = vec![c(0.0); 3];
        coeffs[h.vertex_dof(1).unwrap()] = c(1.0);
        let u = h.interpolate(&coeffs, [1.0 / 3.0, 1.0 / 3.0], 0).unwrap();
        assert!((u - c(1.0 / 3.0)).norm() < 1e-15);
        assert!(matches!(h.interpolate(&coeffs, [2.0, 2.0], 0), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_edge_field() {
        let m = square(2);
        let s = HCurlSpace::new(m, 1, Domain::Full).unwrap();
        let v = s.interpolate(&vec![c(0.0); s.n_dofs()], [0.3, 0.2], 0).unwrap_or([c(1.0); 2]);
        assert_eq!(v, [c(0.0); 2]);
    }

    #[test]
    fn whitney_function_has_unit_circulation_on_its_edge() {
        let m = square(2);
        for order in [1, 2] {
            let s = HCurlSpace::new(m.clone(), order, Domain::Full).unwrap();
            for e in 0..m.n_edges() {
                let mut x = vec![c(0.0); s.n_dofs()];
                x[s.edge_dofs(e)[0]] = c(1.0);
                let t = m.edge_triangles(e)[0].unwrap();
                let [lo, hi] = m.edge(e);
                let (p, q) = (m.vertex(lo), m.vertex(hi));
                let mut circ = c(0.0);
                for (sp, w) in crate::quadrature::gauss_interval(3, 0.0, 1.0) {
                    let pt = [p[0] + sp * (q[0] - p[0]), p[1] + sp * (q[1] - p[1])];
                    let v = s.interpolate(&x, pt, t).unwrap();
                    circ += (v[0] * (q[0] - p[0]) + v[1] * (q[1] - p[1])) * w;
                }
                assert!((circ - c(1.0)).norm() < 1e-12, "edge {e}: {circ}");
            }
        }
    }

    #[test]
    fn rotation_field_has_curl_two() {
        let m = square(3);
        for order in [1, 2] {
            let s = HCurlSpace::new(m.clone(), order, Domain::Full).unwrap();
            let x = s.interpolate_field(|_, p| [c(-p[1]), c(p[0])]);
            for t in 0..m.n_triangles() {
                let cen = m.centroid(t);
                let v = s.interpolate(&x, cen, t).unwrap();
                assert!((v[0] - c(-cen[1])).norm() < 1e-12 && (v[1] - c(cen[0])).norm() < 1e-12);
                assert!((s.curl2d(&x, cen, t).unwrap() - c(2.0)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn tangential_traces_match_across_edges() {
        let m = square(3);
        for order in [1, 2] {
            let s = HCurlSpace::new(m.clone(), order, Domain::Full).unwrap();
            let x: Vec<C64> = (0..s.n_dofs()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64).cos())).collect();
            for e in 0..m.n_edges() {
                let [Some(t1), Some(t2)] = m.edge_triangles(e) else { continue };
                let [lo, hi] = m.edge(e);
                let (p, q) = (m.vertex(lo), m.vertex(hi));
                for sp in [0.25, 0.5, 0.8] {
                    let pt = [p[0] + sp * (q[0] - p[0]), p[1] + sp * (q[1] - p[1])];
                    let a = s.interpolate(&x, pt, t1).unwrap();
                    let b = s.interpolate(&x, pt, t2).unwrap();
                    let tv = [q[0] - p[0], q[1] - p[1]];
                    let ta = a[0] * tv[0] + a[1] * tv[1];
                    let tb = b[0] * tv[0] + b[1] * tv[1];
                    assert!((ta - tb).norm() < 1e-12, "order {order} edge {e}");
                }
            }
        }
    }

    #[test]
    fn gradients_have_zero_curl() {
        let m = square(3);
        for (ho, eo) in [(1, 1), (2, 1), (2, 2), (1, 2)] {
            let h = H1Space::new(m.clone(), ho, Domain::Full).unwrap();
            let s = HCurlSpace::new(m.clone(), eo, Domain::Full).unwrap();
            let psi: Vec<C64> = (0..h.n_dofs()).map(|i| C64::new((i as f64).sin(), 0.3 * i as f64)).collect();
            let g = s.interpolate_gradient(&h, &psi).unwrap();
            for t in 0..m.n_triangles() {
                for bary in [[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]] {
                    let pt = ElementGeometry::new(&m, t).point(bary);
                    assert!(s.curl2d(&g, pt, t).unwrap().norm() < 1e-12);
                    if eo == 2 || ho == 1 {
                        // gradients are represented exactly
                        let gv = s.interpolate(&g, pt, t).unwrap();
                        let gh = h.gradient(&psi, pt, t).unwrap();
                        assert!((gv[0] - gh[0]).norm() < 1e-10 && (gv[1] - gh[1]).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn curl_matches_finite_differences() {
        let m = square(3);
        for order in [1, 2] {
            let s = HCurlSpace::new(m.clone(), order, Domain::Full).unwrap();
            let x: Vec<C64> = (0..s.n_dofs()).map(|i| C64::new((1.3 * i as f64).sin(), (0.7 * i as f64).cos())).collect();
            let h = 1e-6;
            for t in 0..m.n_triangles() {
                let p = m.centroid(t);
                let vx_p = s.interpolate(&x, [p[0] + h, p[1]], t).unwrap();
                let vx_m = s.interpolate(&x, [p[0] - h, p[1]], t).unwrap();
                let vy_p = s.interpolate(&x, [p[0], p[1] + h], t).unwrap();
                let vy_m = s.interpolate(&x, [p[0], p[1] - h], t).unwrap();
                let fd = (vx_p[1] - vx_m[1]) / (2.0 * h) - (vy_p[0] - vy_m[0]) / (2.0 * h);
                let exact = s.curl2d(&x, p, t).unwrap();
                assert!((fd - exact).norm() <= 1e-6 * exact.norm().max(1.0), "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn stream_rotation() {
        let m = square(2);
        let ms = MultiplierSpace::new(m.clone(), 2).unwrap();
        let h = ms.stream_space();
        let mut x = h.nodal_interpolate(|_, p| c(3.0 * p[0]));
        x.resize(ms.n_dofs(), c(0.0));
        let v = ms.rot_stream(&x, [0.3, 0.2], 0).unwrap_or_else(|_| ms.rot_stream(&x, m.centroid(0), 0).unwrap());
        assert!(v[0].norm() < 1e-12 && (v[1] - c(-3.0)).norm() < 1e-12);
        let one = vec![c(1.0); ms.n_dofs()];
        let v = ms.rot_stream(&one, m.centroid(1), 1).unwrap();
        assert!(v[0].norm() < 1e-12 && v[1].norm() < 1e-12);
        assert!(ms.harmonics().is_empty());
        assert_eq!(ms.gauge_dofs().len(), 1);
    }

    #[test]
    fn stream_field_is_divergence_free() {
        let m = square(3);
        let ms = MultiplierSpace::new(m.clone(), 2).unwrap();
        let x: Vec<C64> = (0..ms.n_dofs()).map(|i| C64::new((0.9 * i as f64).sin(), 0.0)).collect();
        let h = 1e-5;
        for t in 0..m.n_triangles() {
            let p = m.centroid(t);
            let a = ms.rot_stream(&x, [p[0] + h, p[1]], t).unwrap();
            let b = ms.rot_stream(&x, [p[0] - h, p[1]], t).unwrap();
            let cc = ms.rot_stream(&x, [p[0], p[1] + h], t).unwrap();
            let d = ms.rot_stream(&x, [p[0], p[1] - h], t).unwrap();
            let div = (a[0] - b[0]) / (2.0 * h) + (cc[1] - d[1]) / (2.0 * h);
            assert!(div.norm() < 1e-8, "div {div}");
        }
    }

    #[test]
    fn hole_gets_a_harmonic_field() {
        let m = Arc::new(
            build_grid_mesh([0.0, 0.0], 3.0, 3.0, 6, 6, |p| {
                if (1.0..2.0).contains(&p[0]) && (1.0..2.0).contains(&p[1]) {
                    Some(Region::Air)
                } else {
                    Some(Region::Conductor)
                }
            })
            .unwrap(),
        );
        let ms = MultiplierSpace::new(m.clone(), 1).unwrap();
        assert_eq!(ms.harmonics().len(), 1);
        let h = &ms.harmonics()[0];
        // normal continuity across every interior conductor edge
        for e in 0..m.n_edges() {
            let [Some(a), Some(b)] = m.edge_triangles(e) else { continue };
            if m.region(a) != Region::Conductor || m.region(b) != Region::Conductor {
                continue;
            }
            let [lo, hi] = m.edge(e);
            let (p, q) = (m.vertex(lo), m.vertex(hi));
            let n = [q[1] - p[1], p[0] - q[0]];
            let fa = h.on_triangle(a);
            let fb = h.on_triangle(b);
            let ja = fa[0] * n[0] + fa[1] * n[1];
            let jb = fb[0] * n[0] + fb[1] * n[1];
            assert!((ja - jb).abs() < 1e-12, "edge {e}: {ja} vs {jb}");
        }
        // unit flux through the cut: circulation of θ̃ around the hole is 1
        let total: f64 = (0..m.n_triangles()).map(|t| {
            let f = h.on_triangle(t);
            f[0].abs() + f[1].abs()
        }).sum();
        assert!(total > 0.0);
    }
}
