use std::sync::Arc;

use msfem_eddy::assembly::{assemble_equilibration_2, assemble_msfem, Materials, Orders, ProblemSetup};
use msfem_eddy::estimator::{equilibrate, solve_msfem};
use msfem_eddy::fespace::EdgeOrientation;
use msfem_eddy::linsolve::relative_residual;
use msfem_eddy::mesh::{build_rect_mesh, BoundaryTag, Mesh2D, Region};
use msfem_eddy::reference::{benchmark_profile, slab_benchmark};
use msfem_eddy::sources::Excitation;
use msfem_eddy::C64;

// 5-point Gauss-Legendre on [0, 1].
const GL: [(f64, f64); 5] = [
    (0.046910077030668, 0.118463442528095),
    (0.230765344947158, 0.239314335249683),
    (0.5, 0.284444444444444),
    (0.769234655052842, 0.239314335249683),
    (0.953089922969332, 0.118463442528095),
];

/// Collapsed (Duffy) tensor rule on a triangle, exact to degree 8.
fn integrate(c: [[f64; 2]; 3], f: impl Fn([f64; 2]) -> C64) -> C64 {
    let jac = ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1])).abs();
    let mut s = C64::new(0.0, 0.0);
    for &(u, wu) in &GL {
        for &(v, wv) in &GL {
            let (a, b) = (u, v * (1.0 - u));
            let p = [
                c[0][0] + a * (c[1][0] - c[0][0]) + b * (c[2][0] - c[0][0]),
                c[0][1] + a * (c[1][1] - c[0][1]) + b * (c[2][1] - c[0][1]),
            ];
            s += f(p) * (wu * wv * (1.0 - u) * jac);
        }
    }
    s
}

/// Hat function of global vertex `v` on triangle `t`: value and gradient
/// from the plane through the three corners.
fn hat(mesh: &Mesh2D, t: usize, v: usize, p: [f64; 2]) -> (f64, [f64; 2]) {
    let tri = mesh.triangle(t);
    let Some(k) = tri.iter().position(|&w| w == v) else { return (0.0, [0.0, 0.0]) };
    let c = mesh.corners(t);
    let (a, b) = (c[(k + 1) % 3], c[(k + 2) % 3]);
    // plane vanishing on the opposite edge, one at the vertex
    let n = [-(b[1] - a[1]), b[0] - a[0]];
    let s = n[0] * (c[k][0] - a[0]) + n[1] * (c[k][1] - a[1]);
    let g = [n[0] / s, n[1] / s];
    (g[0] * (p[0] - a[0]) + g[1] * (p[1] - a[1]), g)
}

/// Whitney function of edge `(a, b)`, `a < b`, on triangle `t`: value and curl.
fn whitney(mesh: &Mesh2D, t: usize, a: usize, b: usize, p: [f64; 2]) -> ([f64; 2], f64) {
    let (la, ga) = hat(mesh, t, a, p);
    let (lb, gb) = hat(mesh, t, b, p);
    let w = [la * gb[0] - lb * ga[0], la * gb[1] - lb * ga[1]];
    (w, 2.0 * (ga[0] * gb[1] - ga[1] * gb[0]))
}

fn two_triangle_setup(h: [f64; 2], frequency: f64) -> ProblemSetup {
    let mesh = build_rect_mesh(1e-3, 1e-3, 1, 1, |_| Region::Conductor).unwrap();
    let mesh = mesh.retag_boundary(|p| if p[0].abs() < 1e-12 { BoundaryTag::Symmetry } else { BoundaryTag::Outer });
    ProblemSetup::new(
        Arc::new(mesh),
        benchmark_profile(),
        Materials::electrical_steel(),
        frequency,
        Excitation::Uniform(h),
        Orders { edge: 1, h1: 1, flux: 1 },
    )
    .unwrap()
}

#[test]
fn main_matrix_matches_independent_quadrature() {
    let setup = two_triangle_setup([700.0, -300.0], 50.0);
    let sys = assemble_msfem(&setup).unwrap();
    let mesh = setup.mesh().clone();
    let (ts, ps) = (setup.t_space(), setup.phi_space());
    let c = setup.coefficients();
    let iw = C64::new(0.0, setup.omega());
    let h = [700.0, -300.0];

    // Free unknowns: T₂ on the symmetry edge and the diagonal, Φ₀ off it.
    let mut t_edges = Vec::new();
    for e in 0..mesh.n_edges() {
        let [a, b] = mesh.edge(e);
        let on_left = mesh.vertex(a)[0] == 0.0 && mesh.vertex(b)[0] == 0.0;
        if !mesh.is_domain_boundary(e) || on_left {
            t_edges.push((a.min(b), a.max(b)));
        }
    }
    let p_verts: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| mesh.vertex(v)[0] > 0.0).collect();
    assert_eq!(t_edges.len(), 2);
    assert_eq!(p_verts.len(), 2);
    assert_eq!(sys.layout.n_dofs(), 4);

    enum U {
        T(usize, usize),
        P(usize),
    }
    let mut unknowns: Vec<(usize, U)> = Vec::new();
    for &(a, b) in &t_edges {
        let e = mesh.edge_index(a, b).unwrap();
        unknowns.push((sys.layout.index(0, ts.edge_dofs(e)[0]).unwrap(), U::T(a, b)));
    }
    for &v in &p_verts {
        unknowns.push((sys.layout.index(1, ps.vertex_dof(v).unwrap()).unwrap(), U::P(v)));
    }

    let form = |u: &U, v: &U| -> C64 {
        (0..mesh.n_triangles())
            .map(|t| {
                integrate(mesh.corners(t), |p| match (u, v) {
                    (U::T(a, b), U::T(c2, d)) => {
                        let (w1, c1) = whitney(&mesh, t, *a, *b, p);
                        let (w2, cc2) = whitney(&mesh, t, *c2, *d, p);
                        (C64::new(c.rho.dphi2_sq, 0.0) + iw * c.mu.phi2_sq) * (w1[0] * w2[0] + w1[1] * w2[1])
                            + c.rho.phi2_sq * c1 * cc2
                    }
                    (U::T(a, b), U::P(q)) | (U::P(q), U::T(a, b)) => {
                        let (w, _) = whitney(&mesh, t, *a, *b, p);
                        let (_, g) = hat(&mesh, t, *q, p);
                        iw * c.mu.phi0_phi2 * (w[0] * g[0] + w[1] * g[1])
                    }
                    (U::P(q1), U::P(q2)) => {
                        let (_, g1) = hat(&mesh, t, *q1, p);
                        let (_, g2) = hat(&mesh, t, *q2, p);
                        iw * c.mu.phi0_sq_full * (g1[0] * g2[0] + g1[1] * g2[1])
                    }
                })
            })
            .sum()
    };
    let rhs = |u: &U| -> C64 {
        (0..mesh.n_triangles())
            .map(|t| {
                integrate(mesh.corners(t), |p| match u {
                    U::T(a, b) => {
                        let (w, _) = whitney(&mesh, t, *a, *b, p);
                        -iw * c.mu.phi0_phi2 * (h[0] * w[0] + h[1] * w[1])
                    }
                    U::P(q) => {
                        let (_, g) = hat(&mesh, t, *q, p);
                        -iw * c.mu.phi0_sq_full * (h[0] * g[0] + h[1] * g[1])
                    }
                })
            })
            .sum()
    };

    let scale = sys.matrix.norm_inf();
    let rscale = sys.rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (i, u) in &unknowns {
        for (j, v) in &unknowns {
            let want = form(u, v);
            let got = sys.matrix.get(*i, *j);
            assert!((got - want).norm() <= 1e-12 * scale, "entry ({i}, {j}): {got} vs {want}");
        }
        let want = rhs(u);
        assert!((sys.rhs[*i] - want).norm() <= 1e-12 * rscale, "rhs {i}: {} vs {want}", sys.rhs[*i]);
    }
}

#[test]
fn main_matrix_is_complex_symmetric() {
    let setup = slab_benchmark(1).unwrap();
    let sys = assemble_msfem(&setup).unwrap();
    assert!(sys.matrix.is_symmetric(1e-14 * sys.matrix.norm_inf()));
}

#[test]
fn zero_frequency_decouples_the_scalar_potential() {
    let setup = two_triangle_setup([1000.0, 0.0], 0.0);
    let sys = assemble_msfem(&setup).unwrap();
    let nt = sys.layout.blocks()[0].n_free();
    for j in 0..sys.layout.n_dofs() {
        for (i, v) in sys.matrix.column(j) {
            if i >= nt || j >= nt {
                assert_eq!(v, C64::new(0.0, 0.0), "entry ({i}, {j})");
            }
        }
    }
    assert!(sys.rhs.iter().all(|v| *v == C64::new(0.0, 0.0)));
}

#[test]
fn zero_source_gives_zero_solution() {
    let setup = slab_benchmark(1).unwrap().with_excitation(Excitation::Uniform([0.0, 0.0])).unwrap();
    let sys = assemble_msfem(&setup).unwrap();
    assert!(sys.rhs.iter().all(|v| *v == C64::new(0.0, 0.0)));
    let sol = solve_msfem(&setup).unwrap();
    assert!(sol.t2().iter().chain(sol.phi0()).all(|v| *v == C64::new(0.0, 0.0)));
}

#[test]
fn galerkin_residual_is_small() {
    let setup = slab_benchmark(1).unwrap();
    let sys = assemble_msfem(&setup).unwrap();
    let x = msfem_eddy::linsolve::solve(&sys.matrix, &sys.rhs).unwrap();
    assert!(relative_residual(&sys.matrix, &x, &sys.rhs) <= 1e-10);
}

#[test]
fn losses_settle_under_refinement() {
    let mut setup = slab_benchmark(1).unwrap();
    let mut losses = Vec::new();
    for _ in 0..3 {
        losses.push(solve_msfem(&setup).unwrap().losses());
        setup = setup.with_mesh(Arc::new(setup.mesh().uniform_refine())).unwrap();
    }
    let d1 = (losses[1] - losses[0]).abs();
    let d2 = (losses[2] - losses[1]).abs();
    assert!(d2 < 0.5 * d1, "{losses:?}");
    assert!(d2 < 0.1 * losses[2], "{losses:?}");
}

#[test]
fn edge_orientation_does_not_change_the_fields() {
    let a = slab_benchmark(1).unwrap();
    let b = a.with_edge_orientation(EdgeOrientation::HighToLow);
    let (sa, sb) = (solve_msfem(&a).unwrap(), solve_msfem(&b).unwrap());
    let mesh = a.mesh();
    let scale = sa.t2().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for t in 0..mesh.n_triangles() {
        if mesh.region(t) != Region::Conductor {
            continue;
        }
        let p = mesh.centroid(t);
        let (va, vb) = (sa.t_space().interpolate(sa.t2(), p, t).unwrap(), sb.t_space().interpolate(sb.t2(), p, t).unwrap());
        assert!((va[0] - vb[0]).norm() + (va[1] - vb[1]).norm() <= 1e-10 * scale);
    }
    let (fa, fb) = (equilibrate(&a, &sa).unwrap(), equilibrate(&b, &sb).unwrap());
    let close = |x: &[C64], y: &[C64]| {
        let s = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        x.iter().zip(y).all(|(p, q)| (p - q).norm() <= 1e-9 * s)
    };
    assert!(close(&fa.gamma2, &fb.gamma2));
    assert!(close(&fa.phi3, &fb.phi3));
    assert!(close(&fa.gamma0, &fb.gamma0));
    assert!(close(&fa.phi1, &fb.phi1));
}

#[test]
fn equilibration_rejects_a_foreign_solution() {
    let a = slab_benchmark(1).unwrap();
    let sol = solve_msfem(&a).unwrap();
    let b = a.with_mesh(Arc::new(a.mesh().uniform_refine())).unwrap();
    assert!(assemble_equilibration_2(&b, &sol).is_err());
}
