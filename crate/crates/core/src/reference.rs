//! Reference solutions and the shipped benchmark problems.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::assembly::{Materials, Orders, ProblemSetup};
use crate::error::{Error, Result};
use crate::mesh::{ancestor_key, build_grid_mesh, build_rect_mesh, BoundaryTag, Mesh2D, Region};
use crate::sources::Excitation;
use crate::thickness::ThicknessProfile;

pub use crate::estimator::make_overkill;

/// Time-averaged eddy-current loss per unit sheet area (W/m²) of a slab of
/// thickness `d_fe` with peak tangential surface field `h_surface`:
/// `ρH²a (sinh ad - sin ad) / (cosh ad + cos ad)` with `a = √(ωμσ/2)`.
pub fn slab_losses(d_fe: f64, sigma: f64, mu: f64, f: f64, h_surface: f64) -> f64 {
    let omega = 2.0 * PI * f;
    let a = (0.5 * omega * mu * sigma).sqrt();
    let x = a * d_fe;
    let ratio = if x < 1e-2 {
        // series avoids the cancellation in sinh x - sin x
        x * x * x / 6.0 * (1.0 - 17.0 * x.powi(4) / 420.0)
    } else {
        (x.sinh() - x.sin()) / (x.cosh() + x.cos())
    };
    h_surface * h_surface * a * ratio / sigma
}

/// Low-frequency limit `σω²μ²d³H²/24` of `slab_losses`.
pub fn slab_losses_low_frequency(d_fe: f64, sigma: f64, mu: f64, f: f64, h_surface: f64) -> f64 {
    let omega = 2.0 * PI * f;
    sigma * omega * omega * mu * mu * d_fe.powi(3) * h_surface * h_surface / 24.0
}

/// Refines `mesh` until every triangle of `other` (same forest) is a
/// descendant-or-self of one of its triangles, so the result refines both.
pub fn merge_meshes(mesh: &Mesh2D, other: &Mesh2D) -> Result<Mesh2D> {
    if mesh.forest_id() != other.forest_id() {
        return Err(Error::InvalidArgument("meshes do not share a bisection forest".into()));
    }
    let mut cur = mesh.clone();
    loop {
        let index = cur.key_index();
        let mut marked: Vec<usize> = Vec::new();
        for t in 0..other.n_triangles() {
            let key = other.lineage(t).key();
            // strict ancestor of `t` present in `cur` means `cur` is coarser there
            if let Some(a) = (1..=key.1).find_map(|l| ancestor_key(key, l).and_then(|k| index.get(&k).copied())) {
                marked.push(a);
            }
        }
        if marked.is_empty() {
            return Ok(cur);
        }
        marked.sort_unstable();
        marked.dedup();
        cur = cur.refine(&marked)?;
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal length");
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma).powi(2);
        sbb += (rb[i] - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Lamination of the benchmarks: period 0.5 mm, fill factor 0.95.
pub fn benchmark_profile() -> ThicknessProfile {
    ThicknessProfile::from_fill_factor(0.5e-3, 0.95).expect("valid constants")
}

/// Peak source field of the benchmarks (A/m).
pub const BENCHMARK_H0: f64 = 1000.0;

/// Half-width of the benchmark sheets (m).
const A: f64 = 1e-3;

/// Square sheet `[-1 mm, 1 mm]²` in the middle of a `4 mm` air box, in a
/// uniform field along x. The air box boundary pins the scalar potential,
/// so the field far from the sheet equals the source field. `n` cells per
/// millimetre.
pub fn slab_benchmark(n: usize) -> Result<ProblemSetup> {
    let mesh = build_grid_mesh([-2.0 * A, -2.0 * A], 4.0 * A, 4.0 * A, 4 * n, 4 * n, |p| {
        Some(if p[0].abs() < A && p[1].abs() < A { Region::Conductor } else { Region::Air })
    })?;
    benchmark_setup(mesh.retag_boundary(|_| BoundaryTag::Symmetry), [BENCHMARK_H0, 0.0])
}

/// L-shaped sheet `[0, 2 mm]² \ (1 mm, 2 mm]²` in a `4 mm` air box, in a
/// uniform diagonal field. The eddy currents crowd at the re-entrant corner
/// `(1 mm, 1 mm)`.
pub fn l_shape_benchmark(n: usize) -> Result<ProblemSetup> {
    let mesh = build_grid_mesh([-A, -A], 4.0 * A, 4.0 * A, 4 * n, 4 * n, |p| {
        let inside = p[0] > 0.0 && p[1] > 0.0 && p[0] < 2.0 * A && p[1] < 2.0 * A && !(p[0] > A && p[1] > A);
        Some(if inside { Region::Conductor } else { Region::Air })
    })?;
    let h = BENCHMARK_H0 / 2f64.sqrt();
    benchmark_setup(mesh.retag_boundary(|_| BoundaryTag::Symmetry), [h, -h])
}

/// The slab without its rim: a `1 mm` patch with symmetry cuts on all
/// sides, i.e. a piece of an infinite sheet, whose exact solution is the
/// classic 1D skin-effect field (see `slab_losses`).
pub fn periodic_slab(n: usize) -> Result<ProblemSetup> {
    let mesh = build_rect_mesh(A, A, n, n, |_| Region::Conductor)?;
    benchmark_setup(mesh.retag_boundary(|_| BoundaryTag::Symmetry), [BENCHMARK_H0, 0.0])
}

fn benchmark_setup(mesh: Mesh2D, h: [f64; 2]) -> Result<ProblemSetup> {
    ProblemSetup::new(
        Arc::new(mesh),
        benchmark_profile(),
        Materials::electrical_steel(),
        50.0,
        Excitation::Uniform(h),
        Orders::default(),
    )
}
