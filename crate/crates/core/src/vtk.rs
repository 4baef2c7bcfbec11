//! Legacy ASCII VTK output (UNSTRUCTURED_GRID) for ParaView and friends.

use std::io::Write;

use crate::error::Result;
use crate::estimator::{loss_norm_per_element, IndicatorField, MsfemSolution};
use crate::mesh::Region;
use crate::C64;

fn region_id(r: Region) -> u8 {
    match r {
        Region::Conductor => 1,
        Region::Air => 0,
    }
}

/// Writes the mesh with, per triangle, the region, `η²_T`, the loss density
/// (W/m² of sheet area), `T₂` and `curl T₂` at the centroid, and per vertex
/// the scalar potential `Φ₀`. Fields are zero where they are undefined.
pub fn write_solution(mut w: impl Write, sol: &MsfemSolution, indicators: Option<&IndicatorField>) -> Result<()> {
    let mesh = sol.mesh();
    let setup = sol.setup();
    let nt = mesh.n_triangles();
    let zero = C64::new(0.0, 0.0);

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "msfem-eddy solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }

    let norms = loss_norm_per_element(setup, sol.t_space(), sol.t2())?;
    let mut t2 = vec![[zero; 2]; nt];
    let mut curl = vec![zero; nt];
    for t in 0..nt {
        if sol.t_space().is_active(t) {
            let c = mesh.centroid(t);
            t2[t] = sol.t_space().interpolate(sol.t2(), c, t)?;
            curl[t] = sol.t_space().curl2d(sol.t2(), c, t)?;
        }
    }

    writeln!(w, "CELL_DATA {nt}")?;
    writeln!(w, "SCALARS region int 1\nLOOKUP_TABLE default")?;
    for &r in mesh.regions() {
        writeln!(w, "{}", region_id(r))?;
    }
    writeln!(w, "SCALARS eta_sq double 1\nLOOKUP_TABLE default")?;
    for t in 0..nt {
        writeln!(w, "{:e}", indicators.map_or(0.0, |i| i.eta_sq(t)))?;
    }
    writeln!(w, "SCALARS loss_density double 1\nLOOKUP_TABLE default")?;
    for t in 0..nt {
        writeln!(w, "{:e}", 0.5 * norms[t] / mesh.area(t))?;
    }
    for (name, part) in [("T2_re", 0), ("T2_im", 1)] {
        writeln!(w, "VECTORS {name} double")?;
        for v in &t2 {
            let (x, y) = if part == 0 { (v[0].re, v[1].re) } else { (v[0].im, v[1].im) };
            writeln!(w, "{x:e} {y:e} 0")?;
        }
    }
    for (name, part) in [("curlT2_re", 0), ("curlT2_im", 1)] {
        writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
        for c in &curl {
            writeln!(w, "{:e}", if part == 0 { c.re } else { c.im })?;
        }
    }

    writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
    let phi: Vec<C64> = (0..mesh.n_vertices())
        .map(|v| sol.phi_space().vertex_dof(v).map_or(zero, |d| sol.phi0()[d]))
        .collect();
    for (name, part) in [("Phi0_re", 0), ("Phi0_im", 1)] {
        writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
        for p in &phi {
            writeln!(w, "{:e}", if part == 0 { p.re } else { p.im })?;
        }
    }
    Ok(())
}
