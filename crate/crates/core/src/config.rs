//! Run configuration: a TOML file with the sections `geometry`, `sheet`,
//! `materials`, `excitation`, `discretization`, `adaptivity` and `output`.
//!
//! ```toml
//! [geometry]
//! kind = "benchmark"      # "benchmark", "rect" or "mesh"
//! name = "slab"           # slab | l-shape | periodic-slab
//! cells_per_mm = 1
//!
//! [sheet]
//! d = 0.5e-3
//! fill_factor = 0.95      # or d_fe and d_0
//!
//! [materials]
//! sigma = 2.08e6
//! mu_r = 1000.0
//!
//! [excitation]
//! frequency = 50.0
//! h_bs = [1000.0, 0.0]    # or a list of [[excitation.sources]]
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::assembly::{Materials, Orders, ProblemSetup, MU0};
use crate::error::{Error, Result};
use crate::estimator::AdaptOptions;
use crate::mesh::{build_grid_mesh, BoundaryTag, Mesh2D, Region};
use crate::reference;
use crate::sources::{BiotSavartSource, Excitation, SourceRegion};
use crate::thickness::ThicknessProfile;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub sheet: SheetConfig,
    pub materials: MaterialsConfig,
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub adaptivity: AdaptivityConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    /// One of the shipped benchmark meshes.
    Benchmark { name: String, cells_per_mm: usize },
    /// Structured grid over a rectangle; triangles whose centroid lies in one
    /// of `conductors` (`[x0, x1, y0, y1]`) are conducting, the rest is air.
    /// Without `conductors` the whole rectangle conducts.
    Rect {
        #[serde(default)]
        origin: [f64; 2],
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        #[serde(default)]
        conductors: Option<Vec<[f64; 4]>>,
        #[serde(default)]
        boundary: SideTags,
    },
    /// Mesh file in the text format (path relative to the config file).
    Mesh { path: PathBuf },
}

/// Boundary tags of the four sides of a `rect` geometry.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideTags {
    #[serde(default = "symmetry")]
    pub left: String,
    #[serde(default = "symmetry")]
    pub right: String,
    #[serde(default = "symmetry")]
    pub bottom: String,
    #[serde(default = "symmetry")]
    pub top: String,
}

fn symmetry() -> String {
    "symmetry".into()
}

impl Default for SideTags {
    fn default() -> Self {
        Self { left: symmetry(), right: symmetry(), bottom: symmetry(), top: symmetry() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetConfig {
    pub d: Option<f64>,
    pub fill_factor: Option<f64>,
    pub d_fe: Option<f64>,
    pub d_0: Option<f64>,
}

/// Conductivity of the sheet and relative permeabilities per region.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub sigma: f64,
    pub mu_r: f64,
    #[serde(default = "one")]
    pub mu_r_insulation: f64,
    #[serde(default = "one")]
    pub mu_r_air: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub frequency: f64,
    pub h_bs: Option<[f64; 2]>,
    pub sources: Option<Vec<SourceRegion>>,
    #[serde(default = "source_order")]
    pub source_order: usize,
}

fn source_order() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub edge_order: usize,
    pub h1_order: usize,
    pub flux_order: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        let o = Orders::default();
        Self { edge_order: o.edge, h1_order: o.h1, flux_order: o.flux }
    }
}

/// How the error column of the adaptive history is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    None,
    /// Uniformly refined solution of the initial mesh, `overkill_levels` deep.
    Overkill,
    /// Infinite-sheet solution; only meaningful for a uniform `h_bs`.
    Analytic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptivityConfig {
    #[serde(default = "threshold")]
    pub threshold: f64,
    #[serde(default = "max_iterations")]
    pub max_iterations: usize,
    pub dof_budget: Option<usize>,
    #[serde(default = "reference_kind")]
    pub reference: ReferenceKind,
    #[serde(default = "overkill_levels")]
    pub overkill_levels: usize,
}

fn threshold() -> f64 {
    0.5
}
fn max_iterations() -> usize {
    10
}
fn reference_kind() -> ReferenceKind {
    ReferenceKind::None
}
fn overkill_levels() -> usize {
    2
}

impl Default for AdaptivityConfig {
    fn default() -> Self {
        Self {
            threshold: threshold(),
            max_iterations: max_iterations(),
            dof_budget: None,
            reference: reference_kind(),
            overkill_levels: overkill_levels(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_dir")]
    pub directory: PathBuf,
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: out_dir() }
    }
}

/// A parsed configuration together with its source text (for diagnostics
/// and the run manifest).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub text: String,
    pub base_dir: PathBuf,
}

/// 1-based line of `key = ...` inside `[section]` (or a dotted subsection).
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section || current.starts_with(&format!("{section}.")) {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn section_line(text: &str, section: &str) -> usize {
    text.lines()
        .position(|l| l.split('#').next().unwrap_or("").trim() == format!("[{section}]"))
        .map_or(1, |i| i + 1)
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::ConfigAt { line: 1, message: "configuration is empty".into() });
        }
        let config: Config = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].lines().count().max(1));
            let line = match e.span() {
                Some(s) if text[..s.start.min(text.len())].ends_with('\n') => line + 1,
                _ => line,
            };
            Error::ConfigAt { line, message: e.message().to_string() }
        })?;
        let loaded = Self { config, text: text.to_string(), base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    fn fail(&self, section: &str, key: &str, message: String) -> Error {
        let line = key_line(&self.text, section, key).unwrap_or_else(|| section_line(&self.text, section));
        Error::ConfigAt { line, message: format!("{section}.{key}: {message}") }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let positive = |section: &str, key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(self.fail(section, key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("materials", "sigma", c.materials.sigma)?;
        positive("materials", "mu_r", c.materials.mu_r)?;
        positive("materials", "mu_r_insulation", c.materials.mu_r_insulation)?;
        positive("materials", "mu_r_air", c.materials.mu_r_air)?;
        let f = c.excitation.frequency;
        if !(f >= 0.0 && f.is_finite()) {
            return Err(self.fail("excitation", "frequency", format!("must be non-negative, got {f}")));
        }
        match (&c.excitation.h_bs, &c.excitation.sources) {
            (Some(_), Some(_)) => {
                return Err(self.fail("excitation", "h_bs", "give either h_bs or sources, not both".into()))
            }
            (None, None) => return Err(self.fail("excitation", "h_bs", "missing source field (h_bs or sources)".into())),
            (Some(h), None) if !h.iter().all(|v| v.is_finite()) => {
                return Err(self.fail("excitation", "h_bs", "must be finite".into()))
            }
            _ => {}
        }
        let s = &c.sheet;
        match (s.d, s.fill_factor, s.d_fe, s.d_0) {
            (Some(d), Some(ff), None, None) => {
                positive("sheet", "d", d)?;
                if !(ff > 0.0 && ff <= 1.0) {
                    return Err(self.fail("sheet", "fill_factor", format!("must lie in (0, 1], got {ff}")));
                }
            }
            (None, None, Some(d_fe), Some(d_0)) => {
                positive("sheet", "d_fe", d_fe)?;
                if !(d_0 >= 0.0 && d_0.is_finite()) {
                    return Err(self.fail("sheet", "d_0", format!("must be non-negative, got {d_0}")));
                }
            }
            _ => {
                return Err(Error::ConfigAt {
                    line: section_line(&self.text, "sheet"),
                    message: "sheet: give either d and fill_factor, or d_fe and d_0".into(),
                })
            }
        }
        let d = &c.discretization;
        for (key, o) in [("edge_order", d.edge_order), ("h1_order", d.h1_order), ("flux_order", d.flux_order)] {
            if !(1..=2).contains(&o) {
                return Err(self.fail("discretization", key, format!("must be 1 or 2, got {o}")));
            }
        }
        let a = &c.adaptivity;
        if !(a.threshold > 0.0 && a.threshold <= 1.0) {
            return Err(self.fail("adaptivity", "threshold", format!("must lie in (0, 1], got {}", a.threshold)));
        }
        if a.reference == ReferenceKind::Overkill && a.overkill_levels == 0 {
            return Err(self.fail("adaptivity", "overkill_levels", "must be at least 1".into()));
        }
        if a.reference == ReferenceKind::Analytic && c.excitation.h_bs.is_none() {
            return Err(self.fail("adaptivity", "reference", "the analytic reference needs a uniform h_bs".into()));
        }
        match &c.geometry {
            GeometryConfig::Benchmark { name, cells_per_mm } => {
                if !["slab", "l-shape", "periodic-slab"].contains(&name.as_str()) {
                    return Err(self.fail(
                        "geometry",
                        "name",
                        format!("unknown benchmark '{name}' (slab, l-shape, periodic-slab)"),
                    ));
                }
                if *cells_per_mm == 0 {
                    return Err(self.fail("geometry", "cells_per_mm", "must be at least 1".into()));
                }
            }
            GeometryConfig::Rect { width, height, nx, ny, boundary, .. } => {
                positive("geometry", "width", *width)?;
                positive("geometry", "height", *height)?;
                if *nx == 0 || *ny == 0 {
                    return Err(self.fail("geometry", if *nx == 0 { "nx" } else { "ny" }, "must be at least 1".into()));
                }
                for (key, tag) in
                    [("left", &boundary.left), ("right", &boundary.right), ("bottom", &boundary.bottom), ("top", &boundary.top)]
                {
                    if !matches!(BoundaryTag::parse(tag), Some(BoundaryTag::Outer | BoundaryTag::Symmetry)) {
                        return Err(self.fail("geometry.boundary", key, format!("must be 'outer' or 'symmetry', got '{tag}'")));
                    }
                }
            }
            GeometryConfig::Mesh { .. } => {}
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<ThicknessProfile> {
        let s = &self.config.sheet;
        match (s.d, s.fill_factor, s.d_fe, s.d_0) {
            (Some(d), Some(ff), _, _) => ThicknessProfile::from_fill_factor(d, ff),
            (_, _, Some(d_fe), Some(d_0)) => ThicknessProfile::new(d_fe, d_0),
            _ => unreachable!("validated"),
        }
    }

    pub fn materials(&self) -> Materials {
        let m = &self.config.materials;
        Materials { sigma: m.sigma, mu_fe: m.mu_r * MU0, mu_insulation: m.mu_r_insulation * MU0, mu_air: m.mu_r_air * MU0 }
    }

    pub fn orders(&self) -> Orders {
        let d = &self.config.discretization;
        Orders { edge: d.edge_order, h1: d.h1_order, flux: d.flux_order }
    }

    pub fn excitation(&self) -> Result<Excitation> {
        let e = &self.config.excitation;
        match (&e.h_bs, &e.sources) {
            (Some(h), _) => Ok(Excitation::Uniform(*h)),
            (_, Some(regions)) => BiotSavartSource::with_order(regions.clone(), e.source_order)
                .map(Excitation::Sources)
                .map_err(|err| self.fail("excitation", "sources", err.to_string())),
            _ => unreachable!("validated"),
        }
    }

    /// Builds the mesh; mesh-file errors keep their own line numbers.
    pub fn mesh(&self) -> Result<Mesh2D> {
        match &self.config.geometry {
            GeometryConfig::Benchmark { name, cells_per_mm } => {
                let setup = match name.as_str() {
                    "slab" => reference::slab_benchmark(*cells_per_mm)?,
                    "l-shape" => reference::l_shape_benchmark(*cells_per_mm)?,
                    _ => reference::periodic_slab(*cells_per_mm)?,
                };
                Ok(setup.mesh().as_ref().clone())
            }
            GeometryConfig::Rect { origin, width, height, nx, ny, conductors, boundary } => {
                let inside = |p: [f64; 2]| match conductors {
                    None => true,
                    Some(list) => list.iter().any(|r| p[0] > r[0] && p[0] < r[1] && p[1] > r[2] && p[1] < r[3]),
                };
                let mesh = build_grid_mesh(*origin, *width, *height, *nx, *ny, |p| {
                    Some(if inside(p) { Region::Conductor } else { Region::Air })
                })?;
                let tol = 1e-9 * width.max(*height);
                let tag = |s: &str| BoundaryTag::parse(s).expect("validated");
                Ok(mesh.retag_boundary(|p| {
                    if (p[0] - origin[0]).abs() < tol {
                        tag(&boundary.left)
                    } else if (p[0] - origin[0] - width).abs() < tol {
                        tag(&boundary.right)
                    } else if (p[1] - origin[1]).abs() < tol {
                        tag(&boundary.bottom)
                    } else {
                        tag(&boundary.top)
                    }
                }))
            }
            GeometryConfig::Mesh { path } => {
                let full = self.base_dir.join(path);
                let file = fs::File::open(&full)
                    .map_err(|e| self.fail("geometry", "path", format!("cannot open {}: {e}", full.display())))?;
                Mesh2D::read_text(std::io::BufReader::new(file))
            }
        }
    }

    pub fn setup(&self) -> Result<ProblemSetup> {
        let mesh = self.mesh()?;
        if !mesh.has_conductor() {
            return Err(Error::ConfigAt {
                line: section_line(&self.text, "geometry"),
                message: "geometry: the mesh has no conductor region".into(),
            });
        }
        ProblemSetup::new(
            Arc::new(mesh),
            self.profile()?,
            self.materials(),
            self.config.excitation.frequency,
            self.excitation()?,
            self.orders(),
        )
    }

    pub fn adapt_options(&self) -> AdaptOptions {
        let a = &self.config.adaptivity;
        AdaptOptions {
            max_iterations: a.max_iterations,
            dof_budget: a.dof_budget.unwrap_or(usize::MAX),
            threshold: a.threshold,
            uniform: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SLAB: &str = r#"
[geometry]
kind = "benchmark"
name = "slab"
cells_per_mm = 1

[sheet]
d = 0.5e-3
fill_factor = 0.95

[materials]
sigma = 2.08e6
mu_r = 1000.0

[excitation]
frequency = 50.0
h_bs = [1000.0, 0.0]
"#;

    fn load(text: &str) -> Result<LoadedConfig> {
        LoadedConfig::from_str(text, PathBuf::new())
    }

    #[test]
    fn slab_config_builds() {
        let c = load(SLAB).unwrap();
        let s = c.setup().unwrap();
        assert!((s.profile().d_fe() - 0.475e-3).abs() < 1e-15);
        assert_eq!(s.orders(), Orders::default());
        assert_eq!(c.adapt_options().threshold, 0.5);
    }

    #[test]
    fn negative_sigma_names_field_and_line() {
        match load(&SLAB.replace("sigma = 2.08e6", "sigma = -1.0")) {
            Err(Error::ConfigAt { line, message }) => {
                assert_eq!(line, 12);
                assert!(message.contains("materials.sigma"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        match load(&SLAB.replace("mu_r = 1000.0", "mu_r = = 1000.0")) {
            Err(Error::ConfigAt { line, .. }) => assert_eq!(line, 13),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(load(&SLAB.replace("mu_r = 1000.0", "mu_r = 1000.0\nmu_x = 1.0")), Err(Error::ConfigAt { .. })));
    }

    #[test]
    fn empty_config_is_rejected() {
        assert!(matches!(load("  \n"), Err(Error::ConfigAt { line: 1, .. })));
    }

    #[test]
    fn rect_geometry_with_air() {
        let text = SLAB.replace(
            "kind = \"benchmark\"\nname = \"slab\"\ncells_per_mm = 1",
            "kind = \"rect\"\norigin = [-2e-3, -2e-3]\nwidth = 4e-3\nheight = 4e-3\nnx = 4\nny = 4\nconductors = [[-1e-3, 1e-3, -1e-3, 1e-3]]",
        );
        let c = load(&text).unwrap();
        let m = c.mesh().unwrap();
        let cond = (0..m.n_triangles()).filter(|&t| m.region(t) == Region::Conductor).count();
        assert_eq!((m.n_triangles(), cond), (32, 8));
    }

    #[test]
    fn rect_without_conductor_is_a_config_error() {
        let text = SLAB.replace(
            "kind = \"benchmark\"\nname = \"slab\"\ncells_per_mm = 1",
            "kind = \"rect\"\nwidth = 1e-3\nheight = 1e-3\nnx = 2\nny = 2\nconductors = []",
        );
        assert!(matches!(load(&text).unwrap().setup(), Err(Error::ConfigAt { .. })));
    }
}
