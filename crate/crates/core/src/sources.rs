//! Prescribed excitation: the in-plane field of z-directed source currents.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_interval;

/// A z-directed current carried either by a rectangle with uniform current
/// density or by a concentrated wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceRegion {
    /// `[x0, x1] x [y0, y1]` carrying current density `j_z` (A/m²).
    Rect { x0: f64, x1: f64, y0: f64, y1: f64, j_z: f64 },
    /// Infinitely thin wire at `(x, y)` carrying current `current` (A).
    Wire { x: f64, y: f64, current: f64 },
}

impl SourceRegion {
    pub fn total_current(&self) -> f64 {
        match *self {
            SourceRegion::Rect { x0, x1, y0, y1, j_z } => j_z * (x1 - x0) * (y1 - y0),
            SourceRegion::Wire { current, .. } => current,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        match *self {
            SourceRegion::Rect { x0, x1, y0, y1, j_z } => SourceRegion::Rect { x0, x1, y0, y1, j_z: c * j_z },
            SourceRegion::Wire { x, y, current } => SourceRegion::Wire { x, y, current: c * current },
        }
    }
}

/// Collection of source regions integrated with a fixed tensor Gauss rule.
#[derive(Debug, Clone)]
pub struct BiotSavartSource {
    regions: Vec<SourceRegion>,
    order: usize,
    // Precomputed (x, y, I) quadrature currents.
    filaments: Vec<[f64; 3]>,
    warnings: Vec<String>,
}

impl BiotSavartSource {
    pub fn new(regions: Vec<SourceRegion>) -> Result<Self> {
        Self::with_order(regions, 4)
    }

    /// `order` Gauss points per direction on each rectangle.
    pub fn with_order(regions: Vec<SourceRegion>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("source quadrature order must be at least 1".into()));
        }
        let mut filaments = Vec::new();
        for (k, r) in regions.iter().enumerate() {
            match *r {
                SourceRegion::Rect { x0, x1, y0, y1, j_z } => {
                    let finite = [x0, x1, y0, y1, j_z].iter().all(|v| v.is_finite());
                    if !finite || !(x1 > x0) || !(y1 > y0) {
                        return Err(Error::InvalidArgument(format!("source region {k} is not a valid rectangle")));
                    }
                    for (x, wx) in gauss_interval(order, x0, x1) {
                        for &(y, wy) in &gauss_interval(order, y0, y1) {
                            filaments.push([x, y, j_z * wx * wy]);
                        }
                    }
                }
                SourceRegion::Wire { x, y, current } => {
                    if ![x, y, current].iter().all(|v| v.is_finite()) {
                        return Err(Error::InvalidArgument(format!("source wire {k} has non-finite data")));
                    }
                    filaments.push([x, y, current]);
                }
            }
        }
        let net: f64 = regions.iter().map(SourceRegion::total_current).sum();
        let scale: f64 = regions.iter().map(|r| r.total_current().abs()).sum();
        let mut warnings = Vec::new();
        if scale > 0.0 && net.abs() > 1e-9 * scale {
            warnings.push(format!("net source current is {net:e} A; the far field decays only like 1/r"));
        }
        Ok(Self { regions, order, filaments, warnings })
    }

    pub fn regions(&self) -> &[SourceRegion] {
        &self.regions
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn net_current(&self) -> f64 {
        self.regions.iter().map(SourceRegion::total_current).sum()
    }

    /// Same geometry with every current multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::with_order(self.regions.iter().map(|r| r.scaled(c)).collect(), self.order)
            .expect("scaling keeps regions valid")
    }

    /// In-plane field `H = Σ I/(2π) (-(y - y'), x - x') / |r - r'|²`.
    pub fn eval_hbs(&self, p: [f64; 2]) -> [f64; 2] {
        let mut h = [0.0; 2];
        for &[x, y, i] in &self.filaments {
            let dx = p[0] - x;
            let dy = p[1] - y;
            let r2 = dx * dx + dy * dy;
            if r2 == 0.0 {
                continue;
            }
            let f = i / (2.0 * PI * r2);
            h[0] -= f * dy;
            h[1] += f * dx;
        }
        h
    }
}

/// Source field used by the solver.
#[derive(Debug, Clone)]
pub enum Excitation {
    /// Spatially constant in-plane field (A/m).
    Uniform([f64; 2]),
    Sources(BiotSavartSource),
}

impl Excitation {
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        match self {
            Excitation::Uniform(h) => *h,
            Excitation::Sources(s) => s.eval_hbs(p),
        }
    }

    /// Whether the field is constant, so low-order quadrature is exact.
    pub fn is_uniform(&self) -> bool {
        matches!(self, Excitation::Uniform(_))
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Excitation::Uniform(h) => Excitation::Uniform([c * h[0], c * h[1]]),
            Excitation::Sources(s) => Excitation::Sources(s.scaled(c)),
        }
    }
}
