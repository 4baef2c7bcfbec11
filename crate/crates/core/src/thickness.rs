//! Through-thickness ingredients of the 2D/1D method.
//!
//! The sheet occupies `z ∈ [-d_fe/2, d_fe/2]`; the insulation layer is split
//! evenly on both sides so that one lamination period spans `[-d/2, d/2]`.
//! All shape functions are written in the scaled variable `s = 2z/d_fe`.

use crate::error::{Error, Result};

/// Prescribed polynomial profiles across the sheet thickness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Constant profile, extended by 1 into the insulation.
    Phi0,
    /// Antiderivative of `Phi0`; sheet only.
    Phi1Hat,
    /// Even quadratic profile vanishing on the sheet surface, extended by 0.
    Phi2,
    /// Antiderivative of `Phi2`; sheet only.
    Phi3Hat,
}

/// Sheet and insulation thicknesses of one lamination period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessProfile {
    d_fe: f64,
    d_0: f64,
}

impl ThicknessProfile {
    pub fn new(d_fe: f64, d_0: f64) -> Result<Self> {
        if !(d_fe > 0.0) || !d_fe.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sheet thickness must be positive, got {d_fe}"
            )));
        }
        if !(d_0 >= 0.0) || !d_0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "insulation thickness must be non-negative, got {d_0}"
            )));
        }
        Ok(Self { d_fe, d_0 })
    }

    /// Period `d` split by the fill factor `d_fe / d`.
    pub fn from_fill_factor(d: f64, fill_factor: f64) -> Result<Self> {
        if !(fill_factor > 0.0 && fill_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fill factor must lie in (0, 1], got {fill_factor}"
            )));
        }
        let d_fe = d * fill_factor;
        Self::new(d_fe, d - d_fe)
    }

    pub fn d_fe(&self) -> f64 {
        self.d_fe
    }

    pub fn d_0(&self) -> f64 {
        self.d_0
    }

    pub fn total(&self) -> f64 {
        self.d_fe + self.d_0
    }

    pub fn fill_factor(&self) -> f64 {
        self.d_fe / self.total()
    }

    /// `K = 2√6 / d_fe²`, the constant with `φ₂' = K φ̂₁` in the sheet.
    pub fn k_const(&self) -> f64 {
        2.0 * 6f64.sqrt() / (self.d_fe * self.d_fe)
    }

    pub fn in_sheet(&self, z: f64) -> bool {
        z.abs() <= 0.5 * self.d_fe
    }
}

/// Evaluates a shape function at height `z` within one lamination period.
pub fn eval_shape(which: Shape, z: f64, profile: &ThicknessProfile) -> Result<f64> {
    let half = 0.5 * profile.total();
    if !(z.abs() <= half * (1.0 + 1e-14)) {
        return Err(Error::Domain(format!(
            "z = {z} lies outside the lamination period [-{half}, {half}]"
        )));
    }
    let d = profile.d_fe();
    let inside = profile.in_sheet(z);
    let s = 2.0 * z / d;
    match which {
        Shape::Phi0 => Ok(1.0),
        Shape::Phi2 if !inside => Ok(0.0),
        Shape::Phi2 => Ok(0.5 * 1.5f64.sqrt() * (s * s - 1.0)),
        Shape::Phi1Hat | Shape::Phi3Hat if !inside => Err(Error::Domain(format!(
            "{which:?} is only defined inside the sheet, z = {z}"
        ))),
        Shape::Phi1Hat => Ok(0.5 * d * s),
        Shape::Phi3Hat => Ok(d * 6f64.sqrt() / 8.0 * s * (s * s / 3.0 - 1.0)),
    }
}

/// `dφ₂/dz` inside the sheet, zero in the insulation.
pub fn eval_phi2_derivative(z: f64, profile: &ThicknessProfile) -> f64 {
    if profile.in_sheet(z) {
        profile.k_const() * z
    } else {
        0.0
    }
}

/// Thickness integrals of shape-function products weighted by a layered
/// material parameter `κ` (`κ_fe` in the sheet, `κ_0` in the insulation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTable {
    /// `∫ κ φ̂₁²`
    pub phi1hat_sq: f64,
    /// `∫ κ φ₂²`
    pub phi2_sq: f64,
    /// `∫ κ φ₂'²`
    pub dphi2_sq: f64,
    /// `∫ κ φ₀ φ₂`
    pub phi0_phi2: f64,
    /// `∫ κ φ̂₃²`
    pub phi3hat_sq: f64,
    /// `∫ κ φ̂₁ φ̂₃`
    pub phi1hat_phi3hat: f64,
    /// `∫ κ φ₀²` over the whole period, sheet plus insulation.
    pub phi0_sq_full: f64,
    /// `∫ κ φ₀²` over the sheet only.
    pub phi0_sq_sheet: f64,
}

pub fn coefficient_table(kappa_fe: f64, kappa_0: f64, profile: &ThicknessProfile) -> CoefficientTable {
    let d = profile.d_fe();
    let d3 = d * d * d;
    let sqrt6 = 6f64.sqrt();
    CoefficientTable {
        phi1hat_sq: d3 * kappa_fe / 12.0,
        phi2_sq: d * kappa_fe / 5.0,
        dphi2_sq: 2.0 * kappa_fe / d,
        phi0_phi2: -sqrt6 * d * kappa_fe / 6.0,
        phi3hat_sq: 17.0 * d3 * kappa_fe / 840.0,
        phi1hat_phi3hat: -sqrt6 * d3 * kappa_fe / 60.0,
        phi0_sq_full: kappa_fe * d + kappa_0 * profile.d_0(),
        phi0_sq_sheet: kappa_fe * d,
    }
}

impl CoefficientTable {
    /// Entries in a fixed order with their printable names.
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("phi1hat^2", self.phi1hat_sq),
            ("phi2^2", self.phi2_sq),
            ("phi2'^2", self.dphi2_sq),
            ("phi0*phi2", self.phi0_phi2),
            ("phi3hat^2", self.phi3hat_sq),
            ("phi1hat*phi3hat", self.phi1hat_phi3hat),
            ("phi0^2 (sheet+insulation)", self.phi0_sq_full),
            ("phi0^2 (sheet)", self.phi0_sq_sheet),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_sheet() -> ThicknessProfile {
        ThicknessProfile::from_fill_factor(0.5e-3, 0.95).unwrap()
    }

    #[test]
    fn phi2_values() {
        let p = benchmark_sheet();
        let v = eval_shape(Shape::Phi2, 0.0, &p).unwrap();
        assert!((v + 0.5 * 1.5f64.sqrt()).abs() < 1e-15);
        for z in [-0.5 * p.d_fe(), 0.5 * p.d_fe()] {
            assert!(eval_shape(Shape::Phi2, z, &p).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn phi1hat_at_sheet_surface() {
        // φ̂₁ = d s / 2 = z, so the surface value is d_fe / 2.
        let p = benchmark_sheet();
        let v = eval_shape(Shape::Phi1Hat, 0.5 * p.d_fe(), &p).unwrap();
        assert!((v - 0.5 * p.d_fe()).abs() < 1e-18);
    }

    #[test]
    fn insulation_extension() {
        let p = benchmark_sheet();
        let z = 0.5 * p.d_fe() + 0.25 * p.d_0();
        assert_eq!(eval_shape(Shape::Phi0, z, &p).unwrap(), 1.0);
        assert_eq!(eval_shape(Shape::Phi2, z, &p).unwrap(), 0.0);
        assert!(matches!(eval_shape(Shape::Phi1Hat, z, &p), Err(Error::Domain(_))));
        assert!(matches!(eval_shape(Shape::Phi3Hat, z, &p), Err(Error::Domain(_))));
        assert!(matches!(eval_shape(Shape::Phi0, p.total(), &p), Err(Error::Domain(_))));
    }

    #[test]
    fn benchmark_sheet_split() {
        let p = benchmark_sheet();
        assert!((p.d_fe() - 0.475e-3).abs() < 1e-18);
        assert!((p.d_0() - 0.025e-3).abs() < 1e-18);
        let t = coefficient_table(1.0, 1.0, &p);
        assert!((t.dphi2_sq - 2.0 / 0.475e-3).abs() < 1e-9);
        assert!((t.dphi2_sq - 4210.526315789).abs() < 1e-6);
        assert!((t.phi0_sq_full - 0.5e-3).abs() < 1e-18);
        let t = coefficient_table(3.0, 7.0, &p);
        assert!((t.phi0_sq_full - t.phi0_sq_sheet - 7.0 * p.d_0()).abs() < 1e-18);
    }

    #[test]
    fn k_links_phi2_derivative_and_phi1hat() {
        let p = benchmark_sheet();
        let k = p.k_const();
        for i in 0..=100 {
            let z = -0.5 * p.d_fe() + p.d_fe() * i as f64 / 100.0;
            let lhs = eval_phi2_derivative(z, &p);
            let rhs = k * eval_shape(Shape::Phi1Hat, z, &p).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
        // K ∫φ̂₁² = ∫φ₂' φ̂₁
        let t = coefficient_table(1.0, 0.0, &p);
        let lhs = k * t.phi1hat_sq;
        let rhs: f64 = crate::quadrature::gauss_interval(4, -0.5 * p.d_fe(), 0.5 * p.d_fe())
            .iter()
            .map(|&(z, w)| w * eval_phi2_derivative(z, &p) * z)
            .sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    #[test]
    fn invalid_profiles() {
        assert!(ThicknessProfile::new(0.0, 0.0).is_err());
        assert!(ThicknessProfile::new(1e-3, -1e-6).is_err());
        assert!(ThicknessProfile::from_fill_factor(1e-3, 1.5).is_err());
    }
}
