//! Gauss rules on the interval and on the reference triangle.
//!
//! The triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules. They are not the most economical rules for a given degree, but they
//! exist for every degree and are exact by construction.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`, exact for polynomials of degree `2n - 1`.
pub fn gauss_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(&w).map(|(&xi, &wi)| (mid + half * xi, half * wi)).collect()
}

/// A quadrature point on the reference triangle `{(s, t) : s, t >= 0, s + t <= 1}`.
///
/// `bary` holds the barycentric coordinates `(1 - s - t, s, t)`. Weights sum to 1/2.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Triangle rule exact for polynomials of total degree `degree`.
pub fn triangle_rule(degree: usize) -> Vec<TriPoint> {
    let nu = (degree + 3) / 2;
    let nv = (degree + 2) / 2;
    let ru = gauss_interval(nu.max(1), 0.0, 1.0);
    let rv = gauss_interval(nv.max(1), 0.0, 1.0);
    let mut pts = Vec::with_capacity(nu * nv);
    for &(u, wu) in &ru {
        for &(v, wv) in &rv {
            let s = u;
            let t = v * (1.0 - u);
            pts.push(TriPoint {
                bary: [1.0 - s - t, s, t],
                weight: wu * wv * (1.0 - u),
            });
        }
    }
    pts
}
