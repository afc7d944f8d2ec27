//! Quadrature rules on edges, triangles, and tetrahedra.
//!
//! Higher-degree simplex rules are built as collapsed Gauss–Legendre product
//! rules (Duffy-type map), which makes their polynomial exactness a
//! consequence of the 1D rule alone — no hand-copied simplex tables.

use crate::geo::Vec3;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, t);
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    x.reverse();
    w.reverse();
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// A quadrature rule on a reference domain: points with weights.
#[derive(Debug, Clone)]
pub struct Rule {
    /// Barycentric-free points: reference coordinates.
    pub points: Vec<Vec3>,
    /// Weights summing to the reference measure.
    pub weights: Vec<f64>,
}

/// Gauss rule on `[0,1]` (points stored in the x-component).
pub fn edge_rule(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(npts);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|wi| 0.5 * wi).collect(),
    )
}

/// Degree-2 exact rule on the reference triangle `{x,y>=0, x+y<=1}`
/// (3 midpoint-of-edge points, weights 1/6).
pub fn triangle_rule_deg2() -> Rule {
    let pts = [
        Vec3::new(0.5, 0.0, 0.0),
        Vec3::new(0.5, 0.5, 0.0),
        Vec3::new(0.0, 0.5, 0.0),
    ];
    Rule {
        points: pts.to_vec(),
        weights: vec![1.0 / 6.0; 3],
    }
}

/// Collapsed Gauss product rule on the reference triangle, exact at least for
/// polynomials of total degree `2n - 2` with `n` points per axis.
pub fn triangle_rule_gauss(n: usize) -> Rule {
    let (u, wu) = edge_rule(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in u.iter().enumerate() {
            // x = u, y = v (1 - u); Jacobian (1 - u)
            points.push(Vec3::new(ui, vj * (1.0 - ui), 0.0));
            weights.push(wu[i] * wu[j] * (1.0 - ui));
        }
    }
    Rule { points, weights }
}

/// Degree-2 exact 4-point rule on the reference tetrahedron.
pub fn tet_rule_deg2() -> Rule {
    let a = 0.585_410_196_624_968_5;
    let b = 0.138_196_601_125_010_5;
    let pts = [
        Vec3::new(a, b, b),
        Vec3::new(b, a, b),
        Vec3::new(b, b, a),
        Vec3::new(b, b, b),
    ];
    Rule {
        points: pts.to_vec(),
        weights: vec![1.0 / 24.0; 4],
    }
}

/// Collapsed Gauss product rule on the reference tetrahedron, exact at least
/// for polynomials of total degree `2n - 3` with `n` points per axis.
pub fn tet_rule_gauss(n: usize) -> Rule {
    let (u, wu) = edge_rule(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in u.iter().enumerate() {
            for (k, &wk) in u.iter().enumerate() {
                // x = u, y = v(1-u), z = w(1-u)(1-v); Jacobian (1-u)^2 (1-v)
                let x = ui;
                let y = vj * (1.0 - ui);
                let z = wk * (1.0 - ui) * (1.0 - vj);
                points.push(Vec3::new(x, y, z));
                weights.push(wu[i] * wu[j] * wu[k] * (1.0 - ui) * (1.0 - ui) * (1.0 - vj));
            }
        }
    }
    Rule { points, weights }
}

/// Map a reference-triangle rule onto the physical triangle `(a,b,c)`,
/// returning physical points and weights (weights scale by `2*area`).
pub fn map_triangle(rule: &Rule, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec<Vec3>, Vec<f64>) {
    let area = crate::geo::tri_area(a, b, c);
    let scale = 2.0 * area; // reference measure is 1/2
    let pts = rule
        .points
        .iter()
        .map(|p| a + (b - a) * p.x + (c - a) * p.y)
        .collect();
    let wts = rule.weights.iter().map(|w| w * scale).collect();
    (pts, wts)
}

/// Map a reference-tet rule onto the physical tetrahedron `(a,b,c,d)` using
/// the signed volume (weights scale by `6*vol`, which may be negative).
pub fn map_tet(rule: &Rule, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> (Vec<Vec3>, Vec<f64>) {
    let vol = crate::geo::tet_volume(a, b, c, d);
    let scale = 6.0 * vol; // reference measure is 1/6
    let pts = rule
        .points
        .iter()
        .map(|p| a + (b - a) * p.x + (c - a) * p.y + (d - a) * p.z)
        .collect();
    let wts = rule.weights.iter().map(|w| w * scale).collect();
    (pts, wts)
}
