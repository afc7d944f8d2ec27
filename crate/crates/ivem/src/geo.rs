//! Small geometric primitives shared across the crate.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned box domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Box3 {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    /// Cube `(a,b)^3`.
    pub fn cube(a: f64, b: f64) -> Self {
        Self {
            lo: Vec3::new(a, a, a),
            hi: Vec3::new(b, b, b),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.hi - self.lo
    }

    /// True if `x` lies on the boundary of the box up to `tol` (absolute).
    pub fn on_boundary(&self, x: &Vec3, tol: f64) -> bool {
        (0..3).any(|i| (x[i] - self.lo[i]).abs() <= tol || (x[i] - self.hi[i]).abs() <= tol)
    }
}

/// Signed volume of the tetrahedron `(a,b,c,d)`.
pub fn tet_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// Area-weighted normal of triangle `(a,b,c)`: `|n| = area`, direction by the
/// right-hand rule on the vertex order.
pub fn tri_area_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    0.5 * (b - a).cross(&(c - a))
}

pub fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    tri_area_normal(a, b, c).norm()
}

/// Largest interior angle (radians) of triangle `(a,b,c)`.
pub fn tri_max_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let angle = |p: &Vec3, q: &Vec3, r: &Vec3| {
        let u = q - p;
        let v = r - p;
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    };
    angle(a, b, c).max(angle(b, c, a)).max(angle(c, a, b))
}

/// Surface gradients of the three barycentric (P1) shape functions of a
/// triangle embedded in 3D. For vertex values `d_k`, the in-plane gradient of
/// the linear interpolant is `sum_k d_k * g_k`.
pub fn tri_p1_gradients(a: &Vec3, b: &Vec3, c: &Vec3) -> [Vec3; 3] {
    let n = tri_area_normal(a, b, c);
    let area2 = 2.0 * n.norm();
    let nh = n / n.norm();
    // Gradient of lambda_a is perpendicular to edge (b,c), in-plane,
    // with magnitude |bc| / (2 area) pointing toward a.
    let g = |p: &Vec3, q: &Vec3| -> Vec3 {
        // lambda for the vertex opposite edge (p,q)
        nh.cross(&(q - p)) / area2
    };
    [g(b, c), g(c, a), g(a, b)]
}

/// Barycentric coordinates of `x` with respect to triangle `(a,b,c)` assuming
/// `x` lies (close to) the triangle plane.
pub fn tri_barycentric(a: &Vec3, b: &Vec3, c: &Vec3, x: &Vec3) -> [f64; 3] {
    let n = tri_area_normal(a, b, c);
    let total = n.norm_squared();
    let la = tri_area_normal(x, b, c).dot(&n) / total;
    let lb = tri_area_normal(a, x, c).dot(&n) / total;
    [la, lb, 1.0 - la - lb]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tet_volume_reference() {
        let v = tet_volume(
            &Vec3::zeros(),
            &Vec3::x(),
            &Vec3::y(),
            &Vec3::z(),
        );
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn p1_gradients_reproduce_linear() {
        let a = Vec3::new(0.2, 0.1, 0.4);
        let b = Vec3::new(1.1, 0.3, 0.2);
        let c = Vec3::new(0.4, 1.2, 0.9);
        let f = |x: &Vec3| 3.0 * x.x - 2.0 * x.y + 0.5 * x.z;
        let g = tri_p1_gradients(&a, &b, &c);
        let grad = f(&a) * g[0] + f(&b) * g[1] + f(&c) * g[2];
        // The surface gradient is the tangential part of (3,-2,0.5).
        let full = Vec3::new(3.0, -2.0, 0.5);
        let n = tri_area_normal(&a, &b, &c).normalize();
        let tang = full - full.dot(&n) * n;
        assert!((grad - tang).norm() < 1e-12);
    }

    #[test]
    fn barycentric_at_vertices() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let l = tri_barycentric(&a, &b, &c, &b);
        assert!((l[0]).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14);
    }
}
