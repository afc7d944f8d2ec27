//! Level-set descriptions of the interface, with a small catalog of named
//! geometries selectable at runtime.

use crate::geo::Vec3;

type PhiFn = Box<dyn Fn(&Vec3) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;

/// A scalar level-set function; the interface is its zero set and the region
/// where `phi < 0` is the "minus" subdomain.
pub struct LevelSet {
    pub name: String,
    phi: PhiFn,
    grad: Option<GradFn>,
}

impl LevelSet {
    pub fn new(name: impl Into<String>, phi: PhiFn, grad: Option<GradFn>) -> Self {
        Self { name: name.into(), phi, grad }
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        (self.phi)(x)
    }

    /// Gradient of phi; falls back to a central difference when no closed
    /// form was registered.
    pub fn grad(&self, x: &Vec3) -> Vec3 {
        match &self.grad {
            Some(g) => g(x),
            None => {
                let d = 1e-6 * (1.0 + x.norm());
                let mut g = Vec3::zeros();
                for i in 0..3 {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[i] += d;
                    xm[i] -= d;
                    g[i] = ((self.phi)(&xp) - (self.phi)(&xm)) / (2.0 * d);
                }
                g
            }
        }
    }
}

impl std::fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LevelSet({})", self.name)
    }
}

/// Plane interface `x_1 = x0`, minus side at `x_1 < x0`.
pub fn plane_x(x0: f64) -> LevelSet {
    LevelSet::new(
        format!("plane-x({x0})"),
        Box::new(move |x: &Vec3| x.x - x0),
        Some(Box::new(|_x: &Vec3| Vec3::x())),
    )
}

/// Sphere of radius `r` centered at the origin: `phi = |x|^2 - r^2`.
pub fn sphere(r: f64) -> LevelSet {
    LevelSet::new(
        format!("sphere({r})"),
        Box::new(move |x: &Vec3| x.norm_squared() - r * r),
        Some(Box::new(|x: &Vec3| 2.0 * x)),
    )
}

/// First torus-like component of the twisted pair:
/// `phi1 = (sqrt((x+0.3)^2 + y^2) - 0.2)^2 + z^2 - (pi/5)^2`.
pub fn torus_phi1(x: &Vec3) -> f64 {
    let rho = ((x.x + 0.3) * (x.x + 0.3) + x.y * x.y).sqrt();
    (rho - 0.2) * (rho - 0.2) + x.z * x.z - (std::f64::consts::PI / 5.0).powi(2)
}

pub fn torus_phi1_grad(x: &Vec3) -> Vec3 {
    let rho = ((x.x + 0.3) * (x.x + 0.3) + x.y * x.y).sqrt();
    let s = 2.0 * (rho - 0.2) / rho;
    Vec3::new(s * (x.x + 0.3), s * x.y, 2.0 * x.z)
}

/// Second component, with the roles of `y` and `z` swapped and the offset
/// sign flipped.
pub fn torus_phi2(x: &Vec3) -> f64 {
    let rho = ((x.x - 0.3) * (x.x - 0.3) + x.z * x.z).sqrt();
    (rho - 0.2) * (rho - 0.2) + x.y * x.y - (std::f64::consts::PI / 5.0).powi(2)
}

pub fn torus_phi2_grad(x: &Vec3) -> Vec3 {
    let rho = ((x.x - 0.3) * (x.x - 0.3) + x.z * x.z).sqrt();
    let s = 2.0 * (rho - 0.2) / rho;
    Vec3::new(s * (x.x - 0.3), 2.0 * x.y, s * x.z)
}

/// Two interlocked tori: `phi = min(phi1, phi2)`.
pub fn twisted_tori() -> LevelSet {
    LevelSet::new(
        "twisted-tori",
        Box::new(|x: &Vec3| torus_phi1(x).min(torus_phi2(x))),
        Some(Box::new(|x: &Vec3| {
            if torus_phi1(x) <= torus_phi2(x) {
                torus_phi1_grad(x)
            } else {
                torus_phi2_grad(x)
            }
        })),
    )
}

/// Runtime catalog of level sets. `param` configures the geometry where it
/// applies (plane offset, sphere radius); `None` selects the default used by
/// the benchmark suite.
pub fn level_set_by_name(name: &str, param: Option<f64>) -> Option<LevelSet> {
    match name {
        "plane" => Some(plane_x(param.unwrap_or(0.05))),
        "sphere" => Some(sphere(param.unwrap_or(std::f64::consts::PI / 5.0))),
        "tori" | "twisted-tori" => Some(twisted_tori()),
        _ => None,
    }
}
