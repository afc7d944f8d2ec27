//! Benchmark catalog with analytic exact solutions, error norms, convergence
//! studies, and the preconditioner robustness study.
//!
//! Exact solutions carry their derivatives through a small forward-mode
//! second-order jet, so the sources `-div(beta grad u)` and
//! `curl(alpha curl u) + beta u` are exact closed-form compositions; the
//! self-tests re-verify them with finite differences and interface-jump spot
//! checks.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Matrix3;

use crate::assembly::{
    assemble_curl, assemble_h1, edge_moment, elem_vertices, hx_setup, local_edge_nodes,
    plain_sign, tet_barycentric, tet_p1_gradients, System,
};
use crate::config::Config;
use crate::geo::{Box3, Vec3};
use crate::ifespace::Coefficients;
use crate::mesh::{
    build_background_mesh, build_topology, classify_and_cut, plane_x, sphere, twisted_tori,
    CutMeshTopology, LevelSet, RegionSign,
};
use crate::projection::{lift_h1, project_curl, project_value_edge, ElemCtx};
use crate::quadrature::{map_tet, tet_rule_deg2, tet_rule_gauss};
use crate::solver::{
    pcg, Csr, HxPrecond, IdentityPrecond, JacobiPrecond, LdlFactor, Preconditioner, SgsPrecond,
};
use crate::{IvemError, Result};

// ---------------------------------------------------------------------------
// Second-order forward-mode jets (value, gradient, Hessian).
// ---------------------------------------------------------------------------

/// Value, gradient, and Hessian of a scalar field at a point, propagated
/// through arithmetic by the chain rule.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    g: Vec3,
    h: Matrix3<f64>,
}

impl Jet {
    fn constant(c: f64) -> Self {
        Self { v: c, g: Vec3::zeros(), h: Matrix3::zeros() }
    }

    /// The three coordinate jets at `x`.
    fn vars(x: &Vec3) -> [Self; 3] {
        let mut out = [Self::constant(0.0); 3];
        for i in 0..3 {
            out[i].v = x[i];
            out[i].g[i] = 1.0;
        }
        out
    }

    /// Compose with a univariate function given `(f, f', f'')` at `self.v`.
    fn chain(self, f: f64, fp: f64, fpp: f64) -> Self {
        Self { v: f, g: fp * self.g, h: fp * self.h + fpp * (self.g * self.g.transpose()) }
    }

    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos(), -self.v.sin())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin(), -self.v.cos())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, g: self.g + o.g, h: self.h + o.h }
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, g: self.g - o.g, h: self.h - o.h }
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            g: self.v * o.g + o.v * self.g,
            h: self.v * o.h
                + o.v * self.h
                + self.g * o.g.transpose()
                + o.g * self.g.transpose(),
        }
    }
}

impl std::ops::Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        Jet { v: self.v + c, ..self }
    }
}

impl std::ops::Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        Jet { v: self.v - c, ..self }
    }
}

impl std::ops::Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: c * self.v, g: c * self.g, h: c * self.h }
    }
}

// ---------------------------------------------------------------------------
// Exact solutions and the benchmark catalog.
// ---------------------------------------------------------------------------

/// Which equation a benchmark discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    H1,
    HCurl,
}

type ScalarJetFn = Box<dyn Fn(RegionSign, &Vec3) -> Jet + Send + Sync>;

/// A piecewise-smooth scalar exact solution; the source is derived from the
/// jet as `-beta * laplacian`.
pub struct ScalarSolution {
    jet: ScalarJetFn,
    beta: (f64, f64),
}

impl ScalarSolution {
    pub fn u(&self, s: RegionSign, x: &Vec3) -> f64 {
        (self.jet)(s, x).v
    }
    pub fn grad(&self, s: RegionSign, x: &Vec3) -> Vec3 {
        (self.jet)(s, x).g
    }
    pub fn f(&self, s: RegionSign, x: &Vec3) -> f64 {
        let beta = match s {
            RegionSign::Minus => self.beta.0,
            RegionSign::Plus => self.beta.1,
        };
        -beta * (self.jet)(s, x).h.trace()
    }
}

type VecFn = Box<dyn Fn(RegionSign, &Vec3) -> Vec3 + Send + Sync>;

/// A piecewise-smooth vector exact solution with its curl and source.
pub struct VectorSolution {
    u: VecFn,
    curl: VecFn,
    f: VecFn,
}

impl VectorSolution {
    pub fn u(&self, s: RegionSign, x: &Vec3) -> Vec3 {
        (self.u)(s, x)
    }
    pub fn curl(&self, s: RegionSign, x: &Vec3) -> Vec3 {
        (self.curl)(s, x)
    }
    pub fn f(&self, s: RegionSign, x: &Vec3) -> Vec3 {
        (self.f)(s, x)
    }
}

/// Build a vector solution from per-component jets: the source
/// `curl(alpha curl u) + beta u` is `alpha (grad div u - vec-laplacian) +
/// beta u` inside each region.
fn vector_from_jets(
    jets: Arc<dyn Fn(RegionSign, &Vec3) -> [Jet; 3] + Send + Sync>,
    coeff: &Coefficients,
) -> VectorSolution {
    let (am, ap, bm, bp) =
        (coeff.alpha_minus, coeff.alpha_plus, coeff.beta_minus, coeff.beta_plus);
    let ju = jets.clone();
    let jc = jets.clone();
    VectorSolution {
        u: Box::new(move |s, x| {
            let j = ju(s, x);
            Vec3::new(j[0].v, j[1].v, j[2].v)
        }),
        curl: Box::new(move |s, x| {
            let j = jc(s, x);
            Vec3::new(
                j[2].g.y - j[1].g.z,
                j[0].g.z - j[2].g.x,
                j[1].g.x - j[0].g.y,
            )
        }),
        f: Box::new(move |s, x| {
            let (al, be) = match s {
                RegionSign::Minus => (am, bm),
                RegionSign::Plus => (ap, bp),
            };
            let j = jets(s, x);
            let mut out = Vec3::zeros();
            for i in 0..3 {
                let grad_div = j[0].h[(i, 0)] + j[1].h[(i, 1)] + j[2].h[(i, 2)];
                let lap = j[i].h.trace();
                out[i] = al * (grad_div - lap) + be * j[i].v;
            }
            out
        }),
    }
}

pub enum Exact {
    Scalar(ScalarSolution),
    Vector(VectorSolution),
}

/// An interface problem with a known exact solution on a named geometry.
pub struct Benchmark {
    pub name: String,
    pub domain: Box3,
    pub level_set: LevelSet,
    pub coeff: Coefficients,
    pub exact: Exact,
}

impl Benchmark {
    pub fn kind(&self) -> ProblemKind {
        match self.exact {
            Exact::Scalar(_) => ProblemKind::H1,
            Exact::Vector(_) => ProblemKind::HCurl,
        }
    }

    /// Region sign of a point by the level-set sign.
    pub fn region_of(&self, x: &Vec3) -> RegionSign {
        if self.level_set.eval(x) < 0.0 {
            RegionSign::Minus
        } else {
            RegionSign::Plus
        }
    }
}

const SPHERE_R: f64 = std::f64::consts::PI / 5.0;

/// Spherical interface, `u- = exp((|x|^2-r^2)/beta-)`,
/// `u+ = sin((|x|^2-r^2)/beta+) + 1`.
pub fn h1_sphere(beta_plus: f64) -> Benchmark {
    let beta = (1.0, beta_plus);
    let jet = Box::new(move |s: RegionSign, x: &Vec3| {
        let [jx, jy, jz] = Jet::vars(x);
        let g = jx * jx + jy * jy + jz * jz - SPHERE_R * SPHERE_R;
        match s {
            RegionSign::Minus => (g * (1.0 / beta.0)).exp(),
            RegionSign::Plus => (g * (1.0 / beta.1)).sin() + 1.0,
        }
    });
    Benchmark {
        name: format!("h1-sphere(beta+={beta_plus})"),
        domain: Box3::cube(-1.0, 1.0),
        level_set: sphere(SPHERE_R),
        coeff: Coefficients::h1(beta.0, beta.1),
        exact: Exact::Scalar(ScalarSolution { jet, beta }),
    }
}

fn torus_jets(x: &Vec3) -> (Jet, Jet) {
    let [jx, jy, jz] = Jet::vars(x);
    let c = SPHERE_R * SPHERE_R;
    let rho1 = ((jx + 0.3) * (jx + 0.3) + jy * jy).sqrt();
    let phi1 = (rho1 - 0.2) * (rho1 - 0.2) + jz * jz - c;
    let rho2 = ((jx - 0.3) * (jx - 0.3) + jz * jz).sqrt();
    let phi2 = (rho2 - 0.2) * (rho2 - 0.2) + jy * jy - c;
    (phi1, phi2)
}

/// Twisted-tori interface, `u- = 1`, `u+ = cos(phi1 phi2)`.
pub fn h1_tori(beta_plus: f64) -> Benchmark {
    let beta = (1.0, beta_plus);
    let jet = Box::new(move |s: RegionSign, x: &Vec3| match s {
        RegionSign::Minus => Jet::constant(1.0),
        RegionSign::Plus => {
            let (phi1, phi2) = torus_jets(x);
            (phi1 * phi2).cos()
        }
    });
    Benchmark {
        name: format!("h1-tori(beta+={beta_plus})"),
        domain: Box3::cube(-1.3, 1.3),
        level_set: twisted_tori(),
        coeff: Coefficients::h1(beta.0, beta.1),
        exact: Exact::Scalar(ScalarSolution { jet, beta }),
    }
}

/// Flat-interface piecewise-linear solution compatible with the H1 jump
/// conditions; the scheme must reproduce it exactly.
pub fn h1_flat_patch() -> Benchmark {
    let d = 0.05;
    let coeff = Coefficients::h1(1.0, 10.0);
    let gp = Vec3::new(1.2, -0.4, 0.7);
    // beta- g-.n = beta+ g+.n with n = e1 and tangential continuity.
    let gm = Vec3::new(coeff.beta_plus / coeff.beta_minus * gp.x, gp.y, gp.z);
    let jet = Box::new(move |s: RegionSign, x: &Vec3| {
        let [jx, jy, jz] = Jet::vars(x);
        let g = match s {
            RegionSign::Minus => gm,
            RegionSign::Plus => gp,
        };
        (jx - d) * g.x + jy * g.y + jz * g.z + 0.9
    });
    Benchmark {
        name: "h1-flat".into(),
        domain: Box3::cube(-1.0, 1.0),
        level_set: plane_x(d),
        coeff: Coefficients::h1(1.0, 10.0),
        exact: Exact::Scalar(ScalarSolution { jet, beta: (1.0, 10.0) }),
    }
}

/// Spherical interface for the H(curl) problem:
/// `u = x/beta + psi(x) [x2-x3, x3-x1, x1-x2]^T / alpha` with
/// `psi- = n1 R1`, `psi+ = n2 R1 R2`, `R_i = r_i^2 - |x|^2`. The scaling
/// `n2 = n1/(r2^2 - r1^2)` makes the tangential jump of `alpha curl u`
/// vanish on the sphere `r1`.
pub fn hcurl_sphere() -> Benchmark {
    let coeff =
        Coefficients { alpha_minus: 1.0, alpha_plus: 100.0, beta_minus: 1.0, beta_plus: 200.0 };
    let (r1sq, r2sq) = (SPHERE_R * SPHERE_R, 3.3);
    let n1 = 1.0;
    let n2 = n1 / (r2sq - r1sq);
    let (am, ap, bm, bp) =
        (coeff.alpha_minus, coeff.alpha_plus, coeff.beta_minus, coeff.beta_plus);
    let jets = Arc::new(move |s: RegionSign, x: &Vec3| {
        let [jx, jy, jz] = Jet::vars(x);
        let nsq = jx * jx + jy * jy + jz * jz;
        let r1 = (nsq * -1.0) + r1sq;
        let psi = match s {
            RegionSign::Minus => r1 * n1,
            RegionSign::Plus => r1 * ((nsq * -1.0) + r2sq) * n2,
        };
        let (al, be) = match s {
            RegionSign::Minus => (am, bm),
            RegionSign::Plus => (ap, bp),
        };
        let w = [jy - jz, jz - jx, jx - jy];
        [
            jx * (1.0 / be) + psi * w[0] * (1.0 / al),
            jy * (1.0 / be) + psi * w[1] * (1.0 / al),
            jz * (1.0 / be) + psi * w[2] * (1.0 / al),
        ]
    });
    let exact = vector_from_jets(jets, &coeff);
    Benchmark {
        name: "hcurl-sphere".into(),
        domain: Box3::cube(-1.0, 1.0),
        level_set: sphere(SPHERE_R),
        coeff,
        exact: Exact::Vector(exact),
    }
}

/// Twisted-tori interface for the H(curl) problem:
/// `u = grad(ft)/beta + sin(ft) v0 / alpha` with `v0 = e3` and
/// `ft = phi1 phi2 ((x1+0.3)^2+x2^2)((x1-0.3)^2+x3^2)`; `sin` (vanishing on
/// the interface) makes both tangential jumps vanish.
pub fn hcurl_tori() -> Benchmark {
    let coeff =
        Coefficients { alpha_minus: 1.0, alpha_plus: 100.0, beta_minus: 1.0, beta_plus: 200.0 };
    let (am, ap, bm, bp) =
        (coeff.alpha_minus, coeff.alpha_plus, coeff.beta_minus, coeff.beta_plus);
    let ft = Arc::new(|x: &Vec3| {
        let [jx, jy, jz] = Jet::vars(x);
        let (phi1, phi2) = torus_jets(x);
        let g1 = (jx + 0.3) * (jx + 0.3) + jy * jy;
        let g2 = (jx - 0.3) * (jx - 0.3) + jz * jz;
        phi1 * phi2 * g1 * g2
    });
    let pick = move |s: RegionSign| match s {
        RegionSign::Minus => (am, bm),
        RegionSign::Plus => (ap, bp),
    };
    let (fu, fc, ff) = (ft.clone(), ft.clone(), ft);
    let exact = VectorSolution {
        u: Box::new(move |s, x| {
            let (al, be) = pick(s);
            let j = fu(x);
            j.g / be + j.v.sin() / al * Vec3::z()
        }),
        curl: Box::new(move |s, x| {
            let (al, _) = pick(s);
            // curl u = grad(sin ft) x v0 / alpha.
            let j = fc(x);
            (j.v.cos() * j.g).cross(&Vec3::z()) / al
        }),
        f: Box::new(move |s, x| {
            let (al, be) = pick(s);
            // curl(alpha curl u) = curl(grad(sin ft) x v0)
            //                    = H_{sin ft} v0 - v0 lap(sin ft).
            let j = ff(x);
            let sj = j.sin();
            let hv0 = Vec3::new(sj.h[(0, 2)], sj.h[(1, 2)], sj.h[(2, 2)]);
            hv0 - sj.h.trace() * Vec3::z() + j.g + (be / al) * sj.v * Vec3::z()
        }),
    };
    Benchmark {
        name: "hcurl-tori".into(),
        domain: Box3::cube(-1.3, 1.3),
        level_set: twisted_tori(),
        coeff,
        exact: Exact::Vector(exact),
    }
}

/// Flat interface `x1 = 5e-2 * 10^{-r}` with a jump-compatible piecewise
/// constant exact solution (the small-cut preconditioner family and the
/// H(curl) patch test).
pub fn hcurl_flat(r: usize) -> Benchmark {
    let d = 5e-2 * 10f64.powi(-(r as i32));
    let coeff =
        Coefficients { alpha_minus: 1.0, alpha_plus: 10.0, beta_minus: 1.0, beta_plus: 10.0 };
    let bp = Vec3::new(0.3, -0.2, 0.5);
    // Tangential continuity + continuity of beta u . n across x1 = d.
    let bmv = Vec3::new(coeff.beta_plus / coeff.beta_minus * bp.x, bp.y, bp.z);
    let jets = Arc::new(move |s: RegionSign, _x: &Vec3| {
        let b = match s {
            RegionSign::Minus => bmv,
            RegionSign::Plus => bp,
        };
        [Jet::constant(b.x), Jet::constant(b.y), Jet::constant(b.z)]
    });
    let exact = vector_from_jets(jets, &coeff);
    Benchmark {
        name: format!("hcurl-flat(r={r})"),
        domain: Box3::cube(-1.0, 1.0),
        level_set: plane_x(d),
        coeff,
        exact: Exact::Vector(exact),
    }
}

/// The registered benchmark names.
pub fn benchmark_names() -> &'static [&'static str] {
    &[
        "h1-sphere",
        "h1-sphere-beta100",
        "h1-tori",
        "h1-tori-beta100",
        "h1-flat",
        "hcurl-sphere",
        "hcurl-tori",
        "hcurl-flat",
        "hcurl-flat-<r>",
    ]
}

/// Look a benchmark up by name (`hcurl-flat-<r>` selects the interface
/// location of the small-cut family).
pub fn benchmark_by_name(name: &str) -> Result<Benchmark> {
    if let Some(rest) = name.strip_prefix("hcurl-flat-") {
        let r: usize = rest.parse().map_err(|_| {
            IvemError::InvalidInput(format!("bad flat-family index in `{name}`"))
        })?;
        if r > 8 {
            return Err(IvemError::InvalidInput(format!("flat-family index {r} too large")));
        }
        return Ok(hcurl_flat(r));
    }
    match name {
        "h1-sphere" => Ok(h1_sphere(10.0)),
        "h1-sphere-beta100" => Ok(h1_sphere(100.0)),
        "h1-tori" => Ok(h1_tori(10.0)),
        "h1-tori-beta100" => Ok(h1_tori(100.0)),
        "h1-flat" => Ok(h1_flat_patch()),
        "hcurl-sphere" => Ok(hcurl_sphere()),
        "hcurl-tori" => Ok(hcurl_tori()),
        "hcurl-flat" => Ok(hcurl_flat(0)),
        other => Err(IvemError::InvalidInput(format!(
            "unknown benchmark `{other}` (known: {})",
            benchmark_names().join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// Solving and error evaluation.
// ---------------------------------------------------------------------------

/// Errors and solver statistics of one benchmark run.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub n: usize,
    pub h: f64,
    pub dof_total: usize,
    pub dof_interface: usize,
    pub err_l2: f64,
    /// Max nodal error; `NaN` for H(curl) (edge DoFs are moments).
    pub err_linf: f64,
    /// Weighted H1- or curl-seminorm error.
    pub err_energy: f64,
    pub iters: usize,
    pub seconds: f64,
}

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{},{},{:.6e},{:.6e},{:.6e},{},{:.3}",
            self.n,
            self.h,
            self.dof_total,
            self.dof_interface,
            self.err_l2,
            self.err_linf,
            self.err_energy,
            self.iters,
            self.seconds
        )
    }
}

/// A solved benchmark system with its full DoF vector.
pub struct SolveResult {
    pub topo: CutMeshTopology,
    pub sys: System,
    pub x: Vec<f64>,
    pub iters: usize,
    pub cond_est: f64,
    pub seconds: f64,
    /// Relative preconditioned residual per iteration (empty for direct).
    pub residual_log: Vec<f64>,
}

/// Mesh, cut, and assemble the benchmark system at subdivision `n`.
pub fn assemble_benchmark(
    bench: &Benchmark,
    n: usize,
    cfg: &Config,
) -> Result<(CutMeshTopology, System)> {
    let mesh = build_background_mesh(n, bench.domain)?;
    let cm = classify_and_cut(mesh, &bench.level_set, cfg.snap_tol)?;
    let topo = build_topology(cm)?;
    let sys = match &bench.exact {
        Exact::Scalar(sol) => assemble_h1(
            &topo,
            &bench.coeff,
            cfg.gamma,
            &|x, s| sol.f(s, x),
            &|x| sol.u(bench.region_of(x), x),
        )?,
        Exact::Vector(sol) => assemble_curl(
            &topo,
            &bench.coeff,
            cfg.gamma1,
            cfg.gamma0,
            &|x, s| sol.f(s, x),
            &|x| sol.u(bench.region_of(x), x),
        )?,
    };
    Ok((topo, sys))
}

fn build_preconditioner(
    name: &str,
    kind: ProblemKind,
    topo: &CutMeshTopology,
    sys: &System,
    aff: &Csr,
    coeff: &Coefficients,
    cfg: &Config,
    hx_level: usize,
) -> Result<Box<dyn Preconditioner>> {
    let resolved = if name == "auto" {
        match kind {
            ProblemKind::H1 => "sgs",
            ProblemKind::HCurl => "hx",
        }
    } else {
        name
    };
    match resolved {
        "none" => Ok(Box::new(IdentityPrecond)),
        "diag" => Ok(Box::new(JacobiPrecond::new(aff))),
        "sgs" => Ok(Box::new(SgsPrecond::new(aff.clone(), 1))),
        "hx" => {
            if kind != ProblemKind::HCurl {
                return Err(IvemError::InvalidInput(
                    "the HX preconditioner applies to H(curl) systems only".into(),
                ));
            }
            let setup = hx_setup(topo, sys, aff, coeff, cfg.gamma, hx_level)?;
            Ok(Box::new(HxPrecond::new(
                aff,
                setup.block_edges,
                setup.p,
                setup.g,
                &setup.a_vec_scalar,
                &setup.a_grad,
                &cfg.backend,
            )?))
        }
        other => Err(IvemError::InvalidInput(format!("unknown preconditioner `{other}`"))),
    }
}

/// Solve a benchmark at subdivision `n` with the configured preconditioner.
pub fn solve_benchmark(bench: &Benchmark, n: usize, cfg: &Config) -> Result<SolveResult> {
    let t0 = Instant::now();
    let (topo, sys) = assemble_benchmark(bench, n, cfg)?;
    let (aff, bf) = sys.reduced();
    let (xf, iters, cond_est, residual_log) = if cfg.precond == "direct" {
        let ldl = LdlFactor::new(&aff)?;
        (ldl.solve(&bf), 0, f64::NAN, Vec::new())
    } else {
        let m = build_preconditioner(
            &cfg.precond,
            bench.kind(),
            &topo,
            &sys,
            &aff,
            &bench.coeff,
            cfg,
            cfg.hx_level,
        )?;
        let res = pcg(
            &|v| aff.matvec(v),
            &bf,
            m.as_ref(),
            cfg.rel_tol,
            cfg.effective_max_iters(bf.len()),
        )?;
        if !res.converged {
            return Err(IvemError::NoConvergence(format!(
                "{} n={n}: {} iterations, relative residual {:.3e}",
                bench.name, res.iters, res.rel_residual
            )));
        }
        (res.x, res.iters, res.cond_est, res.residual_log)
    };
    let x = sys.expand(&xf);
    Ok(SolveResult {
        topo,
        sys,
        x,
        iters,
        cond_est,
        seconds: t0.elapsed().as_secs_f64(),
        residual_log,
    })
}

/// L2, max-nodal, and weighted seminorm errors of a DoF vector against the
/// benchmark's exact solution. Plain elements use the exact P1 / Whitney
/// reconstruction; interface elements use the computable projections per cut
/// region.
pub fn error_norms(bench: &Benchmark, topo: &CutMeshTopology, x: &[f64]) -> Result<(f64, f64, f64)> {
    let coeff = &bench.coeff;
    let mut l2 = 0.0;
    let mut energy = 0.0;
    let mut linf = f64::NAN;
    match &bench.exact {
        Exact::Scalar(sol) => {
            linf = 0.0;
            for (i, xi) in topo.nodes.iter().enumerate() {
                linf = linf.max((x[i] - sol.u(bench.region_of(xi), xi)).abs());
            }
            let rule4 = tet_rule_gauss(3);
            let rule2 = tet_rule_deg2();
            for k in 0..topo.n_elems() {
                if !topo.is_interface(k) {
                    let xs = elem_vertices(topo, k);
                    let g = tet_p1_gradients(&xs);
                    let s = plain_sign(topo.cm.class[k]);
                    let be = coeff.beta(s);
                    let dofs: Vec<f64> =
                        topo.elems[k].nodes.iter().map(|&i| x[i]).collect();
                    let gv: Vec3 = (0..4).map(|i| dofs[i] * g[i]).sum();
                    let (pts, wts) = map_tet(&rule4, &xs[0], &xs[1], &xs[2], &xs[3]);
                    for (p, w) in pts.iter().zip(&wts) {
                        let lam = tet_barycentric(&xs, &g, p);
                        let vh: f64 = (0..4).map(|i| dofs[i] * lam[i]).sum();
                        let du = sol.u(s, p) - vh;
                        l2 += w * du * du;
                        energy += w * be * (sol.grad(s, p) - gv).norm_squared();
                    }
                } else {
                    let ctx = ElemCtx::interface(topo, k, coeff)?;
                    let dofs: Vec<f64> =
                        topo.elems[k].nodes.iter().map(|&i| x[i]).collect();
                    let lift = lift_h1(&ctx, &ctx.beta.clone(), &dofs)?;
                    for m in 0..ctx.n_regions() {
                        let s = ctx.regions[m];
                        let be = coeff.beta(s);
                        for (p, w) in ctx.region_quad(m, &rule2) {
                            let du = sol.u(s, &p) - lift.eval(&p, m);
                            l2 += w * du * du;
                            energy +=
                                w * be * (sol.grad(s, &p) - lift.grad(m)).norm_squared();
                        }
                    }
                }
            }
        }
        Exact::Vector(sol) => {
            let rule3 = tet_rule_gauss(3);
            let rule2 = tet_rule_deg2();
            for k in 0..topo.n_elems() {
                let dofs: Vec<f64> = topo.elems[k].edges.iter().map(|&e| x[e]).collect();
                if !topo.is_interface(k) {
                    let xs = elem_vertices(topo, k);
                    let g = tet_p1_gradients(&xs);
                    let s = plain_sign(topo.cm.class[k]);
                    let al = coeff.alpha(s);
                    let len = local_edge_nodes(topo, k);
                    let curl_h: Vec3 = len
                        .iter()
                        .zip(&dofs)
                        .map(|(&[a, b], &d)| d * 2.0 * g[a].cross(&g[b]))
                        .sum();
                    let (pts, wts) = map_tet(&rule3, &xs[0], &xs[1], &xs[2], &xs[3]);
                    for (p, w) in pts.iter().zip(&wts) {
                        let lam = tet_barycentric(&xs, &g, p);
                        let vh: Vec3 = len
                            .iter()
                            .zip(&dofs)
                            .map(|(&[a, b], &d)| d * (lam[a] * g[b] - lam[b] * g[a]))
                            .sum();
                        l2 += w * (sol.u(s, p) - vh).norm_squared();
                        energy += w * al * (sol.curl(s, p) - curl_h).norm_squared();
                    }
                } else {
                    let ctx = ElemCtx::interface(topo, k, coeff)?;
                    let vals = project_value_edge(&ctx, &ctx.beta.clone(), &dofs)?;
                    let curls = project_curl(&ctx, &ctx.alpha.clone(), &dofs)?;
                    for m in 0..ctx.n_regions() {
                        let s = ctx.regions[m];
                        let al = coeff.alpha(s);
                        for (p, w) in ctx.region_quad(m, &rule2) {
                            l2 += w * (sol.u(s, &p) - vals[m]).norm_squared();
                            energy += w * al * (sol.curl(s, &p) - curls[m]).norm_squared();
                        }
                    }
                }
            }
        }
    }
    Ok((l2.sqrt(), linf, energy.sqrt()))
}

/// Max DoF-wise deviation of a solved vector from the interpolant of the
/// exact solution (nodal values for H1, edge moments for H(curl)).
pub fn dof_interpolation_error(bench: &Benchmark, topo: &CutMeshTopology, x: &[f64]) -> f64 {
    match &bench.exact {
        Exact::Scalar(sol) => topo
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (x[i] - sol.u(bench.region_of(p), p)).abs())
            .fold(0.0, f64::max),
        Exact::Vector(sol) => (0..topo.n_edges())
            .map(|e| {
                let exact = edge_moment(topo, e, &|p| sol.u(bench.region_of(p), p));
                (x[e] - exact).abs()
            })
            .fold(0.0, f64::max),
    }
}

fn interface_dof_count(topo: &CutMeshTopology, kind: ProblemKind) -> usize {
    let n = match kind {
        ProblemKind::H1 => topo.n_nodes(),
        ProblemKind::HCurl => topo.n_edges(),
    };
    let mut seen = vec![false; n];
    for k in 0..topo.n_elems() {
        if topo.is_interface(k) {
            let ids: &[usize] = match kind {
                ProblemKind::H1 => &topo.elems[k].nodes,
                ProblemKind::HCurl => &topo.elems[k].edges,
            };
            for &i in ids {
                seen[i] = true;
            }
        }
    }
    seen.iter().filter(|&&b| b).count()
}

/// Solve one benchmark level and evaluate its errors.
pub fn run_case(bench: &Benchmark, n: usize, cfg: &Config) -> Result<(ErrorReport, SolveResult)> {
    let res = solve_benchmark(bench, n, cfg)?;
    let (err_l2, err_linf, err_energy) = error_norms(bench, &res.topo, &res.x)?;
    let report = ErrorReport {
        n,
        h: res.topo.cm.mesh.h,
        dof_total: res.sys.n_dofs(),
        dof_interface: interface_dof_count(&res.topo, bench.kind()),
        err_l2,
        err_linf,
        err_energy,
        iters: res.iters,
        seconds: res.seconds,
    };
    Ok((report, res))
}

// ---------------------------------------------------------------------------
// Convergence and preconditioner studies.
// ---------------------------------------------------------------------------

/// Least-squares slope of `log err` against `log h`; `None` when the errors
/// are at rounding level (exactly reproduced solutions).
pub fn fit_slope(hs: &[f64], errs: &[f64]) -> Option<f64> {
    if hs.len() < 2 || errs.iter().any(|&e| !e.is_finite() || e < 1e-13) {
        return None;
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Results of a refinement study with fitted convergence orders.
pub struct ConvergenceTable {
    pub rows: Vec<ErrorReport>,
    pub slope_l2: Option<f64>,
    pub slope_linf: Option<f64>,
    pub slope_energy: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,h,dof_total,dof_interface,err_L2,err_Linf,err_energy,iters,seconds\n",
        );
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        let s = |v: Option<f64>| match v {
            Some(x) => format!("{x:.3}"),
            None => "exact".to_string(),
        };
        out.push_str(&format!(
            "slope,,,,{},{},{},,\n",
            s(self.slope_l2),
            s(self.slope_linf),
            s(self.slope_energy)
        ));
        out
    }
}

/// Run the benchmark over `n_list`; slopes are fitted over the finest
/// `ceil(len/2)` levels.
pub fn run_convergence(bench: &Benchmark, n_list: &[usize], cfg: &Config) -> Result<ConvergenceTable> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (report, _) = run_case(bench, n, cfg)?;
        rows.push(report);
    }
    let m = rows.len().div_ceil(2).max(2).min(rows.len());
    let tail = &rows[rows.len() - m..];
    let hs: Vec<f64> = tail.iter().map(|r| r.h).collect();
    let pick = |f: &dyn Fn(&ErrorReport) -> f64| {
        let errs: Vec<f64> = tail.iter().map(f).collect();
        fit_slope(&hs, &errs)
    };
    Ok(ConvergenceTable {
        slope_l2: pick(&|r| r.err_l2),
        slope_linf: pick(&|r| r.err_linf),
        slope_energy: pick(&|r| r.err_energy),
        rows,
    })
}

/// One case of the small-cut preconditioner study.
#[derive(Debug, Clone)]
pub struct PrecondRecord {
    pub r: usize,
    pub l: usize,
    pub n: usize,
    pub iters: usize,
    /// Lanczos estimate of the condition number of the unpreconditioned
    /// system matrix (shared by all `l` at the same `r`).
    pub cond_est: f64,
    pub seconds: f64,
}

/// CSV for the preconditioner study.
pub fn precond_csv(records: &[PrecondRecord]) -> String {
    let mut out = String::from("r,l,n,iters,cond_est,seconds\n");
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{},{:.3e},{:.3}\n",
            rec.r, rec.l, rec.n, rec.iters, rec.cond_est, rec.seconds
        ));
    }
    out
}

/// Small-cut robustness study: the flat H(curl) family `x1 = 5e-2 * 10^{-r}`
/// solved with the HX preconditioner at each block-expansion width `l`.
pub fn run_precond_study(
    r_list: &[usize],
    l_list: &[usize],
    n: usize,
    cfg: &Config,
) -> Result<Vec<PrecondRecord>> {
    let mut out = Vec::new();
    for &r in r_list {
        let bench = hcurl_flat(r);
        let (topo, sys) = assemble_benchmark(&bench, n, cfg)?;
        let (aff, bf) = sys.reduced();
        // Condition estimate of A itself from a fixed-length plain CG run.
        let probe = pcg(&|v| aff.matvec(v), &bf, &IdentityPrecond, 1e-300, 200)?;
        for &l in l_list {
            let m = build_preconditioner(
                "hx",
                ProblemKind::HCurl,
                &topo,
                &sys,
                &aff,
                &bench.coeff,
                cfg,
                l,
            )?;
            let t0 = Instant::now();
            let res = pcg(
                &|v| aff.matvec(v),
                &bf,
                m.as_ref(),
                cfg.rel_tol,
                cfg.effective_max_iters(bf.len()),
            )?;
            if !res.converged {
                return Err(IvemError::NoConvergence(format!(
                    "flat family r={r} l={l}: {} iterations",
                    res.iters
                )));
            }
            out.push(PrecondRecord {
                r,
                l,
                n,
                iters: res.iters,
                cond_est: probe.cond_est,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Find a point on the interface by bisecting a sign-changing segment.
    fn interface_point(ls: &LevelSet, mut a: Vec3, mut b: Vec3) -> Option<Vec3> {
        let (fa, fb) = (ls.eval(&a), ls.eval(&b));
        if fa * fb >= 0.0 {
            return None;
        }
        if fa > 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if ls.eval(&m) <= 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }

    fn sample_interface_points(bench: &Benchmark, count: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        let lo = bench.domain.lo;
        let hi = bench.domain.hi;
        while pts.len() < count {
            let rand_pt = |rng: &mut ChaCha8Rng| {
                Vec3::new(
                    rng.gen_range(lo.x..hi.x),
                    rng.gen_range(lo.y..hi.y),
                    rng.gen_range(lo.z..hi.z),
                )
            };
            let (a, b) = (rand_pt(&mut rng), rand_pt(&mut rng));
            if let Some(p) = interface_point(&bench.level_set, a, b) {
                pts.push(p);
            }
        }
        pts
    }

    #[test]
    fn exact_solutions_satisfy_interface_jumps() {
        for name in
            ["h1-sphere", "h1-sphere-beta100", "h1-tori", "h1-flat", "hcurl-sphere", "hcurl-tori", "hcurl-flat-2"]
        {
            let bench = benchmark_by_name(name).unwrap();
            for p in sample_interface_points(&bench, 200) {
                let g = bench.level_set.grad(&p);
                let nrm = g / g.norm();
                match &bench.exact {
                    Exact::Scalar(sol) => {
                        let jump_u =
                            sol.u(RegionSign::Plus, &p) - sol.u(RegionSign::Minus, &p);
                        let jump_flux = bench.coeff.beta(RegionSign::Plus)
                            * sol.grad(RegionSign::Plus, &p).dot(&nrm)
                            - bench.coeff.beta(RegionSign::Minus)
                                * sol.grad(RegionSign::Minus, &p).dot(&nrm);
                        assert!(jump_u.abs() < 1e-10, "{name} at {p:?}: [u] = {jump_u:.2e}");
                        assert!(
                            jump_flux.abs() < 1e-10,
                            "{name} at {p:?}: [beta du/dn] = {jump_flux:.2e}"
                        );
                    }
                    Exact::Vector(sol) => {
                        let ju = (sol.u(RegionSign::Plus, &p) - sol.u(RegionSign::Minus, &p))
                            .cross(&nrm);
                        let jc = (bench.coeff.alpha(RegionSign::Plus)
                            * sol.curl(RegionSign::Plus, &p)
                            - bench.coeff.alpha(RegionSign::Minus)
                                * sol.curl(RegionSign::Minus, &p))
                        .cross(&nrm);
                        assert!(ju.norm() < 1e-10, "{name} at {p:?}: [u x n] = {:.2e}", ju.norm());
                        assert!(
                            jc.norm() < 1e-9,
                            "{name} at {p:?}: [alpha curl u x n] = {:.2e}",
                            jc.norm()
                        );
                    }
                }
            }
        }
    }

    /// Random points safely inside one region (the branch stays valid in a
    /// finite-difference neighborhood).
    fn interior_points(bench: &Benchmark, s: RegionSign, count: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lo = bench.domain.lo;
        let hi = bench.domain.hi;
        let mut pts = Vec::new();
        let mut tries = 0;
        while pts.len() < count && tries < 200_000 {
            tries += 1;
            let p = Vec3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            );
            let phi = bench.level_set.eval(&p);
            let inside = match s {
                RegionSign::Minus => phi < -0.02,
                RegionSign::Plus => phi > 0.02,
            };
            if inside {
                pts.push(p);
            }
        }
        assert!(!pts.is_empty(), "no interior sample for {}", bench.name);
        pts
    }

    fn fd_grad(f: &dyn Fn(&Vec3) -> f64, x: &Vec3, h: f64) -> Vec3 {
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let (mut xp, mut xm) = (*x, *x);
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn fd_curl(f: &dyn Fn(&Vec3) -> Vec3, x: &Vec3, h: f64) -> Vec3 {
        let mut jac = [[0.0; 3]; 3]; // jac[i][j] = d f_i / d x_j
        for j in 0..3 {
            let (mut xp, mut xm) = (*x, *x);
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            for i in 0..3 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Vec3::new(jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1])
    }

    #[test]
    fn sources_match_finite_difference_residuals() {
        let h = 1e-5;
        for name in ["h1-sphere", "h1-tori", "h1-flat"] {
            let bench = benchmark_by_name(name).unwrap();
            let Exact::Scalar(sol) = &bench.exact else { unreachable!() };
            for s in [RegionSign::Minus, RegionSign::Plus] {
                let be = bench.coeff.beta(s);
                for p in interior_points(&bench, s, 20) {
                    // -beta lap u via second differences of u.
                    let mut lap = 0.0;
                    let u0 = sol.u(s, &p);
                    for i in 0..3 {
                        let (mut xp, mut xm) = (p, p);
                        xp[i] += h;
                        xm[i] -= h;
                        lap += (sol.u(s, &xp) - 2.0 * u0 + sol.u(s, &xm)) / (h * h);
                    }
                    let res = (-be * lap - sol.f(s, &p)).abs();
                    let scale = 1.0 + sol.f(s, &p).abs();
                    assert!(res < 1e-4 * scale, "{name} {s:?} at {p:?}: residual {res:.2e}");
                    // Analytic gradient against first differences.
                    let fg = fd_grad(&|x| sol.u(s, x), &p, h);
                    assert!((fg - sol.grad(s, &p)).norm() < 1e-6 * (1.0 + fg.norm()));
                }
            }
        }
        for name in ["hcurl-sphere", "hcurl-tori", "hcurl-flat"] {
            let bench = benchmark_by_name(name).unwrap();
            let Exact::Vector(sol) = &bench.exact else { unreachable!() };
            for s in [RegionSign::Minus, RegionSign::Plus] {
                let (al, be) = (bench.coeff.alpha(s), bench.coeff.beta(s));
                for p in interior_points(&bench, s, 20) {
                    // Analytic curl against differences of u.
                    let cu = fd_curl(&|x| sol.u(s, x), &p, h);
                    assert!(
                        (cu - sol.curl(s, &p)).norm() < 1e-5 * (1.0 + cu.norm()),
                        "{name} {s:?}: curl mismatch at {p:?}"
                    );
                    // curl(alpha curl u) + beta u via differences of the
                    // analytic curl.
                    let cac = fd_curl(&|x| al * sol.curl(s, x), &p, h);
                    let res = (cac + be * sol.u(s, &p) - sol.f(s, &p)).norm();
                    let scale = 1.0 + sol.f(s, &p).norm();
                    assert!(res < 1e-4 * scale, "{name} {s:?} at {p:?}: residual {res:.2e}");
                }
            }
        }
    }

    #[test]
    fn registry_lookup() {
        assert!(benchmark_by_name("h1-sphere").is_ok());
        assert!(benchmark_by_name("hcurl-flat-4").is_ok());
        assert!(benchmark_by_name("hcurl-flat-x").is_err());
        assert!(benchmark_by_name("nope").is_err());
    }

    #[test]
    fn flat_patch_tests_reproduce_exact_solutions() {
        let mut cfg = Config::default();
        cfg.precond = "direct".into();
        for name in ["h1-flat", "hcurl-flat"] {
            let bench = benchmark_by_name(name).unwrap();
            let (report, res) = run_case(&bench, 4, &cfg).unwrap();
            let dof_err = dof_interpolation_error(&bench, &res.topo, &res.x);
            assert!(dof_err < 1e-9, "{name}: DoF error {dof_err:.2e}");
            assert!(report.err_l2 < 1e-9, "{name}: L2 error {:.2e}", report.err_l2);
            assert!(report.err_energy < 1e-9, "{name}: energy error {:.2e}", report.err_energy);
            if bench.kind() == ProblemKind::H1 {
                assert!(report.err_linf < 1e-9);
            }
        }
    }

    #[test]
    fn slope_fit_recovers_known_orders() {
        let hs = [0.2, 0.1, 0.05, 0.025];
        let e2: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        let s = fit_slope(&hs, &e2).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(fit_slope(&hs, &[0.0; 4]).is_none());
    }

    #[test]
    fn preconditioners_and_backends_agree_on_the_solution() {
        // Changing the preconditioner or the auxiliary backend changes the
        // iteration counts but not the solution.
        let bench = benchmark_by_name("hcurl-sphere").unwrap();
        let mut cfg = Config::default();
        cfg.rel_tol = 1e-10;
        cfg.max_iters = 30_000;
        cfg.precond = "direct".into();
        let reference = solve_benchmark(&bench, 4, &cfg).unwrap();
        let norm = reference.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut iter_counts = Vec::new();
        for (precond, backend) in [("hx", "direct"), ("hx", "sgs"), ("none", "direct")] {
            cfg.precond = precond.into();
            cfg.backend = backend.into();
            let res = solve_benchmark(&bench, 4, &cfg).unwrap();
            let diff = res
                .x
                .iter()
                .zip(&reference.x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-6 * norm, "{precond}/{backend}: relative gap {:.3e}", diff / norm);
            assert_eq!(res.residual_log.len(), res.iters);
            assert!(res.residual_log.last().unwrap() <= &cfg.rel_tol);
            iter_counts.push(res.iters);
        }
        // The backend swap may shift the count; plain CG must cost more.
        assert!(iter_counts[2] > iter_counts[0].max(iter_counts[1]));
    }
}
