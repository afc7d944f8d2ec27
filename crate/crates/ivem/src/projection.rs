//! Computable weighted projections onto the IFE spaces.
//!
//! All projections are evaluated from degrees of freedom via boundary
//! integrals over the surface triangulation of a cut element, reduced to a
//! 3x3 weighted Gram solve in the chain-seed coordinates.

use nalgebra::Matrix3;

use crate::geo::{tri_area_normal, tri_barycentric, tri_p1_gradients, Vec3};
use crate::ifespace::{Chain, Coefficients, EdgeIfe, JumpKind, NodalIfe};
use crate::mesh::{CutMeshTopology, RegionSign};
use crate::quadrature::{map_tet, map_triangle, triangle_rule_deg2, Rule};
use crate::{IvemError, Result};

/// Geometric data of one boundary triangle in element-local form.
#[derive(Debug, Clone)]
pub struct TriGeom {
    /// Local node indices (outward-oriented order).
    pub nodes: [usize; 3],
    pub x: [Vec3; 3],
    pub area: f64,
    /// Unit outward normal.
    pub nrm: Vec3,
    pub region: usize,
    /// Local edge indices of edges `(nodes[k], nodes[k+1 mod 3])`.
    pub ledges: [usize; 3],
    /// +1 if the triangle traverses the edge along its global tangent.
    pub esign: [f64; 3],
    /// +1 if the outward normal matches the canonical (global) face normal.
    pub fsign: f64,
}

/// A piece of a boundary triangle cut by the fitted interface plane.
#[derive(Debug, Clone)]
pub struct SubTri {
    /// Index of the parent triangle in [`ElemCtx::tris`].
    pub parent: usize,
    pub x: [Vec3; 3],
    pub area: f64,
    /// Plane-side region: 0 on the negative side of the fitted plane.
    pub region: usize,
}

/// Per-element context for projections on an interface element.
///
/// All consistency integrals use the fitted-plane decomposition of the
/// element: the boundary triangles are split along the plane (`ptris`) and
/// each side is closed by the planar cap (`cap`). This keeps the continuity
/// of the chained constants across the plane exact in every boundary-integral
/// identity, so piecewise constants stay in the kernels exactly. The
/// topological triangles (`tris`) remain the carriers of traces and DoFs.
#[derive(Debug, Clone)]
pub struct ElemCtx {
    pub coords: Vec<Vec3>,
    pub regions: Vec<RegionSign>,
    /// Plane-side region volumes.
    pub vols: Vec<f64>,
    /// Plane-side region centroids.
    pub cents: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub anchors: Vec<Vec3>,
    pub tris: Vec<TriGeom>,
    /// Plane-split pieces of the boundary triangles.
    pub ptris: Vec<SubTri>,
    /// Fan triangulation of the planar cap `K ∩ plane`, oriented along the
    /// plane normal (outward for region 0).
    pub cap: Vec<[Vec3; 3]>,
    /// Local edge endpoints (local node indices), ordered along the global
    /// tangent (low global id -> high global id).
    pub ledge_nodes: Vec<[usize; 2]>,
    pub h_k: f64,
    /// Coefficient values per region.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Split a triangle by the plane given the (snapped) signed distances of its
/// vertices; returns the negative- and positive-side polygons.
fn clip_triangle(x: &[Vec3; 3], d: &[f64; 3]) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut neg = Vec::with_capacity(4);
    let mut pos = Vec::with_capacity(4);
    for i in 0..3 {
        let (xi, di) = (x[i], d[i]);
        let (xj, dj) = (x[(i + 1) % 3], d[(i + 1) % 3]);
        if di <= 0.0 {
            neg.push(xi);
        }
        if di >= 0.0 {
            pos.push(xi);
        }
        if (di < 0.0 && dj > 0.0) || (di > 0.0 && dj < 0.0) {
            let t = di / (di - dj);
            let p = xi + t * (xj - xi);
            neg.push(p);
            pos.push(p);
        }
    }
    (neg, pos)
}

impl ElemCtx {
    /// Build the context of interface element `k` from the global topology.
    pub fn interface(topo: &CutMeshTopology, k: usize, coeff: &Coefficients) -> Result<Self> {
        let cut = topo.cm.cut_elems[k].as_ref().ok_or_else(|| {
            IvemError::InvalidInput(format!("element {k} is not an interface element"))
        })?;
        let et = &topo.elems[k];
        let coords = cut.coords.clone();
        let mut tris = Vec::with_capacity(et.tris.len());
        for t in &et.tris {
            let x = [coords[t.nodes[0]], coords[t.nodes[1]], coords[t.nodes[2]]];
            let an = tri_area_normal(&x[0], &x[1], &x[2]);
            let area = an.norm();
            tris.push(TriGeom {
                nodes: t.nodes,
                x,
                area,
                nrm: an / area,
                region: t.region,
                ledges: t.ledges,
                esign: t.esign,
                fsign: t.fsign,
            });
        }
        let mut ledge_nodes = vec![[usize::MAX; 2]; et.edges.len()];
        for (le, &ge) in et.edges.iter().enumerate() {
            let [a, b] = topo.edges[ge];
            let la = et.nodes.iter().position(|&g| g == a).unwrap();
            let lb = et.nodes.iter().position(|&g| g == b).unwrap();
            ledge_nodes[le] = [la, lb];
        }
        let alpha: Vec<f64> = cut.regions.iter().map(|&s| coeff.alpha(s)).collect();
        let beta: Vec<f64> = cut.regions.iter().map(|&s| coeff.beta(s)).collect();

        // Plane-split the boundary triangles and collect the on-plane
        // segments of the negative side, which bound the planar cap.
        let nrm = cut.normals[0];
        let anchor = cut.anchors[0];
        let h_k = cut.h_k;
        let dist_tol = 1e-12 * h_k;
        let area_tol = 1e-14 * h_k * h_k;
        let mut ptris: Vec<SubTri> = Vec::new();
        let mut cap: Vec<[Vec3; 3]> = Vec::new();
        for (pi, t) in tris.iter().enumerate() {
            let mut d = [0.0f64; 3];
            for v in 0..3 {
                let dv = (t.x[v] - anchor).dot(&nrm);
                d[v] = if dv.abs() <= dist_tol { 0.0 } else { dv };
            }
            let (neg, pos) = clip_triangle(&t.x, &d);
            let push_poly = |poly: &[Vec3], region: usize, ptris: &mut Vec<SubTri>| {
                for v in 1..poly.len().saturating_sub(1) {
                    let area = tri_area_normal(&poly[0], &poly[v], &poly[v + 1]).norm();
                    if area > area_tol {
                        ptris.push(SubTri {
                            parent: pi,
                            x: [poly[0], poly[v], poly[v + 1]],
                            area,
                            region,
                        });
                    }
                }
            };
            push_poly(&neg, 0, &mut ptris);
            push_poly(&pos, 1, &mut ptris);
            // Cap boundary: consecutive on-plane vertices of the negative
            // polygon, reversed so the cap closes region 0 outward (+nrm).
            if neg.len() >= 3 {
                let on_plane: Vec<bool> = neg
                    .iter()
                    .map(|p| (p - anchor).dot(&nrm).abs() <= 2.0 * dist_tol)
                    .collect();
                for i in 0..neg.len() {
                    let j = (i + 1) % neg.len();
                    if on_plane[i] && on_plane[j] {
                        let area = tri_area_normal(&anchor, &neg[j], &neg[i]).norm();
                        if area > area_tol {
                            cap.push([anchor, neg[j], neg[i]]);
                        }
                    }
                }
            }
        }

        // Region volumes and centroids of the plane-side decomposition via
        // the divergence theorem on the closed surfaces.
        let mut vols = Vec::with_capacity(2);
        let mut cents = Vec::with_capacity(2);
        for m in 0..2 {
            let mut surf: Vec<[Vec3; 3]> =
                ptris.iter().filter(|s| s.region == m).map(|s| s.x).collect();
            for c in &cap {
                if m == 0 {
                    surf.push(*c);
                } else {
                    surf.push([c[0], c[2], c[1]]);
                }
            }
            let (v, c) = crate::mesh::volume_and_centroid(&surf);
            if v <= 0.0 {
                return Err(IvemError::DegenerateGeometry(format!(
                    "non-positive plane-side volume {v:.3e} in element {k}"
                )));
            }
            vols.push(v);
            cents.push(c);
        }

        Ok(Self {
            coords,
            regions: cut.regions.clone(),
            vols,
            cents,
            normals: cut.normals.clone(),
            anchors: cut.anchors.clone(),
            tris,
            ptris,
            cap,
            ledge_nodes,
            h_k,
            alpha,
            beta,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.vols.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_edges(&self) -> usize {
        self.ledge_nodes.len()
    }

    pub fn chain(&self, kind: JumpKind, w: &[f64]) -> Chain {
        Chain::new(kind, &self.normals, w)
    }

    /// Quadrature points and (signed) weights covering region `m`, obtained
    /// by fanning sub-tetrahedra from the region centroid over the closed
    /// region surface.
    pub fn region_quad(&self, m: usize, rule: &Rule) -> Vec<(Vec3, f64)> {
        let mut out = Vec::new();
        let c = self.cents[m];
        let mut push_tri = |a: &Vec3, b: &Vec3, d: &Vec3| {
            let (pts, wts) = map_tet(rule, &c, a, b, d);
            out.extend(pts.into_iter().zip(wts));
        };
        for t in self.ptris.iter().filter(|t| t.region == m) {
            push_tri(&t.x[0], &t.x[1], &t.x[2]);
        }
        for g in &self.cap {
            // The cap normal points from region 0 to region 1.
            if m == 0 {
                push_tri(&g[0], &g[1], &g[2]);
            } else {
                push_tri(&g[0], &g[2], &g[1]);
            }
        }
        out
    }

    /// Linear interpolation of nodal DoFs at a point of the parent triangle
    /// of a plane-split piece.
    fn trace_value(&self, st: &SubTri, dofs: &[f64], x: &Vec3) -> f64 {
        let t = &self.tris[st.parent];
        let lam = tri_barycentric(&t.x[0], &t.x[1], &t.x[2], x);
        (0..3).map(|v| lam[v] * dofs[t.nodes[v]]).sum()
    }
}

/// Weighted Gram matrix of the chained constants:
/// `G_{ll'} = sum_m w_m |K_m| (P_m e_l)·(P_m e_l')`.
pub fn gram_matrix(ctx: &ElemCtx, kind: JumpKind, w: &[f64]) -> Matrix3<f64> {
    let chain = ctx.chain(kind, w);
    let mut g = Matrix3::zeros();
    for m in 0..ctx.n_regions() {
        let p = chain.prods[m];
        g += w[m] * ctx.vols[m] * p.transpose() * p;
    }
    g
}

fn solve3(g: &Matrix3<f64>, rhs: &Vec3) -> Result<Vec3> {
    g.lu()
        .solve(rhs)
        .map(|v| Vec3::new(v.x, v.y, v.z))
        .ok_or_else(|| IvemError::Singular("3x3 Gram solve failed".into()))
}

/// H1 gradient projection `Π^{∇,w}` of a scalar VE function given by its
/// nodal DoFs: returns the chain values of the projected gradient.
/// `rhs_l = ∫_{∂K} v (w p_l · n) ds`, exact since the trace is piecewise
/// linear and the test field is piecewise constant.
pub fn project_h1_gradient(ctx: &ElemCtx, w: &[f64], dofs: &[f64]) -> Result<Vec<Vec3>> {
    let chain = ctx.chain(JumpKind::Edge, w);
    let g = gram_matrix(ctx, JumpKind::Edge, w);
    let mut rhs = Vec3::zeros();
    for st in &ctx.ptris {
        let cen = (st.x[0] + st.x[1] + st.x[2]) / 3.0;
        let mean = ctx.trace_value(st, dofs, &cen);
        let nrm = ctx.tris[st.parent].nrm;
        let wmn = w[st.region] * mean * st.area;
        for l in 0..3 {
            let p = chain.prods[st.region].column(l);
            rhs[l] += wmn * p.dot(&nrm);
        }
    }
    let seed = solve3(&g, &rhs)?;
    Ok(chain.extend(&seed))
}

/// Energy-projection lift `Π̃ v`: the nodal IFE function with gradient
/// `Π^{∇,w} v` whose boundary integral matches that of `v`.
pub fn lift_h1(ctx: &ElemCtx, w: &[f64], dofs: &[f64]) -> Result<NodalIfe> {
    let b = project_h1_gradient(ctx, w, dofs)?;
    let base = NodalIfe::new(b, 0.0, ctx.anchors.clone());
    let mut int_v = 0.0;
    let mut int_base = 0.0;
    let mut area = 0.0;
    for st in &ctx.ptris {
        let cen = (st.x[0] + st.x[1] + st.x[2]) / 3.0;
        let mean_v = ctx.trace_value(st, dofs, &cen);
        let mean_b = (base.eval(&st.x[0], st.region)
            + base.eval(&st.x[1], st.region)
            + base.eval(&st.x[2], st.region))
            / 3.0;
        int_v += mean_v * st.area;
        int_base += mean_b * st.area;
        area += st.area;
    }
    Ok(NodalIfe { c: (int_v - int_base) / area, ..base })
}

/// Pointwise tangential trace from the edge DoFs via Whitney functions.
pub(crate) fn tri_tangential_eval(t: &TriGeom, edofs: &[f64], x: &Vec3) -> Vec3 {
    let g = tri_p1_gradients(&t.x[0], &t.x[1], &t.x[2]);
    let lam = tri_barycentric(&t.x[0], &t.x[1], &t.x[2], x);
    let mut out = Vec3::zeros();
    for k in 0..3 {
        let kp = (k + 1) % 3;
        let m = edofs[t.ledges[k]] * t.esign[k];
        out += m * (lam[k] * g[kp] - lam[kp] * g[k]);
    }
    out
}

/// Projection of the curl of an edge VE function onto `P^f(w)`:
/// `rhs_l = Σ_F ∫_F (n×v)·(w p_l) ds` (from `∫_K curl v dx = ∫_{∂K} n×v ds`).
pub fn project_curl(ctx: &ElemCtx, w: &[f64], edofs: &[f64]) -> Result<Vec<Vec3>> {
    let chain = ctx.chain(JumpKind::Face, w);
    let g = gram_matrix(ctx, JumpKind::Face, w);
    let mut rhs = Vec3::zeros();
    for st in &ctx.ptris {
        let t = &ctx.tris[st.parent];
        // The tangential trace is linear, so the centroid value times the
        // piece area is its exact integral.
        let cen = (st.x[0] + st.x[1] + st.x[2]) / 3.0;
        let iv = st.area * tri_tangential_eval(t, edofs, &cen);
        let cross = t.nrm.cross(&iv);
        for l in 0..3 {
            let p = chain.prods[st.region].column(l);
            rhs[l] += w[st.region] * cross.dot(&p);
        }
    }
    let seed = solve3(&g, &rhs)?;
    Ok(chain.extend(&seed))
}

/// Value projection of an edge VE function onto `P^e(w_beta)` using only the
/// boundary term: `rhs_l = -Σ_F ∫_F v^τ · (w_l × n) ds` with the rotational
/// test field `w_l = (w_beta p_l / 2) × (x - x_K)`. The surface integrand is
/// quadratic, so the degree-2 triangle rule is exact. Valid on the
/// constrained local space (vanishing curl moments against the test fields).
pub fn project_value_edge(ctx: &ElemCtx, w_beta: &[f64], edofs: &[f64]) -> Result<Vec<Vec3>> {
    let chain = ctx.chain(JumpKind::Edge, w_beta);
    let g = gram_matrix(ctx, JumpKind::Edge, w_beta);
    let rule = triangle_rule_deg2();
    let test_fields = rotation_test_fields(ctx, w_beta, &chain);
    let mut rhs = Vec3::zeros();
    for st in &ctx.ptris {
        let t = &ctx.tris[st.parent];
        let (pts, wts) = map_triangle(&rule, &st.x[0], &st.x[1], &st.x[2]);
        for (x, qw) in pts.iter().zip(&wts) {
            let vtau = tri_tangential_eval(t, edofs, x);
            for l in 0..3 {
                let wl = test_fields[l].eval(x, st.region);
                rhs[l] -= qw * vtau.dot(&wl.cross(&t.nrm));
            }
        }
    }
    let seed = solve3(&g, &rhs)?;
    Ok(chain.extend(&seed))
}

/// Alternative value projection that keeps the volume curl moment:
/// `rhs_l = ∫_K (Π^{f,w} curl v)·w_l dx - Σ_F ∫_F v^τ·(w_l × n) ds`.
pub fn project_value_edge_with_curl_term(
    ctx: &ElemCtx,
    w_beta: &[f64],
    edofs: &[f64],
) -> Result<Vec<Vec3>> {
    let chain = ctx.chain(JumpKind::Edge, w_beta);
    let g = gram_matrix(ctx, JumpKind::Edge, w_beta);
    let rule = triangle_rule_deg2();
    let test_fields = rotation_test_fields(ctx, w_beta, &chain);
    let curl_proj = project_curl(ctx, w_beta, edofs)?;
    let mut rhs = Vec3::zeros();
    for l in 0..3 {
        // ∫_{K_m} w_l dx is exact with the region centroid (w_l is linear).
        for m in 0..ctx.n_regions() {
            let wl_mean = test_fields[l].eval(&ctx.cents[m], m);
            rhs[l] += ctx.vols[m] * curl_proj[m].dot(&wl_mean);
        }
    }
    for st in &ctx.ptris {
        let t = &ctx.tris[st.parent];
        let (pts, wts) = map_triangle(&rule, &st.x[0], &st.x[1], &st.x[2]);
        for (x, qw) in pts.iter().zip(&wts) {
            let vtau = tri_tangential_eval(t, edofs, x);
            for l in 0..3 {
                let wl = test_fields[l].eval(x, st.region);
                rhs[l] -= qw * vtau.dot(&wl.cross(&t.nrm));
            }
        }
    }
    let seed = solve3(&g, &rhs)?;
    Ok(chain.extend(&seed))
}

/// The three rotational test fields `w_l = (w p_l / 2) × (x - x_K)`; their
/// rotation coefficients `w p_l / 2` form a face-kind chain with weight
/// `1/w` by the Hodge-star pairing.
fn rotation_test_fields(ctx: &ElemCtx, w: &[f64], chain_e: &Chain) -> Vec<EdgeIfe> {
    (0..3)
        .map(|l| {
            let mut e = Vec3::zeros();
            e[l] = 1.0;
            let a_vals: Vec<Vec3> = chain_e
                .extend(&e)
                .iter()
                .enumerate()
                .map(|(m, p)| 0.5 * w[m] * p)
                .collect();
            EdgeIfe::new(
                a_vals,
                vec![Vec3::zeros(); ctx.n_regions()],
                chain_e,
                ctx.anchors.clone(),
            )
        })
        .collect()
}

/// Constant divergence of a face VE function from its fluxes:
/// `div v = |K|^{-1} ∫_{∂K} v·n ds`. DoFs are fluxes against the canonical
/// face normals, converted to outward by `fsign`.
pub fn div_const(ctx: &ElemCtx, fdofs: &[f64]) -> f64 {
    let vol: f64 = ctx.vols.iter().sum();
    let total: f64 = ctx
        .tris
        .iter()
        .enumerate()
        .map(|(i, t)| fdofs[i] * t.fsign)
        .sum();
    total / vol
}

/// Value projection of a face VE function onto `P^f(w)`:
/// `rhs_l = -∫_K div(v) ψ_l dx + ∫_{∂K} (v·n) ψ_l ds` with the potential
/// `ψ_l = (w p_l)·(x - x_K)`, a continuous nodal IFE function.
pub fn project_value_face(ctx: &ElemCtx, w: &[f64], fdofs: &[f64]) -> Result<Vec<Vec3>> {
    let chain = ctx.chain(JumpKind::Face, w);
    let g = gram_matrix(ctx, JumpKind::Face, w);
    let dv = div_const(ctx, fdofs);
    let mut rhs = Vec3::zeros();
    for l in 0..3 {
        let mut e = Vec3::zeros();
        e[l] = 1.0;
        let b: Vec<Vec3> = chain
            .extend(&e)
            .iter()
            .enumerate()
            .map(|(m, p)| w[m] * p)
            .collect();
        let psi = NodalIfe::new(b, 0.0, ctx.anchors.clone());
        // Volume term: ψ is piecewise linear, exact via region centroids.
        for m in 0..ctx.n_regions() {
            rhs[l] -= dv * ctx.vols[m] * psi.eval(&ctx.cents[m], m);
        }
        // Boundary term: the DoF is the face flux, spread uniformly over
        // the face; ψ is linear per plane side.
        for st in &ctx.ptris {
            let t = &ctx.tris[st.parent];
            let flux_density = fdofs[st.parent] * t.fsign / t.area;
            let mean_psi = (psi.eval(&st.x[0], st.region)
                + psi.eval(&st.x[1], st.region)
                + psi.eval(&st.x[2], st.region))
                / 3.0;
            rhs[l] += flux_density * st.area * mean_psi;
        }
    }
    let seed = solve3(&g, &rhs)?;
    Ok(chain.extend(&seed))
}

/// Interpolate the DoFs of analytic fields on an element context (used by
/// tests and by canonical interpolation): nodal values, edge tangential
/// moments (3-point Gauss), and face fluxes (degree-2 rule).
pub struct LocalDofs;

impl LocalDofs {
    pub fn nodal(ctx: &ElemCtx, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        ctx.coords.iter().map(|x| f(x)).collect()
    }

    /// Edge moments `∫_e v·t ds` along the global tangent direction.
    pub fn edge(ctx: &ElemCtx, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
        let (q, w) = crate::quadrature::edge_rule(3);
        ctx.ledge_nodes
            .iter()
            .map(|&[a, b]| {
                let (xa, xb) = (ctx.coords[a], ctx.coords[b]);
                let d = xb - xa;
                q.iter()
                    .zip(&w)
                    .map(|(&t, &wt)| wt * f(&(xa + d * t)).dot(&d))
                    .sum()
            })
            .collect()
    }

    /// Face fluxes `∫_F v·n ds` against canonical normals.
    pub fn face(ctx: &ElemCtx, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
        let rule = triangle_rule_deg2();
        ctx.tris
            .iter()
            .map(|t| {
                let (pts, wts) = map_triangle(&rule, &t.x[0], &t.x[1], &t.x[2]);
                let out: f64 = pts
                    .iter()
                    .zip(&wts)
                    .map(|(x, w)| w * f(x).dot(&t.nrm))
                    .sum();
                out * t.fsign
            })
            .collect()
    }
}
