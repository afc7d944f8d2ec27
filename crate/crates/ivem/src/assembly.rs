//! Local element matrices and global assembly for the H1 and H(curl)
//! immersed virtual element schemes, the discrete transfer operators of the
//! de Rham complex, and Dirichlet elimination.

use nalgebra::DMatrix;

use crate::geo::{tet_volume, tri_p1_gradients, Vec3};
use crate::ifespace::Coefficients;
use crate::mesh::{CutMeshTopology, ElemClass, RegionSign};
use crate::projection::{
    lift_h1, project_curl, project_h1_gradient, project_value_edge, tri_tangential_eval, ElemCtx,
};
use crate::quadrature::{edge_rule, map_tet, tet_rule_deg2, tet_rule_gauss};
use crate::solver::Csr;
use crate::Result;

/// Default stabilization parameters.
pub const GAMMA_H1: f64 = 1.0;
pub const GAMMA_CURL_VALUE: f64 = 1.0;
pub const GAMMA_CURL_ROT: f64 = 1.0;

/// Barycentric gradients of a tetrahedron.
pub fn tet_p1_gradients(x: &[Vec3; 4]) -> [Vec3; 4] {
    let m = nalgebra::Matrix3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let inv = m.try_inverse().expect("degenerate tetrahedron");
    let g1 = Vec3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
    let g2 = Vec3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
    let g3 = Vec3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Barycentric coordinates via the gradients: `λ_i(x) = 1/4 + g_i·(x - c)`.
pub(crate) fn tet_barycentric(x: &[Vec3; 4], g: &[Vec3; 4], p: &Vec3) -> [f64; 4] {
    let c = (x[0] + x[1] + x[2] + x[3]) / 4.0;
    [
        0.25 + g[0].dot(&(p - c)),
        0.25 + g[1].dot(&(p - c)),
        0.25 + g[2].dot(&(p - c)),
        0.25 + g[3].dot(&(p - c)),
    ]
}

/// Region sign of a non-interface element.
pub(crate) fn plain_sign(class: ElemClass) -> RegionSign {
    match class {
        ElemClass::Minus => RegionSign::Minus,
        _ => RegionSign::Plus,
    }
}

pub(crate) fn elem_vertices(topo: &CutMeshTopology, k: usize) -> [Vec3; 4] {
    let t = topo.cm.mesh.elems[k];
    [
        topo.cm.mesh.nodes[t[0]],
        topo.cm.mesh.nodes[t[1]],
        topo.cm.mesh.nodes[t[2]],
        topo.cm.mesh.nodes[t[3]],
    ]
}

/// Local edge endpoints as local node indices, ordered along the global
/// tangent (low global id first).
pub(crate) fn local_edge_nodes(topo: &CutMeshTopology, k: usize) -> Vec<[usize; 2]> {
    let et = &topo.elems[k];
    et.edges
        .iter()
        .map(|&ge| {
            let [a, b] = topo.edges[ge];
            let la = et.nodes.iter().position(|&g| g == a).unwrap();
            let lb = et.nodes.iter().position(|&g| g == b).unwrap();
            [la, lb]
        })
        .collect()
}

/// Scalar local operator `∫ sw ∇u·∇v + ∫ mw u v` with per-side weights; the
/// H1 scheme uses `sw = beta`, `mw = 0`, the auxiliary nodal operator of the
/// H(curl) preconditioner uses `sw = alpha`, `mw = beta`.
pub fn local_h1_weighted(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
    stiff_w: (f64, f64), // (minus, plus)
    mass_w: (f64, f64),
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let pick = |w: (f64, f64), s: RegionSign| match s {
        RegionSign::Minus => w.0,
        RegionSign::Plus => w.1,
    };
    if !topo.is_interface(k) {
        let x = elem_vertices(topo, k);
        let g = tet_p1_gradients(&x);
        let vol = tet_volume(&x[0], &x[1], &x[2], &x[3]);
        let s = plain_sign(topo.cm.class[k]);
        let (sw, mw) = (pick(stiff_w, s), pick(mass_w, s));
        let mut a = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = sw * vol * g[i].dot(&g[j]);
                if mw != 0.0 {
                    a[(i, j)] += mw * vol / 20.0 * if i == j { 2.0 } else { 1.0 };
                }
            }
        }
        return Ok(a);
    }

    let ctx = ElemCtx::interface(topo, k, coeff)?;
    let n = ctx.n_nodes();
    let sw_r: Vec<f64> = ctx.regions.iter().map(|&s| pick(stiff_w, s)).collect();
    let mw_r: Vec<f64> = ctx.regions.iter().map(|&s| pick(mass_w, s)).collect();

    // Projected gradients and lifts of the nodal basis.
    let mut grads = Vec::with_capacity(n);
    let mut lifts = Vec::with_capacity(n);
    for i in 0..n {
        let mut dofs = vec![0.0; n];
        dofs[i] = 1.0;
        grads.push(project_h1_gradient(&ctx, &sw_r, &dofs)?);
        lifts.push(lift_h1(&ctx, &sw_r, &dofs)?);
    }

    let mut a = DMatrix::zeros(n, n);
    // Consistency term.
    for i in 0..n {
        for j in i..n {
            let mut v = 0.0;
            for m in 0..ctx.n_regions() {
                v += sw_r[m] * ctx.vols[m] * grads[i][m].dot(&grads[j][m]);
            }
            a[(i, j)] += v;
            if i != j {
                a[(j, i)] += v;
            }
        }
    }
    // Stabilization: surface gradients of the non-projected slice.
    for t in &ctx.tris {
        let gt = tri_p1_gradients(&t.x[0], &t.x[1], &t.x[2]);
        let mut slice_grad = vec![Vec3::zeros(); n];
        for i in 0..n {
            let mut g = Vec3::zeros();
            for v in 0..3 {
                let phi = if t.nodes[v] == i { 1.0 } else { 0.0 };
                let s = phi - lifts[i].eval(&t.x[v], t.region);
                g += s * gt[v];
            }
            slice_grad[i] = g;
        }
        for i in 0..n {
            for j in i..n {
                let v = gamma * ctx.h_k * t.area * slice_grad[i].dot(&slice_grad[j]);
                a[(i, j)] += v;
                if i != j {
                    a[(j, i)] += v;
                }
            }
        }
    }
    // Mass term through the lifts (consistency only).
    if mass_w != (0.0, 0.0) {
        let rule = tet_rule_deg2();
        for m in 0..ctx.n_regions() {
            if mw_r[m] == 0.0 {
                continue;
            }
            let quad = ctx.region_quad(m, &rule);
            for (x, w) in &quad {
                let vals: Vec<f64> = lifts.iter().map(|l| l.eval(x, m)).collect();
                for i in 0..n {
                    for j in i..n {
                        let v = mw_r[m] * w * vals[i] * vals[j];
                        a[(i, j)] += v;
                        if i != j {
                            a[(j, i)] += v;
                        }
                    }
                }
            }
        }
    }
    Ok(a)
}

/// H1 interface-problem local stiffness `∫ beta ∇u·∇v` plus stabilization.
pub fn local_h1(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    local_h1_weighted(topo, k, coeff, (coeff.beta_minus, coeff.beta_plus), (0.0, 0.0), gamma)
}

/// H(curl) local matrices: `(curl-curl part, mass part)`, each with its own
/// stabilization; the system matrix is their sum.
pub fn local_curl(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
    gamma_rot: f64,
    gamma_val: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !topo.is_interface(k) {
        return local_curl_plain(topo, k, coeff);
    }
    let ctx = ElemCtx::interface(topo, k, coeff)?;
    let ne = ctx.n_edges();
    let alpha = ctx.alpha.clone();
    let beta = ctx.beta.clone();

    let mut curls = Vec::with_capacity(ne);
    let mut vals = Vec::with_capacity(ne);
    for i in 0..ne {
        let mut dofs = vec![0.0; ne];
        dofs[i] = 1.0;
        curls.push(project_curl(&ctx, &alpha, &dofs)?);
        vals.push(project_value_edge(&ctx, &beta, &dofs)?);
    }

    let nr = ctx.n_regions();
    let mut a1 = DMatrix::zeros(ne, ne);
    let mut a0 = DMatrix::zeros(ne, ne);
    for i in 0..ne {
        for j in i..ne {
            let mut s1 = 0.0;
            let mut s0 = 0.0;
            for m in 0..nr {
                s1 += alpha[m] * ctx.vols[m] * curls[i][m].dot(&curls[j][m]);
                s0 += beta[m] * ctx.vols[m] * vals[i][m].dot(&vals[j][m]);
            }
            a1[(i, j)] += s1;
            a0[(i, j)] += s0;
            if i != j {
                a1[(j, i)] += s1;
                a0[(j, i)] += s0;
            }
        }
    }

    // Rotation (curl) stabilization: per-face circulation minus the normal
    // component of the projected curl.
    let rule = crate::quadrature::triangle_rule_deg2();
    for t in &ctx.tris {
        let mut rot_slice = vec![0.0; ne];
        for i in 0..ne {
            let mut circ = 0.0;
            for k3 in 0..3 {
                if t.ledges[k3] == i {
                    circ += t.esign[k3];
                }
            }
            rot_slice[i] = circ / t.area - curls[i][t.region].dot(&t.nrm);
        }
        for i in 0..ne {
            if rot_slice[i] == 0.0 {
                continue;
            }
            for j in i..ne {
                let v = gamma_rot * ctx.h_k * t.area * rot_slice[i] * rot_slice[j];
                a1[(i, j)] += v;
                if i != j {
                    a1[(j, i)] += v;
                }
            }
        }

        // Value stabilization: tangential trace minus the projected value.
        let (pts, wts) = crate::quadrature::map_triangle(&rule, &t.x[0], &t.x[1], &t.x[2]);
        let mut slices: Vec<Vec<Vec3>> = vec![Vec::with_capacity(pts.len()); ne];
        for i in 0..ne {
            let mut dofs = vec![0.0; ne];
            dofs[i] = 1.0;
            let pv = vals[i][t.region];
            let pv_tau = pv - pv.dot(&t.nrm) * t.nrm;
            for x in &pts {
                let tr = tri_tangential_eval(t, &dofs, x);
                slices[i].push(tr - pv_tau);
            }
        }
        for i in 0..ne {
            for j in i..ne {
                let mut v = 0.0;
                for (q, w) in wts.iter().enumerate() {
                    v += w * slices[i][q].dot(&slices[j][q]);
                }
                v *= gamma_val;
                a0[(i, j)] += v;
                if i != j {
                    a0[(j, i)] += v;
                }
            }
        }
    }
    Ok((a1, a0))
}

/// Exact lowest-order edge-element matrices on an uncut tetrahedron.
fn local_curl_plain(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x = elem_vertices(topo, k);
    let g = tet_p1_gradients(&x);
    let vol = tet_volume(&x[0], &x[1], &x[2], &x[3]);
    let s = plain_sign(topo.cm.class[k]);
    let (al, be) = (coeff.alpha(s), coeff.beta(s));
    let len = local_edge_nodes(topo, k);
    let ne = len.len();
    let mut a1 = DMatrix::zeros(ne, ne);
    let mut a0 = DMatrix::zeros(ne, ne);
    // curl W_{ab} = 2 ∇λ_a × ∇λ_b (constant).
    let curls: Vec<Vec3> = len.iter().map(|&[a, b]| 2.0 * g[a].cross(&g[b])).collect();
    for i in 0..ne {
        for j in 0..ne {
            a1[(i, j)] = al * vol * curls[i].dot(&curls[j]);
        }
    }
    // Mass: Whitney products are quadratic; the degree-2 rule is exact.
    let rule = tet_rule_deg2();
    let (pts, wts) = map_tet(&rule, &x[0], &x[1], &x[2], &x[3]);
    for (p, w) in pts.iter().zip(&wts) {
        let lam = tet_barycentric(&x, &g, p);
        let wv: Vec<Vec3> =
            len.iter().map(|&[a, b]| lam[a] * g[b] - lam[b] * g[a]).collect();
        for i in 0..ne {
            for j in 0..ne {
                a0[(i, j)] += be * w * wv[i].dot(&wv[j]);
            }
        }
    }
    Ok((a1, a0))
}

/// H1 local load `∫ f Π̃φ_i` (projection-based on interface elements, exact
/// basis on plain elements with a degree-4 rule).
pub fn local_load_h1(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
    f: &dyn Fn(&Vec3, RegionSign) -> f64,
) -> Result<Vec<f64>> {
    if !topo.is_interface(k) {
        let x = elem_vertices(topo, k);
        let g = tet_p1_gradients(&x);
        let s = plain_sign(topo.cm.class[k]);
        let rule = tet_rule_gauss(3);
        let (pts, wts) = map_tet(&rule, &x[0], &x[1], &x[2], &x[3]);
        let mut rhs = vec![0.0; 4];
        for (p, w) in pts.iter().zip(&wts) {
            let lam = tet_barycentric(&x, &g, p);
            let fv = f(p, s);
            for i in 0..4 {
                rhs[i] += w * fv * lam[i];
            }
        }
        return Ok(rhs);
    }
    let ctx = ElemCtx::interface(topo, k, coeff)?;
    let n = ctx.n_nodes();
    let beta = ctx.beta.clone();
    let mut lifts = Vec::with_capacity(n);
    for i in 0..n {
        let mut dofs = vec![0.0; n];
        dofs[i] = 1.0;
        lifts.push(lift_h1(&ctx, &beta, &dofs)?);
    }
    let rule = tet_rule_deg2();
    let mut rhs = vec![0.0; n];
    for m in 0..ctx.n_regions() {
        let s = ctx.regions[m];
        for (x, w) in ctx.region_quad(m, &rule) {
            let fv = f(&x, s);
            for i in 0..n {
                rhs[i] += w * fv * lifts[i].eval(&x, m);
            }
        }
    }
    Ok(rhs)
}

/// H(curl) local load `∫ f · Π φ_i` with the piecewise-constant value
/// projection on interface elements and exact Whitney functions elsewhere.
pub fn local_load_curl(
    topo: &CutMeshTopology,
    k: usize,
    coeff: &Coefficients,
    f: &dyn Fn(&Vec3, RegionSign) -> Vec3,
) -> Result<Vec<f64>> {
    if !topo.is_interface(k) {
        let x = elem_vertices(topo, k);
        let g = tet_p1_gradients(&x);
        let s = plain_sign(topo.cm.class[k]);
        let len = local_edge_nodes(topo, k);
        let rule = tet_rule_gauss(3);
        let (pts, wts) = map_tet(&rule, &x[0], &x[1], &x[2], &x[3]);
        let mut rhs = vec![0.0; len.len()];
        for (p, w) in pts.iter().zip(&wts) {
            let lam = tet_barycentric(&x, &g, p);
            let fv = f(p, s);
            for (i, &[a, b]) in len.iter().enumerate() {
                let wv = lam[a] * g[b] - lam[b] * g[a];
                rhs[i] += w * fv.dot(&wv);
            }
        }
        return Ok(rhs);
    }
    let ctx = ElemCtx::interface(topo, k, coeff)?;
    let ne = ctx.n_edges();
    let beta = ctx.beta.clone();
    // Region integrals of f (the projections are constant per region).
    let rule = tet_rule_deg2();
    let mut int_f = vec![Vec3::zeros(); ctx.n_regions()];
    for m in 0..ctx.n_regions() {
        let s = ctx.regions[m];
        for (x, w) in ctx.region_quad(m, &rule) {
            int_f[m] += w * f(&x, s);
        }
    }
    let mut rhs = vec![0.0; ne];
    for i in 0..ne {
        let mut dofs = vec![0.0; ne];
        dofs[i] = 1.0;
        let v = project_value_edge(&ctx, &beta, &dofs)?;
        for m in 0..ctx.n_regions() {
            rhs[i] += int_f[m].dot(&v[m]);
        }
    }
    Ok(rhs)
}

/// An assembled symmetric system with Dirichlet data.
pub struct System {
    pub a: Csr,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
    pub is_free: Vec<bool>,
    /// Prescribed values on the fixed DoFs (zero on free DoFs).
    pub dirichlet: Vec<f64>,
}

impl System {
    /// Reduced free-free matrix and eliminated right-hand side.
    pub fn reduced(&self) -> (Csr, Vec<f64>) {
        let aff = self.a.submatrix(&self.free, &self.free);
        let mut bf: Vec<f64> = self.free.iter().map(|&i| self.rhs[i]).collect();
        // b_f -= A_fc g_c.
        for (p, &i) in self.free.iter().enumerate() {
            let (cols, vals) = self.a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !self.is_free[j] {
                    bf[p] -= v * self.dirichlet[j];
                }
            }
        }
        (aff, bf)
    }

    /// Expand a free-DoF vector to the full DoF vector with Dirichlet data.
    pub fn expand(&self, xf: &[f64]) -> Vec<f64> {
        let mut x = self.dirichlet.clone();
        for (p, &i) in self.free.iter().enumerate() {
            x[i] = xf[p];
        }
        x
    }

    pub fn n_dofs(&self) -> usize {
        self.a.n_rows
    }
}

/// Assemble the H1 system with Dirichlet boundary values from `g`.
pub fn assemble_h1(
    topo: &CutMeshTopology,
    coeff: &Coefficients,
    gamma: f64,
    f: &dyn Fn(&Vec3, RegionSign) -> f64,
    g: &dyn Fn(&Vec3) -> f64,
) -> Result<System> {
    let n = topo.n_nodes();
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];
    for k in 0..topo.n_elems() {
        let a = local_h1(topo, k, coeff, gamma)?;
        let load = local_load_h1(topo, k, coeff, f)?;
        let gn = &topo.elems[k].nodes;
        for (li, &gi) in gn.iter().enumerate() {
            rhs[gi] += load[li];
            for (lj, &gj) in gn.iter().enumerate() {
                trips.push((gi, gj, a[(li, lj)]));
            }
        }
    }
    let a = Csr::from_triplets(n, n, &trips);
    let is_free: Vec<bool> = topo.node_on_boundary.iter().map(|&b| !b).collect();
    let free: Vec<usize> = (0..n).filter(|&i| is_free[i]).collect();
    let dirichlet: Vec<f64> = (0..n)
        .map(|i| if is_free[i] { 0.0 } else { g(&topo.nodes[i]) })
        .collect();
    Ok(System { a, rhs, free, is_free, dirichlet })
}

/// Edge moment `∫_e g·t ds` with a 3-point Gauss rule.
pub fn edge_moment(topo: &CutMeshTopology, e: usize, g: &dyn Fn(&Vec3) -> Vec3) -> f64 {
    let [a, b] = topo.edges[e];
    let (xa, xb) = (topo.nodes[a], topo.nodes[b]);
    let d = xb - xa;
    let (q, w) = edge_rule(3);
    q.iter().zip(&w).map(|(&t, &wt)| wt * g(&(xa + d * t)).dot(&d)).sum()
}

/// Assemble the H(curl) system with tangential Dirichlet data from `g`.
pub fn assemble_curl(
    topo: &CutMeshTopology,
    coeff: &Coefficients,
    gamma_rot: f64,
    gamma_val: f64,
    f: &dyn Fn(&Vec3, RegionSign) -> Vec3,
    g: &dyn Fn(&Vec3) -> Vec3,
) -> Result<System> {
    let n = topo.n_edges();
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];
    for k in 0..topo.n_elems() {
        let (a1, a0) = local_curl(topo, k, coeff, gamma_rot, gamma_val)?;
        let load = local_load_curl(topo, k, coeff, f)?;
        let ge = &topo.elems[k].edges;
        for (li, &gi) in ge.iter().enumerate() {
            rhs[gi] += load[li];
            for (lj, &gj) in ge.iter().enumerate() {
                trips.push((gi, gj, a1[(li, lj)] + a0[(li, lj)]));
            }
        }
    }
    let a = Csr::from_triplets(n, n, &trips);
    let is_free: Vec<bool> = topo.edge_on_boundary.iter().map(|&b| !b).collect();
    let free: Vec<usize> = (0..n).filter(|&i| is_free[i]).collect();
    let dirichlet: Vec<f64> = (0..n)
        .map(|i| if is_free[i] { 0.0 } else { edge_moment(topo, i, g) })
        .collect();
    Ok(System { a, rhs, free, is_free, dirichlet })
}

/// Discrete gradient `G` (edges × nodes): `(∇u)_e = u_hi - u_lo`.
pub fn grad_matrix(topo: &CutMeshTopology) -> Csr {
    let mut trips = Vec::with_capacity(2 * topo.n_edges());
    for (e, &[a, b]) in topo.edges.iter().enumerate() {
        trips.push((e, a, -1.0));
        trips.push((e, b, 1.0));
    }
    Csr::from_triplets(topo.n_edges(), topo.n_nodes(), &trips)
}

/// Discrete curl `C` (faces × edges): circulation of the canonical loop.
pub fn curl_matrix(topo: &CutMeshTopology) -> Csr {
    let mut trips = Vec::with_capacity(3 * topo.n_faces());
    for (fid, &[i, j, k]) in topo.faces.iter().enumerate() {
        // Ascending triple: loop i -> j -> k -> i.
        let e_ij = topo.edge_lookup[&[i, j]];
        let e_jk = topo.edge_lookup[&[j, k]];
        let e_ik = topo.edge_lookup[&[i, k]];
        trips.push((fid, e_ij, 1.0));
        trips.push((fid, e_jk, 1.0));
        trips.push((fid, e_ik, -1.0));
    }
    Csr::from_triplets(topo.n_faces(), topo.n_edges(), &trips)
}

/// Discrete divergence `D` (elements × faces): outward flux signs.
pub fn div_matrix(topo: &CutMeshTopology) -> Csr {
    let mut trips = Vec::new();
    for (k, et) in topo.elems.iter().enumerate() {
        for t in &et.tris {
            trips.push((k, t.gface, t.fsign));
        }
    }
    Csr::from_triplets(topo.n_elems(), topo.n_faces(), &trips)
}

/// Nodal-to-edge interpolation `P` (edges × 3·nodes, block layout
/// `comp · n_nodes + node`): the edge moment of the piecewise-linear nodal
/// vector field, `|e| t_e · (u_a + u_b) / 2`.
pub fn node_to_edge_matrix(topo: &CutMeshTopology) -> Csr {
    let nn = topo.n_nodes();
    let mut trips = Vec::with_capacity(6 * topo.n_edges());
    for (e, &[a, b]) in topo.edges.iter().enumerate() {
        let d = topo.nodes[b] - topo.nodes[a];
        for c in 0..3 {
            trips.push((e, c * nn + a, 0.5 * d[c]));
            trips.push((e, c * nn + b, 0.5 * d[c]));
        }
    }
    Csr::from_triplets(topo.n_edges(), 3 * nn, &trips)
}

/// Everything the auxiliary-space preconditioner needs, reduced to the free
/// DoFs of the H(curl) system.
pub struct HxSetup {
    /// Gradient transfer on free DoFs.
    pub g: Csr,
    /// Nodal vector transfer on free DoFs (cols: 3 · free nodes).
    pub p: Csr,
    /// Scalar auxiliary operator (alpha-stiffness + beta-mass) on free nodes.
    pub a_vec_scalar: Csr,
    /// Gradient auxiliary operator `G^T A G` on free nodes.
    pub a_grad: Csr,
    /// Free-edge indices (positions in the reduced system) of edges within
    /// distance `l` of an interface element; empty for `l = 0`.
    pub block_edges: Vec<usize>,
}

/// Build the HX ingredients for the reduced H(curl) matrix `aff`.
pub fn hx_setup(
    topo: &CutMeshTopology,
    sys: &System,
    aff: &Csr,
    coeff: &Coefficients,
    gamma: f64,
    l: usize,
) -> Result<HxSetup> {
    // Free nodes are the interior nodes (matching the H1_0 auxiliary space).
    let free_nodes: Vec<usize> =
        (0..topo.n_nodes()).filter(|&i| !topo.node_on_boundary[i]).collect();
    let g_full = grad_matrix(topo);
    let g = g_full.submatrix(&sys.free, &free_nodes);
    let p_full = node_to_edge_matrix(topo);
    let nn = topo.n_nodes();
    let cols: Vec<usize> = (0..3)
        .flat_map(|c| free_nodes.iter().map(move |&i| c * nn + i))
        .collect();
    let p = p_full.submatrix(&sys.free, &cols);

    // Scalar auxiliary operator.
    let n = topo.n_nodes();
    let mut trips = Vec::new();
    for k in 0..topo.n_elems() {
        let a = local_h1_weighted(
            topo,
            k,
            coeff,
            (coeff.alpha_minus, coeff.alpha_plus),
            (coeff.beta_minus, coeff.beta_plus),
            gamma,
        )?;
        let gn = &topo.elems[k].nodes;
        for (li, &gi) in gn.iter().enumerate() {
            for (lj, &gj) in gn.iter().enumerate() {
                trips.push((gi, gj, a[(li, lj)]));
            }
        }
    }
    let a_scalar_full = Csr::from_triplets(n, n, &trips);
    let a_vec_scalar = a_scalar_full.submatrix(&free_nodes, &free_nodes);

    let a_grad = g.transpose().matmul(&aff.matmul(&g)?)?;

    // Interface-neighborhood edge set, grown by node adjacency.
    let block_edges = if l == 0 {
        Vec::new()
    } else {
        let mut edge_in = vec![false; topo.n_edges()];
        let mut node_in = vec![false; topo.n_nodes()];
        for k in 0..topo.n_elems() {
            if topo.is_interface(k) {
                for &e in &topo.elems[k].edges {
                    edge_in[e] = true;
                }
            }
        }
        for _ in 1..l {
            for (e, &[a, b]) in topo.edges.iter().enumerate() {
                if edge_in[e] {
                    node_in[a] = true;
                    node_in[b] = true;
                }
            }
            for (e, &[a, b]) in topo.edges.iter().enumerate() {
                if node_in[a] || node_in[b] {
                    edge_in[e] = true;
                }
            }
        }
        sys.free
            .iter()
            .enumerate()
            .filter(|&(_, &e)| edge_in[e])
            .map(|(p, _)| p)
            .collect()
    };

    Ok(HxSetup { g, p, a_vec_scalar, a_grad, block_edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Box3;
    use crate::mesh::{
        build_background_mesh, build_topology, classify_and_cut, plane_x, sphere, LevelSet,
        SNAP_TOL,
    };

    fn topo(n: usize, ls: &LevelSet) -> CutMeshTopology {
        let mesh = build_background_mesh(n, Box3::cube(-1.0, 1.0)).unwrap();
        let cm = classify_and_cut(mesh, ls, SNAP_TOL).unwrap();
        build_topology(cm).unwrap()
    }

    #[test]
    fn transfer_complex_identities() {
        for ls in [plane_x(0.05), sphere(std::f64::consts::PI / 5.0)] {
            let t = topo(3, &ls);
            let g = grad_matrix(&t);
            let c = curl_matrix(&t);
            let d = div_matrix(&t);
            let cg = c.matmul(&g).unwrap();
            assert!(cg.vals.iter().all(|&v| v == 0.0), "C G != 0");
            let dc = d.matmul(&c).unwrap();
            assert!(dc.vals.iter().all(|&v| v == 0.0), "D C != 0");
        }
    }

    #[test]
    fn h1_local_matrices_are_spd_with_constant_kernel() {
        let coeff = Coefficients::h1(1.0, 100.0);
        let t = topo(3, &sphere(std::f64::consts::PI / 5.0));
        let mut seen_interface = false;
        for k in 0..t.n_elems() {
            let a = local_h1(&t, k, &coeff, GAMMA_H1).unwrap();
            let n = a.nrows();
            // Symmetry.
            assert!((&a - a.transpose()).amax() < 1e-11 * a.amax().max(1.0));
            // Constants in the kernel.
            let ones = nalgebra::DVector::from_element(n, 1.0);
            assert!((&a * &ones).amax() < 1e-10 * a.amax().max(1.0), "element {k}");
            // Positive semidefinite with 1-dimensional kernel.
            let eig = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues;
            let mx = eig.amax();
            let n_zero = eig.iter().filter(|&&e| e.abs() < 1e-9 * mx).count();
            assert_eq!(n_zero, 1, "element {k}: kernel dimension");
            assert!(eig.iter().all(|&e| e > -1e-9 * mx));
            if t.is_interface(k) {
                seen_interface = true;
            }
        }
        assert!(seen_interface);
    }

    #[test]
    fn curl_local_matrices_are_consistent() {
        let coeff =
            Coefficients { alpha_minus: 1.0, alpha_plus: 100.0, beta_minus: 1.0, beta_plus: 200.0 };
        let t = topo(3, &sphere(std::f64::consts::PI / 5.0));
        let g = grad_matrix(&t);
        for k in 0..t.n_elems() {
            let (a1, a0) = local_curl(&t, k, &coeff, GAMMA_CURL_ROT, GAMMA_CURL_VALUE).unwrap();
            let ne = a1.nrows();
            assert!((&a1 - a1.transpose()).amax() < 1e-10 * a1.amax().max(1.0));
            assert!((&a0 - a0.transpose()).amax() < 1e-10 * a0.amax().max(1.0));
            // Gradients of local nodal functions lie in the kernel of the
            // curl part: rows of G restricted to the element.
            let et = &t.elems[k];
            for (pos_n, &gn) in et.nodes.iter().enumerate() {
                let mut ge = nalgebra::DVector::zeros(ne);
                for (pos_e, &e) in et.edges.iter().enumerate() {
                    let (cols, vals) = g.row(e);
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j == gn {
                            ge[pos_e] = v;
                        }
                    }
                }
                let _ = pos_n;
                let r = (&a1 * &ge).amax();
                assert!(r < 1e-9 * a1.amax().max(1.0), "element {k}: |A1 G| = {r:.3e}");
            }
            // The mass part must be positive definite.
            let eig = nalgebra::SymmetricEigen::new(a0.clone()).eigenvalues;
            assert!(eig.iter().all(|&e| e > 0.0), "element {k}: mass not SPD");
        }
    }

    #[test]
    fn h1_patch_test_linear_solution() {
        // beta ≡ 1 and u = linear: the scheme must reproduce u exactly.
        let coeff = Coefficients::h1(1.0, 1.0);
        let t = topo(3, &sphere(std::f64::consts::PI / 5.0));
        let u = |x: &Vec3| 2.0 * x.x - 0.7 * x.y + 0.3 * x.z + 0.9;
        let sys =
            assemble_h1(&t, &coeff, GAMMA_H1, &|_, _| 0.0, &|x| u(x)).unwrap();
        let (aff, bf) = sys.reduced();
        let ldl = crate::solver::LdlFactor::new(&aff).unwrap();
        let xf = ldl.solve(&bf);
        let x = sys.expand(&xf);
        for (i, xi) in t.nodes.iter().enumerate() {
            assert!((x[i] - u(xi)).abs() < 1e-9, "node {i}: {} vs {}", x[i], u(xi));
        }
    }

    #[test]
    fn curl_patch_test_constant_field() {
        // alpha = beta ≡ 1 and u constant: exact reproduction.
        let coeff =
            Coefficients { alpha_minus: 1.0, alpha_plus: 1.0, beta_minus: 1.0, beta_plus: 1.0 };
        let t = topo(3, &sphere(std::f64::consts::PI / 5.0));
        let u0 = Vec3::new(0.4, -1.1, 0.8);
        let u = move |_x: &Vec3| u0;
        let sys = assemble_curl(
            &t,
            &coeff,
            GAMMA_CURL_ROT,
            GAMMA_CURL_VALUE,
            &|_, _| u0, // f = beta u since curl u = 0
            &u,
        )
        .unwrap();
        let (aff, bf) = sys.reduced();
        let ldl = crate::solver::LdlFactor::new(&aff).unwrap();
        let xf = ldl.solve(&bf);
        let x = sys.expand(&xf);
        for e in 0..t.n_edges() {
            let expect = edge_moment(&t, e, &u);
            assert!(
                (x[e] - expect).abs() < 1e-8 * (1.0 + expect.abs()),
                "edge {e}: {} vs {}",
                x[e],
                expect
            );
        }
    }
}
