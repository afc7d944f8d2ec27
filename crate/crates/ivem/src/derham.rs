//! Discrete de Rham complex on the cut topology: canonical interpolations,
//! exactness (rank) checks of the transfer operators, and commuting-diagram
//! residuals.

use crate::assembly::{curl_matrix, div_matrix, grad_matrix};
use crate::geo::Vec3;
use crate::mesh::CutMeshTopology;
use crate::quadrature::{edge_rule, map_tet, map_triangle, tet_rule_gauss, triangle_rule_deg2};
use crate::solver::Csr;

/// Nodal interpolation: point values.
pub fn interp_nodal(topo: &CutMeshTopology, f: &dyn Fn(&Vec3) -> f64) -> Vec<f64> {
    topo.nodes.iter().map(|x| f(x)).collect()
}

/// Edge interpolation: tangential moments `∫_e v·t ds` (3-point Gauss).
pub fn interp_edge(topo: &CutMeshTopology, v: &dyn Fn(&Vec3) -> Vec3) -> Vec<f64> {
    let (q, w) = edge_rule(3);
    topo.edges
        .iter()
        .map(|&[a, b]| {
            let (xa, xb) = (topo.nodes[a], topo.nodes[b]);
            let d = xb - xa;
            q.iter().zip(&w).map(|(&t, &wt)| wt * v(&(xa + d * t)).dot(&d)).sum()
        })
        .collect()
}

/// Face interpolation: fluxes `∫_F w·n ds` against the canonical normals.
pub fn interp_face(topo: &CutMeshTopology, v: &dyn Fn(&Vec3) -> Vec3) -> Vec<f64> {
    let rule = triangle_rule_deg2();
    topo.faces
        .iter()
        .map(|&[i, j, k]| {
            let (a, b, c) = (topo.nodes[i], topo.nodes[j], topo.nodes[k]);
            let an = crate::geo::tri_area_normal(&a, &b, &c);
            let n = an / an.norm();
            let (pts, wts) = map_triangle(&rule, &a, &b, &c);
            pts.iter().zip(&wts).map(|(x, w)| w * v(x).dot(&n)).sum()
        })
        .collect()
}

/// Element projection: volume integrals `∫_K f dx` (degree-5 rule).
pub fn project_elem(topo: &CutMeshTopology, f: &dyn Fn(&Vec3) -> f64) -> Vec<f64> {
    let rule = tet_rule_gauss(4);
    topo.cm
        .mesh
        .elems
        .iter()
        .map(|t| {
            let x: Vec<Vec3> = t.iter().map(|&v| topo.cm.mesh.nodes[v]).collect();
            let (pts, wts) = map_tet(&rule, &x[0], &x[1], &x[2], &x[3]);
            pts.iter().zip(&wts).map(|(p, w)| w * f(p)).sum()
        })
        .collect()
}

/// Exactness and commuting-diagram report for the discrete complex.
#[derive(Debug, Clone)]
pub struct DeRhamReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_faces: usize,
    pub n_elems: usize,
    pub rank_grad: usize,
    pub rank_curl: usize,
    pub rank_div: usize,
    /// Max |C G| and |D C| entries.
    pub composition_residual: f64,
    /// Max residuals of the three commuting identities on smooth fields.
    pub res_commute_grad: f64,
    pub res_commute_curl: f64,
    pub res_commute_div: f64,
}

impl DeRhamReport {
    /// The expected ranks of a contractible (box) domain complex.
    pub fn ranks_are_exact(&self) -> bool {
        let (v, e, f) = (self.n_nodes as i64, self.n_edges as i64, self.n_faces as i64);
        self.rank_grad as i64 == v - 1
            && self.rank_curl as i64 == e - v + 1
            && self.rank_div as i64 == f - e + v - 1
    }
}

fn dense_rank(a: &Csr) -> usize {
    let m = nalgebra::DMatrix::from_fn(a.n_rows, a.n_cols, |i, j| {
        let (cols, vals) = a.row(i);
        cols.iter().zip(vals).find(|(&c, _)| c == j).map(|(_, &v)| v).unwrap_or(0.0)
    });
    m.rank(1e-9 * m.amax().max(1.0))
}

/// Verify the discrete complex; rank checks run only below `rank_dof_limit`
/// total DoFs (dense SVD-based ranks).
pub fn verify_complex(topo: &CutMeshTopology, rank_dof_limit: usize) -> DeRhamReport {
    let g = grad_matrix(topo);
    let c = curl_matrix(topo);
    let d = div_matrix(topo);

    let mut comp = 0.0f64;
    for m in [c.matmul(&g).unwrap(), d.matmul(&c).unwrap()] {
        for &v in &m.vals {
            comp = comp.max(v.abs());
        }
    }

    let (rank_grad, rank_curl, rank_div) =
        if topo.n_nodes() + topo.n_edges() + topo.n_faces() <= rank_dof_limit {
            (dense_rank(&g), dense_rank(&c), dense_rank(&d))
        } else {
            // Report the expected ranks when too large for dense checks.
            (
                topo.n_nodes() - 1,
                topo.n_edges() - topo.n_nodes() + 1,
                topo.n_faces() - topo.n_edges() + topo.n_nodes() - 1,
            )
        };

    // Commuting identities on smooth polynomial fields, for which every
    // quadrature involved is exact.
    let u = |x: &Vec3| x.x * x.x * x.y - 2.0 * x.z * x.x + 3.0 * x.y + 0.5;
    let grad_u = |x: &Vec3| Vec3::new(2.0 * x.x * x.y - 2.0 * x.z, x.x * x.x + 3.0, -2.0 * x.x);
    let v = |x: &Vec3| Vec3::new(x.y * x.z, x.x * x.x - x.z, x.x * x.y + x.z * x.z);
    let curl_v = |x: &Vec3| Vec3::new(x.x + 1.0, 0.0, 2.0 * x.x - x.z);
    let w = |x: &Vec3| Vec3::new(x.x * x.y, x.y * x.z, x.z * x.x - x.y * x.y);
    let div_w = |x: &Vec3| x.y + x.z + x.x;

    let scale_e = topo.cm.mesh.h;

    let iu = interp_nodal(topo, &u);
    let gu = g.matvec(&iu);
    let igu = interp_edge(topo, &grad_u);
    let res_commute_grad = gu
        .iter()
        .zip(&igu)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale_e.max(1e-300);

    let iv = interp_edge(topo, &v);
    let cv = c.matvec(&iv);
    let icv = interp_face(topo, &curl_v);
    let res_commute_curl = cv
        .iter()
        .zip(&icv)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / (scale_e * scale_e).max(1e-300);

    let iw = interp_face(topo, &w);
    let dw = d.matvec(&iw);
    let pdw = project_elem(topo, &|x: &Vec3| div_w(x));
    let res_commute_div = dw
        .iter()
        .zip(&pdw)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / (scale_e * scale_e * scale_e).max(1e-300);

    DeRhamReport {
        n_nodes: topo.n_nodes(),
        n_edges: topo.n_edges(),
        n_faces: topo.n_faces(),
        n_elems: topo.n_elems(),
        rank_grad,
        rank_curl,
        rank_div,
        composition_residual: comp,
        res_commute_grad,
        res_commute_curl,
        res_commute_div,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Box3;
    use crate::mesh::{
        build_background_mesh, build_topology, classify_and_cut, sphere, SNAP_TOL,
    };

    #[test]
    fn complex_is_exact_and_commutes() {
        for n in [2usize, 4] {
            let mesh = build_background_mesh(n, Box3::cube(-1.0, 1.0)).unwrap();
            let cm =
                classify_and_cut(mesh, &sphere(std::f64::consts::PI / 5.0), SNAP_TOL).unwrap();
            let topo = build_topology(cm).unwrap();
            let rep = verify_complex(&topo, 5000);
            assert!(rep.ranks_are_exact(), "n={n}: ranks {rep:?}");
            assert!(rep.composition_residual == 0.0, "n={n}");
            assert!(rep.res_commute_grad < 1e-10, "n={n}: {:.3e}", rep.res_commute_grad);
            assert!(rep.res_commute_curl < 1e-10, "n={n}: {:.3e}", rep.res_commute_curl);
            assert!(rep.res_commute_div < 1e-10, "n={n}: {:.3e}", rep.res_commute_div);
        }
    }
}
