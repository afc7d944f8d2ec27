//! Global unfitted topology: nodes, edges, and faces of the boundary
//! triangulations of all elements, with deterministic enumeration and
//! element-local gather data for assembly.

use std::collections::HashMap;

use crate::geo::{tri_area_normal, Vec3};
use crate::mesh::{CutMesh, ElemClass};
use crate::{IvemError, Result};

/// One triangle of an element's surface triangulation.
#[derive(Debug, Clone)]
pub struct SurfTri {
    /// Local node indices, ordered so the right-hand normal points out of
    /// the element.
    pub nodes: [usize; 3],
    /// Region index of the surface patch (0 for plain elements).
    pub region: usize,
    /// Global face id.
    pub gface: usize,
    /// +1 if the outward normal agrees with the canonical face normal
    /// (right-hand rule on ascending global node ids), else -1.
    pub fsign: f64,
    /// Local edge indices (into [`ElemTopo::edges`]) of edges
    /// `(nodes[k], nodes[k+1 mod 3])`.
    pub ledges: [usize; 3],
    /// +1 if the triangle traverses the edge from its lower to its higher
    /// global node id (the global tangent direction), else -1.
    pub esign: [f64; 3],
}

/// Element-local topology: gather lists plus the surface triangulation.
#[derive(Debug, Clone)]
pub struct ElemTopo {
    /// Global node ids; locals 0..4 are the tet vertices, then cut points.
    pub nodes: Vec<usize>,
    /// Global edge ids, deterministic first-encounter order.
    pub edges: Vec<usize>,
    /// Global face ids, aligned with `tris`.
    pub faces: Vec<usize>,
    pub tris: Vec<SurfTri>,
}

/// Global topology of the cut mesh.
#[derive(Debug)]
pub struct CutMeshTopology {
    pub cm: CutMesh,
    /// Background nodes followed by cut points.
    pub nodes: Vec<Vec3>,
    /// Sorted node pairs; global tangent low -> high id.
    pub edges: Vec<[usize; 2]>,
    /// Ascending node triples; canonical normal by right-hand rule.
    pub faces: Vec<[usize; 3]>,
    pub face2elem: Vec<(usize, Option<usize>)>,
    pub elems: Vec<ElemTopo>,
    pub edge_lookup: HashMap<[usize; 2], usize>,
    pub node_on_boundary: Vec<bool>,
    pub edge_on_boundary: Vec<bool>,
}

impl CutMeshTopology {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn is_interface(&self, k: usize) -> bool {
        self.cm.class[k] == ElemClass::Interface
    }

    /// Edge length.
    pub fn edge_len(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.nodes[b] - self.nodes[a]).norm()
    }

    /// Unit tangent of edge `e` (low id -> high id).
    pub fn edge_tangent(&self, e: usize) -> Vec3 {
        let [a, b] = self.edges[e];
        (self.nodes[b] - self.nodes[a]).normalize()
    }
}

pub fn build_topology(cm: CutMesh) -> Result<CutMeshTopology> {
    let n_bg = cm.mesh.nodes.len();
    let mut nodes: Vec<Vec3> = cm.mesh.nodes.clone();
    nodes.extend(cm.cut_points.iter().map(|c| c.point));

    let mut edge_lookup: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut face_lookup: HashMap<[usize; 3], usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face2elem: Vec<(usize, Option<usize>)> = Vec::new();
    let mut elems: Vec<ElemTopo> = Vec::with_capacity(cm.mesh.elems.len());

    for (kid, tet) in cm.mesh.elems.iter().enumerate() {
        // Local node list -> global ids, and raw triangles with regions.
        let (gnodes, raw_tris): (Vec<usize>, Vec<([usize; 3], usize)>) =
            match (&cm.cut_elems[kid], cm.class[kid]) {
                (Some(cut), _) => {
                    let mut g: Vec<usize> = tet.to_vec();
                    g.extend(cut.cuts.iter().map(|&c| n_bg + c));
                    let t = cut.tris.iter().map(|t| (t.nodes, t.region)).collect();
                    (g, t)
                }
                (None, _) => {
                    let g: Vec<usize> = tet.to_vec();
                    let centroid: Vec3 =
                        tet.iter().map(|&v| nodes[v]).sum::<Vec3>() / 4.0;
                    let mut t = Vec::with_capacity(4);
                    for opp in 0..4 {
                        let mut tri: Vec<usize> = (0..4).filter(|&v| v != opp).collect();
                        // Outward orientation.
                        let n = tri_area_normal(
                            &nodes[tet[tri[0]]],
                            &nodes[tet[tri[1]]],
                            &nodes[tet[tri[2]]],
                        );
                        let inward = centroid
                            - (nodes[tet[tri[0]]] + nodes[tet[tri[1]]] + nodes[tet[tri[2]]]) / 3.0;
                        if n.dot(&inward) > 0.0 {
                            tri.swap(1, 2);
                        }
                        t.push(([tri[0], tri[1], tri[2]], 0));
                    }
                    (g, t)
                }
            };

        let mut topo = ElemTopo {
            nodes: gnodes.clone(),
            edges: Vec::new(),
            faces: Vec::new(),
            tris: Vec::new(),
        };
        let mut local_edge_of: HashMap<usize, usize> = HashMap::new();

        for (tri_nodes, region) in raw_tris {
            let g3 = [gnodes[tri_nodes[0]], gnodes[tri_nodes[1]], gnodes[tri_nodes[2]]];

            // Global face id on the ascending triple.
            let mut key = g3;
            key.sort_unstable();
            let gface = match face_lookup.get(&key) {
                Some(&id) => {
                    let entry = &mut face2elem[id];
                    if entry.0 != kid {
                        if entry.1.is_some() {
                            return Err(IvemError::Topology(format!(
                                "face {key:?} claimed by three elements"
                            )));
                        }
                        entry.1 = Some(kid);
                    }
                    id
                }
                None => {
                    let id = faces.len();
                    faces.push(key);
                    face_lookup.insert(key, id);
                    face2elem.push((kid, None));
                    id
                }
            };
            let canon = tri_area_normal(&nodes[key[0]], &nodes[key[1]], &nodes[key[2]]);
            let out = tri_area_normal(&nodes[g3[0]], &nodes[g3[1]], &nodes[g3[2]]);
            let fsign = if canon.dot(&out) >= 0.0 { 1.0 } else { -1.0 };

            // Global edge ids and local gather.
            let mut ledges = [0usize; 3];
            let mut esign = [0.0f64; 3];
            for k in 0..3 {
                let (a, b) = (g3[k], g3[(k + 1) % 3]);
                let mut pair = [a, b];
                pair.sort_unstable();
                let geid = *edge_lookup.entry(pair).or_insert_with(|| {
                    edges.push(pair);
                    edges.len() - 1
                });
                let le = *local_edge_of.entry(geid).or_insert_with(|| {
                    topo.edges.push(geid);
                    topo.edges.len() - 1
                });
                ledges[k] = le;
                esign[k] = if a < b { 1.0 } else { -1.0 };
            }

            topo.faces.push(gface);
            topo.tris.push(SurfTri {
                nodes: tri_nodes,
                region,
                gface,
                fsign,
                ledges,
                esign,
            });
        }
        elems.push(topo);
    }

    // Boundary flags by coordinates.
    let domain = cm.mesh.domain;
    let tol = 1e-9 * cm.mesh.h;
    let node_on_boundary: Vec<bool> =
        nodes.iter().map(|x| domain.on_boundary(x, tol)).collect();
    let mut edge_on_boundary = vec![false; edges.len()];
    for (eid, e) in edges.iter().enumerate() {
        let (xa, xb) = (nodes[e[0]], nodes[e[1]]);
        // An edge lies on the boundary iff both endpoints sit on a common
        // box side.
        edge_on_boundary[eid] = (0..3).any(|axis| {
            let lo = domain.lo[axis];
            let hi = domain.hi[axis];
            ((xa[axis] - lo).abs() <= tol && (xb[axis] - lo).abs() <= tol)
                || ((xa[axis] - hi).abs() <= tol && (xb[axis] - hi).abs() <= tol)
        });
    }

    Ok(CutMeshTopology {
        cm,
        nodes,
        edges,
        faces,
        face2elem,
        elems,
        edge_lookup,
        node_on_boundary,
        edge_on_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Box3;
    use crate::mesh::{build_background_mesh, classify_and_cut, plane_x, sphere, SNAP_TOL};

    fn topo(n: usize, dom: Box3, ls: &crate::mesh::LevelSet) -> CutMeshTopology {
        let mesh = build_background_mesh(n, dom).unwrap();
        let cm = classify_and_cut(mesh, ls, SNAP_TOL).unwrap();
        build_topology(cm).unwrap()
    }

    #[test]
    fn uncut_counts_match_background() {
        // A plane far outside the box leaves every element uncut.
        let t = topo(2, Box3::cube(0.0, 1.0), &plane_x(5.0));
        assert_eq!(t.n_nodes(), 27);
        assert_eq!(t.n_elems(), 48);
        assert_eq!(t.n_faces(), 120);
        assert_eq!(t.edges.len(), t.cm.mesh.edges.len());
    }

    #[test]
    fn euler_formula_cut_mesh() {
        for ls in [plane_x(0.3), plane_x(0.05)] {
            let t = topo(2, Box3::cube(-1.0, 1.0), &ls);
            let chi = t.n_nodes() as i64 - t.n_edges() as i64 + t.n_faces() as i64
                - t.n_elems() as i64;
            assert_eq!(chi, 1);
        }
        let t = topo(6, Box3::cube(-1.0, 1.0), &sphere(std::f64::consts::PI / 5.0));
        let chi =
            t.n_nodes() as i64 - t.n_edges() as i64 + t.n_faces() as i64 - t.n_elems() as i64;
        assert_eq!(chi, 1);
    }

    #[test]
    fn interior_faces_have_two_mothers() {
        let t = topo(4, Box3::cube(-1.0, 1.0), &sphere(std::f64::consts::PI / 5.0));
        let tol = 1e-9 * t.cm.mesh.h;
        for (f, mothers) in t.faces.iter().zip(&t.face2elem) {
            let on_bnd = (0..3).any(|axis| {
                let lo = t.cm.mesh.domain.lo[axis];
                let hi = t.cm.mesh.domain.hi[axis];
                f.iter().all(|&v| (t.nodes[v][axis] - lo).abs() <= tol)
                    || f.iter().all(|&v| (t.nodes[v][axis] - hi).abs() <= tol)
            });
            if on_bnd {
                assert!(mothers.1.is_none(), "boundary face with two mothers");
            } else {
                assert!(mothers.1.is_some(), "interior face with one mother: {f:?}");
            }
        }
    }

    #[test]
    fn surface_closure_per_element() {
        let t = topo(3, Box3::cube(-1.0, 1.0), &sphere(std::f64::consts::PI / 5.0));
        for topo_k in &t.elems {
            let mut sum = Vec3::zeros();
            for tri in &topo_k.tris {
                let c: Vec<Vec3> =
                    tri.nodes.iter().map(|&l| t.nodes[topo_k.nodes[l]]).collect();
                sum += tri_area_normal(&c[0], &c[1], &c[2]);
            }
            assert!(sum.norm() < 1e-12, "element surface not closed: {}", sum.norm());
        }
    }
}
