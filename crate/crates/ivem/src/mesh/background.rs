//! Uniform background tetrahedral mesh: each cube of an `n^3` grid is split
//! into six tetrahedra sharing the main diagonal (Kuhn subdivision), which is
//! face-to-face consistent across neighbouring cubes.

use std::collections::HashMap;

use crate::geo::{tet_volume, Box3, Vec3};
use crate::{IvemError, Result};

/// A conforming tetrahedral mesh with full edge/face connectivity.
#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub domain: Box3,
    /// Subdivisions per axis.
    pub n: usize,
    /// Mesh size: edge length of a grid cube (per axis; cubes are uniform).
    pub h: f64,
    pub nodes: Vec<Vec3>,
    /// Tetrahedra as 4 node ids, positively oriented.
    pub elems: Vec<[usize; 4]>,
    /// Unique edges as sorted node pairs `(a < b)`; the global tangent of an
    /// edge always points from the lower to the higher node id.
    pub edges: Vec<[usize; 2]>,
    /// Unique faces as ascending node triples.
    pub faces: Vec<[usize; 3]>,
    pub elem2edge: Vec<[usize; 6]>,
    pub elem2face: Vec<[usize; 4]>,
    /// Mother element(s) of each face.
    pub face2elem: Vec<(usize, Option<usize>)>,
    /// Lookup from sorted node pair to edge id.
    pub edge_lookup: HashMap<[usize; 2], usize>,
}

/// The six permutations of (0,1,2); each defines one Kuhn tetrahedron as the
/// monotone lattice path 000 -> 111 inserting axes in permutation order.
const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

pub fn build_background_mesh(n: usize, domain: Box3) -> Result<BackgroundMesh> {
    if n == 0 {
        return Err(IvemError::InvalidInput("mesh subdivision n must be >= 1".into()));
    }
    let ext = domain.extent();
    if ext.x <= 0.0 || ext.y <= 0.0 || ext.z <= 0.0 {
        return Err(IvemError::InvalidInput("domain box must have positive extent".into()));
    }
    let np = n + 1;
    let node_id = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let mut nodes = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                nodes.push(Vec3::new(
                    domain.lo.x + ext.x * i as f64 / n as f64,
                    domain.lo.y + ext.y * j as f64 / n as f64,
                    domain.lo.z + ext.z * k as f64 / n as f64,
                ));
            }
        }
    }

    let mut elems = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut corner = [i, j, k];
                    let mut tet = [node_id(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = node_id(corner[0], corner[1], corner[2]);
                    }
                    // Fix orientation: positive signed volume.
                    if tet_volume(
                        &nodes[tet[0]],
                        &nodes[tet[1]],
                        &nodes[tet[2]],
                        &nodes[tet[3]],
                    ) < 0.0
                    {
                        tet.swap(2, 3);
                    }
                    elems.push(tet);
                }
            }
        }
    }

    // Edge and face connectivity by first-occurrence enumeration.
    let mut edge_lookup: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut face_lookup: HashMap<[usize; 3], usize> = HashMap::new();
    let mut faces = Vec::new();
    let mut face2elem: Vec<(usize, Option<usize>)> = Vec::new();
    let mut elem2edge = Vec::with_capacity(elems.len());
    let mut elem2face = Vec::with_capacity(elems.len());

    const EDGE_LOCAL: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    for (eid, tet) in elems.iter().enumerate() {
        let mut e6 = [0usize; 6];
        for (s, le) in EDGE_LOCAL.iter().enumerate() {
            let mut pair = [tet[le[0]], tet[le[1]]];
            pair.sort_unstable();
            let id = *edge_lookup.entry(pair).or_insert_with(|| {
                edges.push(pair);
                edges.len() - 1
            });
            e6[s] = id;
        }
        elem2edge.push(e6);

        let mut f4 = [0usize; 4];
        for opp in 0..4 {
            let mut tri: Vec<usize> = (0..4).filter(|&v| v != opp).map(|v| tet[v]).collect();
            tri.sort_unstable();
            let key = [tri[0], tri[1], tri[2]];
            match face_lookup.get(&key) {
                Some(&id) => {
                    f4[opp] = id;
                    let entry = &mut face2elem[id];
                    debug_assert!(entry.1.is_none());
                    entry.1 = Some(eid);
                }
                None => {
                    let id = faces.len();
                    faces.push(key);
                    face_lookup.insert(key, id);
                    face2elem.push((eid, None));
                    f4[opp] = id;
                }
            }
        }
        elem2face.push(f4);
    }

    Ok(BackgroundMesh {
        domain,
        n,
        h: ext.x / n as f64,
        nodes,
        elems,
        edges,
        faces,
        elem2edge,
        elem2face,
        face2elem,
        edge_lookup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_counts() {
        let m = build_background_mesh(1, Box3::cube(0.0, 1.0)).unwrap();
        assert_eq!(m.elems.len(), 6);
        assert_eq!(m.nodes.len(), 8);
        assert_eq!(m.edges.len(), 19);
        assert_eq!(m.faces.len(), 18);
    }

    #[test]
    fn n2_counts_and_euler() {
        let m = build_background_mesh(2, Box3::cube(-1.0, 1.0)).unwrap();
        assert_eq!(m.elems.len(), 48);
        assert_eq!(m.nodes.len(), 27);
        // Euler characteristic of a ball triangulation: V - E + F - T = 1.
        let euler = m.nodes.len() as i64 - m.edges.len() as i64 + m.faces.len() as i64
            - m.elems.len() as i64;
        assert_eq!(euler, 1);
    }

    #[test]
    fn volumes_positive_and_sum_to_box() {
        let m = build_background_mesh(3, Box3::cube(0.0, 2.0)).unwrap();
        let mut total = 0.0;
        for t in &m.elems {
            let v = tet_volume(&m.nodes[t[0]], &m.nodes[t[1]], &m.nodes[t[2]], &m.nodes[t[3]]);
            assert!(v > 0.0);
            total += v;
        }
        assert!((total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn faces_conform() {
        let m = build_background_mesh(2, Box3::cube(0.0, 1.0)).unwrap();
        // Every face has 1 or 2 mothers; interior faces exactly 2.
        let mut boundary = 0;
        for (f, mothers) in m.faces.iter().zip(&m.face2elem) {
            let on_bnd = {
                // All three nodes share a box coordinate at an extreme.
                (0..3).any(|axis| {
                    let lo = m.domain.lo[axis];
                    let hi = m.domain.hi[axis];
                    f.iter().all(|&v| (m.nodes[v][axis] - lo).abs() < 1e-12)
                        || f.iter().all(|&v| (m.nodes[v][axis] - hi).abs() < 1e-12)
                })
            };
            if on_bnd {
                assert!(mothers.1.is_none());
                boundary += 1;
            } else {
                assert!(mothers.1.is_some());
            }
        }
        assert_eq!(boundary, 6 * 2 * 4); // 6 sides, n^2=4 squares, 2 triangles
    }
}
