//! Level-set classification of the background mesh and geometric cutting of
//! interface elements.
//!
//! Interface elements carry a boundary triangulation whose vertices are only
//! element vertices and edge cut points, a fitted (least-squares) interface
//! plane, and exact region volumes/centroids obtained from the divergence
//! theorem over closed region surfaces.

use std::collections::HashMap;

use crate::geo::{tet_volume, tri_area_normal, Vec3};
use crate::mesh::{BackgroundMesh, LevelSet};
use crate::quadrature::{map_triangle, triangle_rule_deg2};
use crate::{IvemError, Result};

/// Classification of a background element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemClass {
    Minus,
    Plus,
    Interface,
}

/// Sign of a region of a cut element (`Plus`: level set positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSign {
    Plus,
    Minus,
}

impl RegionSign {
    pub fn from_sign(s: i8) -> Self {
        if s > 0 { RegionSign::Plus } else { RegionSign::Minus }
    }
    /// Index used to pick a coefficient value: 0 = minus, 1 = plus.
    pub fn coeff_index(self) -> usize {
        match self {
            RegionSign::Minus => 0,
            RegionSign::Plus => 1,
        }
    }
}

/// A point where the interface crosses a background edge. `t` parametrizes
/// the edge from its lower to its higher global node id.
#[derive(Debug, Clone)]
pub struct CutPoint {
    pub edge: usize,
    pub t: f64,
    pub point: Vec3,
}

/// A triangle of the boundary triangulation of a cut element, in local node
/// indices (0..4 are the tet vertices, 4.. the element's cut points), ordered
/// so the right-hand normal points out of the element.
#[derive(Debug, Clone)]
pub struct CutTri {
    pub nodes: [usize; 3],
    /// Region index the triangle's surface patch belongs to.
    pub region: usize,
}

/// Geometric data of one interface element.
#[derive(Debug, Clone)]
pub struct CutElement {
    pub elem: usize,
    /// Global cut-point ids, defining local node ids 4, 5, ...
    pub cuts: Vec<usize>,
    /// Region signs; region 0 is always the Plus region (the chain seed side).
    pub regions: Vec<RegionSign>,
    /// Local node coordinates: tet vertices then cut points.
    pub coords: Vec<Vec3>,
    /// Boundary triangulation of `∂K`.
    pub tris: Vec<CutTri>,
    /// Unit normals of the fitted interface planes, pointing from region m to
    /// region m+1 (i.e. from Plus to Minus for a single cut).
    pub normals: Vec<Vec3>,
    /// Plane anchor points (projected cut-point centroids).
    pub anchors: Vec<Vec3>,
    /// Discrete interface triangulations, one fan per plane, oriented along
    /// the plane normal. Coordinates are explicit because the fan anchor is
    /// not a topological node.
    pub gamma_tris: Vec<Vec<[Vec3; 3]>>,
    pub region_volumes: Vec<f64>,
    pub region_centroids: Vec<Vec3>,
    /// Element diameter.
    pub h_k: f64,
}

/// Classification and cut data for a whole mesh.
#[derive(Debug)]
pub struct CutMesh {
    pub mesh: BackgroundMesh,
    pub class: Vec<ElemClass>,
    /// Per-element cut geometry for interface elements.
    pub cut_elems: Vec<Option<CutElement>>,
    /// One cut point per cut background edge, shared by all mother elements.
    pub cut_points: Vec<CutPoint>,
    pub cut_of_edge: HashMap<usize, usize>,
    /// Snapped vertex signs (+1 / -1).
    pub vertex_sign: Vec<i8>,
}

const EDGE_LOCAL: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Relative (to `h`) tolerance below which a vertex level-set value is
/// treated as a signed infinitesimal rather than zero.
pub const SNAP_TOL: f64 = 1e-8;

pub fn classify_and_cut(mesh: BackgroundMesh, ls: &LevelSet, snap_tol: f64) -> Result<CutMesh> {
    let h = mesh.h;
    let tol = snap_tol * h;

    // Snapped vertex signs.
    let mut vertex_sign = Vec::with_capacity(mesh.nodes.len());
    let mut vertex_phi = Vec::with_capacity(mesh.nodes.len());
    for x in &mesh.nodes {
        let phi = ls.eval(x);
        let sign = if phi != 0.0 {
            phi.signum() as i8
        } else {
            // Exact zero: recover a sign from a nearby non-degenerate value.
            let probe = ls.eval(&(x + Vec3::new(1.0, 1.0, 1.0) * (1e-6 * h)));
            if probe == 0.0 {
                return Err(IvemError::DegenerateGeometry(format!(
                    "level set vanishes identically near vertex {x:?}"
                )));
            }
            probe.signum() as i8
        };
        // Values inside the snap band keep their sign but are treated as
        // bounded away from zero for classification purposes.
        vertex_phi.push(if phi.abs() < tol { sign as f64 * tol } else { phi });
        vertex_sign.push(sign);
    }

    // Cut points on sign-changing edges (one bisection per global edge).
    let mut cut_points: Vec<CutPoint> = Vec::new();
    let mut cut_of_edge: HashMap<usize, usize> = HashMap::new();
    for (eid, e) in mesh.edges.iter().enumerate() {
        let (a, b) = (e[0], e[1]);
        if vertex_sign[a] == vertex_sign[b] {
            continue;
        }
        let xa = mesh.nodes[a];
        let xb = mesh.nodes[b];
        let sa = vertex_sign[a] as f64;
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        // Bisection to a relative parameter tolerance of 1e-12.
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let fm = ls.eval(&(xa + (xb - xa) * mid));
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == sa.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        cut_of_edge.insert(eid, cut_points.len());
        cut_points.push(CutPoint { edge: eid, t, point: xa + (xb - xa) * t });
    }

    // Classify elements and build cut geometry.
    let mut class = Vec::with_capacity(mesh.elems.len());
    let mut cut_elems: Vec<Option<CutElement>> = Vec::with_capacity(mesh.elems.len());
    for (kid, tet) in mesh.elems.iter().enumerate() {
        let signs = [
            vertex_sign[tet[0]],
            vertex_sign[tet[1]],
            vertex_sign[tet[2]],
            vertex_sign[tet[3]],
        ];
        if signs.iter().all(|&s| s > 0) {
            class.push(ElemClass::Plus);
            cut_elems.push(None);
            continue;
        }
        if signs.iter().all(|&s| s < 0) {
            class.push(ElemClass::Minus);
            cut_elems.push(None);
            continue;
        }
        class.push(ElemClass::Interface);
        let cut = build_cut_element(&mesh, ls, kid, tet, &signs, &cut_points, &cut_of_edge)?;
        cut_elems.push(Some(cut));
    }

    Ok(CutMesh { mesh, class, cut_elems, cut_points, cut_of_edge, vertex_sign })
}

#[allow(clippy::too_many_arguments)]
fn build_cut_element(
    mesh: &BackgroundMesh,
    ls: &LevelSet,
    kid: usize,
    tet: &[usize; 4],
    signs: &[i8; 4],
    cut_points: &[CutPoint],
    cut_of_edge: &HashMap<usize, usize>,
) -> Result<CutElement> {
    // Element-local cut list: (local vertex pair, global cut id).
    let mut cuts: Vec<usize> = Vec::new();
    let mut cut_pairs: Vec<[usize; 2]> = Vec::new();
    for (s, le) in EDGE_LOCAL.iter().enumerate() {
        if signs[le[0]] != signs[le[1]] {
            let geid = mesh.elem2edge[kid][s];
            let cid = *cut_of_edge.get(&geid).ok_or_else(|| {
                IvemError::Topology(format!("missing cut point on edge {geid} of element {kid}"))
            })?;
            cuts.push(cid);
            cut_pairs.push(*le);
        }
    }
    if cuts.len() != 3 && cuts.len() != 4 {
        return Err(IvemError::DegenerateGeometry(format!(
            "element {kid} has {} cut edges; only single planar cuts (3 or 4) are supported",
            cuts.len()
        )));
    }

    let mut coords: Vec<Vec3> = tet.iter().map(|&v| mesh.nodes[v]).collect();
    for &cid in &cuts {
        coords.push(cut_points[cid].point);
    }
    // Provisional global node id used for deterministic tie-breaking: cut
    // points are numbered after all background nodes.
    let gid = |local: usize| -> usize {
        if local < 4 { tet[local] } else { mesh.nodes.len() + cuts[local - 4] }
    };
    let h_k = element_diameter(&coords[0..4]);

    // Boundary triangulation face by face.
    let mut tris: Vec<CutTri> = Vec::new();
    for opp in 0..4 {
        let face: Vec<usize> = (0..4).filter(|&v| v != opp).collect();
        // Cut points on this face: both edge endpoints belong to the face.
        let on_face: Vec<usize> = (0..cuts.len())
            .filter(|&c| cut_pairs[c].iter().all(|p| face.contains(p)))
            .collect();
        let region_of = |v: usize| if signs[v] > 0 { 0 } else { 1 };
        match on_face.len() {
            0 => {
                tris.push(CutTri { nodes: [face[0], face[1], face[2]], region: region_of(face[0]) });
            }
            2 => {
                // Apex: the face vertex shared by both cut edges.
                let (c0, c1) = (on_face[0], on_face[1]);
                let shared: Vec<usize> = face
                    .iter()
                    .copied()
                    .filter(|v| cut_pairs[c0].contains(v) && cut_pairs[c1].contains(v))
                    .collect();
                if shared.len() != 1 {
                    return Err(IvemError::Topology(format!(
                        "face of element {kid} has an inconsistent cut pattern"
                    )));
                }
                let apex = shared[0];
                let others: Vec<usize> = face.iter().copied().filter(|&v| v != apex).collect();
                let (b, c) = (others[0], others[1]);
                // P on edge (apex, b), Q on edge (apex, c).
                let p = 4 + if cut_pairs[c0].contains(&b) { c0 } else { c1 };
                let q = 4 + if cut_pairs[c0].contains(&c) { c0 } else { c1 };
                tris.push(CutTri { nodes: [apex, p, q], region: region_of(apex) });
                // Quad (P, b, c, Q), split along its shorter diagonal; ties
                // resolved toward the diagonal holding the lowest global id.
                let d_pc = (coords[p] - coords[c]).norm();
                let d_qb = (coords[q] - coords[b]).norm();
                let tie = (d_pc - d_qb).abs() <= 1e-12 * h_k;
                let use_pc = if tie {
                    gid(p).min(gid(c)) < gid(q).min(gid(b))
                } else {
                    d_pc < d_qb
                };
                if use_pc {
                    tris.push(CutTri { nodes: [p, b, c], region: region_of(b) });
                    tris.push(CutTri { nodes: [p, c, q], region: region_of(b) });
                } else {
                    tris.push(CutTri { nodes: [p, b, q], region: region_of(b) });
                    tris.push(CutTri { nodes: [b, c, q], region: region_of(b) });
                }
            }
            k => {
                return Err(IvemError::DegenerateGeometry(format!(
                    "face of element {kid} carries {k} cut points"
                )));
            }
        }
    }
    // Enforce outward orientation against the face's opposite vertex.
    let centroid: Vec3 = (coords[0] + coords[1] + coords[2] + coords[3]) / 4.0;
    for tri in &mut tris {
        let [a, b, c] = tri.nodes;
        let n = tri_area_normal(&coords[a], &coords[b], &coords[c]);
        let to_inside = centroid - (coords[a] + coords[b] + coords[c]) / 3.0;
        if n.dot(&to_inside) > 0.0 {
            tri.nodes.swap(1, 2);
        }
    }

    // Fitted interface plane and its fan triangulation.
    let pts: Vec<Vec3> = cuts.iter().map(|&c| cut_points[c].point).collect();
    let (normal, anchor) = fit_interface_plane(&pts, ls)?;
    let ordered = order_polygon(&pts, &normal, &anchor);
    let mut gamma: Vec<[Vec3; 3]> = Vec::new();
    for i in 0..ordered.len() {
        let p0 = pts[ordered[i]];
        let p1 = pts[ordered[(i + 1) % ordered.len()]];
        // Orient each fan triangle along the plane normal.
        let n = tri_area_normal(&anchor, &p0, &p1);
        if n.norm() <= 1e-16 * h_k * h_k {
            continue; // anchor collinear with an edge of the polygon
        }
        if n.dot(&normal) >= 0.0 {
            gamma.push([anchor, p0, p1]);
        } else {
            gamma.push([anchor, p1, p0]);
        }
    }
    if gamma.is_empty() {
        return Err(IvemError::DegenerateGeometry(format!(
            "element {kid}: interface polygon degenerated to zero area"
        )));
    }

    // Region volumes and centroids from the divergence theorem.
    let regions = vec![RegionSign::Plus, RegionSign::Minus];
    let mut region_volumes = Vec::with_capacity(2);
    let mut region_centroids = Vec::with_capacity(2);
    let tet_vol = tet_volume(&coords[0], &coords[1], &coords[2], &coords[3]);
    for region in 0..2 {
        let mut surf: Vec<[Vec3; 3]> = tris
            .iter()
            .filter(|t| t.region == region)
            .map(|t| [coords[t.nodes[0]], coords[t.nodes[1]], coords[t.nodes[2]]])
            .collect();
        for g in &gamma {
            // Normal points Plus -> Minus: outward for region 0, inward for 1.
            if region == 0 {
                surf.push(*g);
            } else {
                surf.push([g[0], g[2], g[1]]);
            }
        }
        // Closure: the area-weighted normals of a closed surface sum to zero.
        let defect: Vec3 = surf.iter().map(|t| tri_area_normal(&t[0], &t[1], &t[2])).sum();
        if defect.norm() > 1e-10 * h_k * h_k {
            return Err(IvemError::Topology(format!(
                "element {kid}: region {region} surface is not closed (defect {:.3e})",
                defect.norm()
            )));
        }
        let (vol, cen) = volume_and_centroid(&surf);
        region_volumes.push(vol);
        region_centroids.push(cen);
    }
    let total: f64 = region_volumes.iter().sum();
    if (total - tet_vol).abs() > 1e-12 * tet_vol.abs().max(h_k * h_k * h_k) {
        return Err(IvemError::Topology(format!(
            "element {kid}: region volumes sum to {total}, expected {tet_vol}"
        )));
    }

    Ok(CutElement {
        elem: kid,
        cuts,
        regions,
        coords,
        tris,
        normals: vec![normal],
        anchors: vec![anchor],
        gamma_tris: vec![gamma],
        region_volumes,
        region_centroids,
        h_k,
    })
}

fn element_diameter(verts: &[Vec3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..verts.len() {
        for j in (i + 1)..verts.len() {
            d = d.max((verts[i] - verts[j]).norm());
        }
    }
    d
}

/// Fit the interface plane through the cut points: exact for three points,
/// least squares for four. The normal is oriented from the Plus to the Minus
/// side (against the level-set gradient); the anchor is the projection of the
/// cut-point centroid onto the plane (the centroid itself for an LS fit).
pub fn fit_interface_plane(pts: &[Vec3], ls: &LevelSet) -> Result<(Vec3, Vec3)> {
    let centroid: Vec3 = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut normal = if pts.len() == 3 {
        let n = (pts[1] - pts[0]).cross(&(pts[2] - pts[0]));
        if n.norm() < 1e-14 * (pts[1] - pts[0]).norm().powi(2).max(1e-300) {
            return Err(IvemError::DegenerateGeometry("collinear interface points".into()));
        }
        n.normalize()
    } else {
        // Smallest principal direction of the centered point cloud.
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        for p in pts {
            let d = p - centroid;
            m += d * d.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(m);
        let mut idx = 0;
        for i in 1..3 {
            if eig.eigenvalues[i] < eig.eigenvalues[idx] {
                idx = i;
            }
        }
        let n = eig.eigenvectors.column(idx).into_owned();
        if eig.eigenvalues.iter().filter(|&&v| v > 1e-24).count() < 2 {
            return Err(IvemError::DegenerateGeometry("degenerate interface point cloud".into()));
        }
        n.normalize()
    };
    let g = ls.grad(&centroid);
    if normal.dot(&g) > 0.0 {
        normal = -normal;
    }
    Ok((normal, centroid))
}

/// Order polygon vertices counterclockwise around `normal`.
fn order_polygon(pts: &[Vec3], normal: &Vec3, anchor: &Vec3) -> Vec<usize> {
    if pts.len() <= 3 {
        return (0..pts.len()).collect();
    }
    // In-plane frame.
    let axis = least_aligned_axis(normal);
    let t1 = (axis - axis.dot(normal) * normal).normalize();
    let t2 = normal.cross(&t1);
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let angle = |p: &Vec3| {
        let d = p - anchor;
        d.dot(&t2).atan2(d.dot(&t1))
    };
    idx.sort_by(|&a, &b| angle(&pts[a]).partial_cmp(&angle(&pts[b])).unwrap());
    idx
}

/// The coordinate axis least aligned with `n`.
pub fn least_aligned_axis(n: &Vec3) -> Vec3 {
    let a = [n.x.abs(), n.y.abs(), n.z.abs()];
    let mut idx = 0;
    for i in 1..3 {
        if a[i] < a[idx] {
            idx = i;
        }
    }
    let mut e = Vec3::zeros();
    e[idx] = 1.0;
    e
}

/// Volume and centroid of the solid bounded by a closed, outward-oriented
/// triangle surface, via the divergence theorem. The centroid integrals use a
/// degree-2 surface rule, exact for the quadratic integrand `x_i (x·n)`.
pub(crate) fn volume_and_centroid(surf: &[[Vec3; 3]]) -> (f64, Vec3) {
    let rule = triangle_rule_deg2();
    let mut vol = 0.0;
    let mut moment = Vec3::zeros();
    for t in surf {
        let an = tri_area_normal(&t[0], &t[1], &t[2]);
        let area = an.norm();
        if area == 0.0 {
            continue;
        }
        let nh = an / area;
        let c = (t[0] + t[1] + t[2]) / 3.0;
        vol += c.dot(&nh) * area / 3.0;
        let (pts, wts) = map_triangle(&rule, &t[0], &t[1], &t[2]);
        for (p, w) in pts.iter().zip(&wts) {
            moment += p * (p.dot(&nh)) * *w / 4.0;
        }
    }
    (vol, moment / vol)
}
