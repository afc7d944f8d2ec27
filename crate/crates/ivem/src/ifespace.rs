//! Immersed finite element (IFE) spaces on cut elements.
//!
//! The spaces are built from piecewise constants chained across interface
//! planes by jump matrices, plus the three low-order function families:
//! nodal (`b·(x-x_K) + c`), edge (`a×(x-x_K) + b`), and face
//! (`c (x-x_K) + a`). Multi-region chains are supported; the automatic cutter
//! produces two regions, longer chains arise in synthetic configurations.

use nalgebra::Matrix3;

use crate::geo::Vec3;
use crate::mesh::least_aligned_axis;

/// Piecewise-constant material coefficients `(alpha, beta)` on the two sides
/// of the interface.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
}

impl Coefficients {
    pub fn h1(beta_minus: f64, beta_plus: f64) -> Self {
        Self { alpha_minus: 1.0, alpha_plus: 1.0, beta_minus, beta_plus }
    }

    pub fn alpha(&self, s: crate::mesh::RegionSign) -> f64 {
        match s {
            crate::mesh::RegionSign::Minus => self.alpha_minus,
            crate::mesh::RegionSign::Plus => self.alpha_plus,
        }
    }

    pub fn beta(&self, s: crate::mesh::RegionSign) -> f64 {
        match s {
            crate::mesh::RegionSign::Minus => self.beta_minus,
            crate::mesh::RegionSign::Plus => self.beta_plus,
        }
    }
}

/// Which jump matrix family: `Edge` preserves tangential components and
/// scales the normal one; `Face` preserves the normal component and scales
/// the tangential ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Edge,
    Face,
}

/// Orthonormal tangent frame `(t1, t2)` of the plane with unit normal `n`:
/// `t1` is the normalized in-plane projection of the coordinate axis least
/// aligned with `n`, and `t2 = n × t1`.
pub fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let e = least_aligned_axis(n);
    let t1 = (e - e.dot(n) * n).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Jump matrix mapping the constant on the `from` side to the `to` side of a
/// plane with unit normal `n`, for coefficient values `c_from`, `c_to`:
/// `M = T diag(d) T^T` with `T = [n t1 t2]` and `d = (c̃,1,1)` (edge kind) or
/// `(1,c̃,c̃)` (face kind), `c̃ = c_from / c_to`.
pub fn jump_matrix(kind: JumpKind, n: &Vec3, c_from: f64, c_to: f64) -> Matrix3<f64> {
    let ratio = c_from / c_to;
    let (t1, t2) = tangent_frame(n);
    let t = Matrix3::from_columns(&[*n, t1, t2]);
    let d = match kind {
        JumpKind::Edge => Matrix3::from_diagonal(&Vec3::new(ratio, 1.0, 1.0)),
        JumpKind::Face => Matrix3::from_diagonal(&Vec3::new(1.0, ratio, ratio)),
    };
    t * d * t.transpose()
}

/// A chain of jump matrices along the ordered interface planes of a cut
/// element; `mats[p]` maps the region-`p` constant to region `p+1`, and
/// `prods[r]` maps the seed (region 0) constant to region `r`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub kind: JumpKind,
    pub mats: Vec<Matrix3<f64>>,
    pub prods: Vec<Matrix3<f64>>,
}

impl Chain {
    /// `weights[r]` is the coefficient value in region `r`; `normals[p]` the
    /// unit normal of plane `p` (pointing from region `p` to `p+1`).
    pub fn new(kind: JumpKind, normals: &[Vec3], weights: &[f64]) -> Self {
        assert_eq!(normals.len() + 1, weights.len());
        let mats: Vec<Matrix3<f64>> = normals
            .iter()
            .zip(weights.windows(2))
            .map(|(n, w)| jump_matrix(kind, n, w[0], w[1]))
            .collect();
        let mut prods = Vec::with_capacity(weights.len());
        prods.push(Matrix3::identity());
        for m in &mats {
            let last = *prods.last().unwrap();
            prods.push(m * last);
        }
        Self { kind, mats, prods }
    }

    pub fn n_regions(&self) -> usize {
        self.prods.len()
    }

    /// Extend a seed constant from region 0 through the chain.
    pub fn extend(&self, seed: &Vec3) -> Vec<Vec3> {
        self.prods.iter().map(|p| p * seed).collect()
    }
}

/// Anchor point used by region `r`: regions 0 and 1 share the first plane's
/// anchor; region `r >= 2` uses the anchor of plane `r - 1`.
pub fn region_anchor(anchors: &[Vec3], r: usize) -> Vec3 {
    anchors[r.saturating_sub(1).min(anchors.len() - 1)]
}

/// Nodal (H1) IFE function `v|_r = b_r · (x - x_{K,r}) + c + o_r`.
#[derive(Debug, Clone)]
pub struct NodalIfe {
    pub b: Vec<Vec3>,
    pub c: f64,
    pub anchors: Vec<Vec3>,
    pub offsets: Vec<f64>,
}

impl NodalIfe {
    pub fn new(b: Vec<Vec3>, c: f64, anchors: Vec<Vec3>) -> Self {
        // o_{r+1} = o_r + b_r · (x_{K,r} - x_{K,r-1}) for r >= 1; o_0 = o_1 = 0.
        let mut offsets = vec![0.0; b.len()];
        for r in 1..b.len().saturating_sub(1) {
            offsets[r + 1] = offsets[r] + b[r].dot(&(anchors[r] - anchors[r - 1]));
        }
        Self { b, c, anchors, offsets }
    }

    pub fn n_regions(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &Vec3, r: usize) -> f64 {
        self.b[r].dot(&(x - region_anchor(&self.anchors, r))) + self.c + self.offsets[r]
    }

    pub fn grad(&self, r: usize) -> Vec3 {
        self.b[r]
    }
}

/// Edge (H(curl)) IFE function `v|_r = a_r × (x - x_{K,r}) + b_r + ξ_r`.
#[derive(Debug, Clone)]
pub struct EdgeIfe {
    pub a: Vec<Vec3>,
    pub b: Vec<Vec3>,
    pub anchors: Vec<Vec3>,
    pub offsets: Vec<Vec3>,
}

impl EdgeIfe {
    /// `b_chain` must be the edge-kind chain of the `b` component (its
    /// matrices propagate the multi-region offsets).
    pub fn new(a: Vec<Vec3>, b: Vec<Vec3>, b_chain: &Chain, anchors: Vec<Vec3>) -> Self {
        // ξ_{r+1} = M^e_r (ξ_r + a_r × (x_{K,r} - x_{K,r-1})), r >= 1.
        let mut offsets = vec![Vec3::zeros(); a.len()];
        for r in 1..a.len().saturating_sub(1) {
            offsets[r + 1] =
                b_chain.mats[r] * (offsets[r] + a[r].cross(&(anchors[r] - anchors[r - 1])));
        }
        Self { a, b, anchors, offsets }
    }

    pub fn eval(&self, x: &Vec3, r: usize) -> Vec3 {
        self.a[r].cross(&(x - region_anchor(&self.anchors, r))) + self.b[r] + self.offsets[r]
    }

    pub fn curl(&self, r: usize) -> Vec3 {
        2.0 * self.a[r]
    }
}

/// Face (H(div)) IFE function `v|_r = c (x - x_{K,r}) + a_r + η_r`.
#[derive(Debug, Clone)]
pub struct FaceIfe {
    pub c: f64,
    pub a: Vec<Vec3>,
    pub anchors: Vec<Vec3>,
    pub offsets: Vec<Vec3>,
}

impl FaceIfe {
    /// `a_chain` must be the face-kind chain of the `a` component.
    pub fn new(c: f64, a: Vec<Vec3>, a_chain: &Chain, anchors: Vec<Vec3>) -> Self {
        // η_{r+1} = M^f_r (η_r + c (x_{K,r} - x_{K,r-1})), r >= 1.
        let mut offsets = vec![Vec3::zeros(); a.len()];
        for r in 1..a.len().saturating_sub(1) {
            offsets[r + 1] = a_chain.mats[r] * (offsets[r] + c * (anchors[r] - anchors[r - 1]));
        }
        Self { c, a, anchors, offsets }
    }

    pub fn eval(&self, x: &Vec3, r: usize) -> Vec3 {
        self.c * (x - region_anchor(&self.anchors, r)) + self.a[r] + self.offsets[r]
    }

    pub fn div(&self) -> f64 {
        3.0 * self.c
    }
}

/// Numeric verification of the local exact sequence on a cut-element
/// configuration: dimension counts 4 / 6 / 4 via SVD ranks of point
/// evaluations, gradient and curl ranges of dimension 3, and the Hodge-star
/// pairing between `P^e(c)` and `P^f(1/c)`.
pub struct LocalComplexReport {
    pub dim_nodal: usize,
    pub dim_edge: usize,
    pub dim_face: usize,
    pub rank_grad: usize,
    pub rank_curl: usize,
    pub hodge_residual: f64,
}

pub fn local_complex_check(
    normals: &[Vec3],
    anchors: &[Vec3],
    alpha: &[f64],
    beta: &[f64],
    samples: &[(Vec3, usize)],
) -> LocalComplexReport {
    let chain_e_beta = Chain::new(JumpKind::Edge, normals, beta);
    let chain_f_alpha = Chain::new(JumpKind::Face, normals, alpha);
    let n_regions = beta.len();

    // Nodal basis: 3 gradient seeds + the constant.
    let mut nodal: Vec<NodalIfe> = (0..3)
        .map(|l| {
            let mut e = Vec3::zeros();
            e[l] = 1.0;
            NodalIfe::new(chain_e_beta.extend(&e), 0.0, anchors.to_vec())
        })
        .collect();
    nodal.push(NodalIfe::new(vec![Vec3::zeros(); n_regions], 1.0, anchors.to_vec()));

    // Edge basis: 3 rotation seeds + 3 constant seeds.
    let mut edge: Vec<EdgeIfe> = Vec::new();
    for l in 0..3 {
        let mut e = Vec3::zeros();
        e[l] = 1.0;
        edge.push(EdgeIfe::new(
            chain_f_alpha.extend(&e),
            vec![Vec3::zeros(); n_regions],
            &chain_e_beta,
            anchors.to_vec(),
        ));
    }
    for l in 0..3 {
        let mut e = Vec3::zeros();
        e[l] = 1.0;
        edge.push(EdgeIfe::new(
            vec![Vec3::zeros(); n_regions],
            chain_e_beta.extend(&e),
            &chain_e_beta,
            anchors.to_vec(),
        ));
    }

    // Face basis: 3 constant seeds + the divergence mode.
    let mut face: Vec<FaceIfe> = (0..3)
        .map(|l| {
            let mut e = Vec3::zeros();
            e[l] = 1.0;
            FaceIfe::new(0.0, chain_f_alpha.extend(&e), &chain_f_alpha, anchors.to_vec())
        })
        .collect();
    face.push(FaceIfe::new(
        1.0,
        vec![Vec3::zeros(); n_regions],
        &chain_f_alpha,
        anchors.to_vec(),
    ));

    let rank = |cols: Vec<Vec<f64>>| -> usize {
        let nrows = cols[0].len();
        let m = nalgebra::DMatrix::from_fn(nrows, cols.len(), |i, j| cols[j][i]);
        m.rank(1e-10 * m.amax().max(1.0))
    };

    let dim_nodal = rank(
        nodal
            .iter()
            .map(|f| samples.iter().map(|(x, r)| f.eval(x, *r)).collect())
            .collect(),
    );
    let vec_eval = |vals: Vec<Vec3>| -> Vec<f64> {
        vals.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    };
    let dim_edge = rank(
        edge.iter()
            .map(|f| vec_eval(samples.iter().map(|(x, r)| f.eval(x, *r)).collect()))
            .collect(),
    );
    let dim_face = rank(
        face.iter()
            .map(|f| vec_eval(samples.iter().map(|(x, r)| f.eval(x, *r)).collect()))
            .collect(),
    );
    let rank_grad = rank(
        nodal
            .iter()
            .map(|f| vec_eval(samples.iter().map(|(_, r)| f.grad(*r)).collect()))
            .collect(),
    );
    let rank_curl = rank(
        edge.iter()
            .map(|f| vec_eval(samples.iter().map(|(_, r)| f.curl(*r)).collect()))
            .collect(),
    );

    // Hodge star: u in P^e(c) iff c u in P^f(1/c), with c = beta here.
    let inv_beta: Vec<f64> = beta.iter().map(|b| 1.0 / b).collect();
    let chain_f_invb = Chain::new(JumpKind::Face, normals, &inv_beta);
    let mut hodge_residual: f64 = 0.0;
    for l in 0..3 {
        let mut e = Vec3::zeros();
        e[l] = 1.0;
        let u = chain_e_beta.extend(&e);
        let w = chain_f_invb.extend(&(beta[0] * e));
        for r in 0..n_regions {
            hodge_residual = hodge_residual.max((beta[r] * u[r] - w[r]).norm());
        }
    }

    LocalComplexReport { dim_nodal, dim_edge, dim_face, rank_grad, rank_curl, hodge_residual }
}
