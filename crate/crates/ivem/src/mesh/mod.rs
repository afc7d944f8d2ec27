//! Background tetrahedral meshes and the unfitted cut topology.

mod background;
mod cut;
mod levelset;
mod topology;
mod vtk;

pub use background::{build_background_mesh, BackgroundMesh};
pub use cut::{
    classify_and_cut, fit_interface_plane, least_aligned_axis, CutElement, CutMesh, CutPoint,
    ElemClass, RegionSign, SNAP_TOL,
};
pub(crate) use cut::volume_and_centroid;
pub use levelset::{level_set_by_name, plane_x, sphere, twisted_tori, LevelSet};
pub use topology::{build_topology, CutMeshTopology, ElemTopo, SurfTri};
pub use vtk::{export_interface_vtk, export_mesh_vtk};
