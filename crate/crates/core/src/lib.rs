//! Voxel grids to deformed, defect-free tetrahedral meshes.
//!
//! The pipeline: a binary [`voxel::VoxelGrid`] (voxelized from a surface or
//! sampled by the [`diffusion`] machinery) is split into a face-consistent
//! [`tet::TetMesh`], whose boundary is pulled onto a target surface by the
//! regularized projection optimizer in [`deform`], and the result is audited
//! by [`quality`].

pub mod bvh;
pub mod closest_point;
pub mod deform;
pub mod diffusion;
pub mod error;
pub mod export;
pub mod geom;
pub mod quality;
pub mod shapes;
pub mod tet;
pub mod trimesh;
pub mod voxel;

pub use error::{Error, Result};
pub use geom::Vec3;
