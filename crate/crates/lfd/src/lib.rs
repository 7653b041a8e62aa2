//! Location field descriptors: render per-pixel canonical-coordinate images
//! ("location fields") from 3D meshes, learn pose-invariant shape
//! descriptors with center-based metric losses, retrieve models from seen
//! and unseen databases, and recover 6-DoF object pose from the 2D-3D
//! correspondences a location field encodes.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`mesh`] / [`dataset`]: canonical meshes, OBJ I/O, unit-cube
//!   normalization, surface sampling and a procedural model database.
//! - [`geom`] / [`render`]: pinhole cameras, pose sampling and a CPU
//!   depth-buffered rasterizer with perspective-correct interpolation.
//! - [`degrade`]: simulates predicted location fields from rendered ones.
//! - [`net`] / [`loss`] / [`grad`] / [`train`]: the descriptor network,
//!   Huber/center/triplet-center/softmax/feature-mapping losses,
//!   hand-derived gradients and the SGD training loop.
//! - [`retrieval`]: center-descriptor banks and ranked matching.
//! - [`pnp`]: DLT + RANSAC + Levenberg-Marquardt pose recovery.
//! - [`metrics`]: modified Hausdorff distance, solid voxelization, 3D IOU,
//!   top-k accuracy and the random-pick baseline.
//! - [`io`] / [`config`] / [`cli`]: binary file formats, JSON run
//!   configuration and the command-line surface.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod degrade;
pub mod field;
pub mod geom;
pub mod grad;
pub mod io;
pub mod loss;
pub mod mesh;
pub mod metrics;
pub mod net;
pub mod pnp;
pub mod render;
pub mod retrieval;
pub mod train;
pub mod util;

pub use field::{Domain, LocationField};
pub use geom::{Camera, Pose, PoseParams};
pub use mesh::{load_obj, normalize_mesh, sample_surface, Mesh, PointSet};
pub use net::{DescriptorNet, NetConfig};
pub use retrieval::{CenterBank, RetrievalResult};
