//! Point clouds, rigid poses and plane fitting shared by every stage.

mod cloud;
mod plane;
mod pose;

pub use cloud::{voxel_downsample, Point, PointCloud, PointLabel, VoxelGrid};
pub(crate) use cloud::voxel_key;
pub use plane::{fit_plane_pca, symmetric_eigen3, PlaneModel, SymmetricEigen3, EIGEN_TOLERANCE};
pub use pose::{rotation_geodesic_error, skew, so3_exp, so3_log, yaw_matrix, RigidPose, ROTATION_TOLERANCE};
