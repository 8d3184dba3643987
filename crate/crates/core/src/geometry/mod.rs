//! Pinhole camera model, rigid-motion parametrization, and the pixel
//! projection that drives view synthesis.

mod camera;
mod depth;
mod pose;
mod projection;

pub use camera::CameraIntrinsics;
pub use depth::{disparity_to_depth, DepthMap, DisparityRange};
pub use pose::{
    euler_rotation, mat3_mul, mat3_transpose, mat3_vec, pose_vec_to_matrix, Mat3, PoseVec6, Se3,
    SE3_TOLERANCE,
};
pub use projection::{project_pixels, project_point, transforms_to_tensor, ProjectedPixels, Z_MIN};
