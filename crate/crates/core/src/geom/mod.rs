//! Rigid-body algebra, pinhole projection, triangulation and Gauss-Newton
//! pose refinement.

mod camera;
mod gn;
mod lie;
mod map_io;
mod refine;
mod triangulate;
mod zone_map;

use thiserror::Error;

pub use camera::{
    project, reprojection_with_jacobians, CameraIntrinsics, MapPoint, Observation2D, ResidualJacobians,
    DEPTH_EPSILON,
};
pub use gn::SolverConfig;
pub use lie::{hat, Pose, Rotation, Twist};
pub use map_io::{read_zone_map, write_zone_map, ZoneMapFile};
pub use refine::{pose_cost, refine_pose, refine_pose_traced, Correspondence, RefineOutcome, MIN_POSE_MATCHES};
pub use triangulate::{
    point_cost, refine_point, triangulate_dlt, triangulate_point, triangulate_point_with, widest_baseline_pair,
    MAX_DLT_CONDITION,
};
pub use zone_map::{build_zone_map, build_zone_map_with, MIN_ZONE_FRAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("rotation angle is within 1e-6 of pi; perturb before taking the logarithm")]
    AngleAtPi,
    #[error("invalid camera intrinsics")]
    InvalidIntrinsics,
    #[error("triangulation needs at least 2 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("degenerate triangulation geometry")]
    Degenerate,
    #[error("pose refinement needs at least 4 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("normal equations are rank deficient")]
    SingularNormalEquations,
    #[error("zone map needs at least 3 frames, got {0}")]
    TooFewFrames(usize),
    #[error("no map point survived triangulation and filtering")]
    EmptyMap,
    #[error("frame list and pose list differ in length")]
    LengthMismatch,
}
