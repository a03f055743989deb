//! Camera-trajectory toolkit: pose geometry and Plücker ray maps, metric scale
//! calibration of SfM trajectories, trajectory segmentation and
//! categorization, evaluation metrics, diffusion conditioning contracts and
//! the on-disk formats that tie them together.

pub mod analysis;
pub mod calibration;
pub mod conditioning;
pub mod geometry;
pub mod io;
pub mod metrics;

pub use nalgebra::{Matrix3, Vector3};

pub use analysis::{
    balance_dataset, classify_trajectory, detect_keypoints, segment_trajectory, AnalysisError, AnalysisParams,
    BalanceCap, BalanceResult, DirectionBin, TrajectoryProfile, TrajectorySegment, TurnBin,
};
pub use calibration::{
    calibrate_trajectory, frame_scale, scene_scale, CalibrationError, DepthPair, FrameScale, KeyframeScale,
    RansacParams, ScaleEstimate,
};
pub use conditioning::{
    build_extension_input, combine_guidance, masked_diffusion_loss, ConditionFramePolicy, ConditioningError,
    ExtensionInput, GuidanceWeights, TokenMatrix,
};
pub use geometry::{
    apply_scale, downsample_trajectory, plucker_map, rebase_trajectory, rotation_geodesic, CameraIntrinsics, Frame,
    GeometryError, PluckerMap, Pose, RayMode, Trajectory,
};
pub use io::FormatError;
pub use metrics::{
    align_similarity, appearance_consistency, camera_movement_score, evaluate_trajectory, motion_strength,
    AlignmentResult, ClipFeatures, FlowField, FlowStat, FlowUnits, MetricsError, SegMask, TrajectoryErrors,
};
