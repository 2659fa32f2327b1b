//! Reference-query image alignment for teach-and-repeat patrol imagery.
//!
//! A query image taken while retracing a taught route is aligned onto its
//! reference image in four stages: pose-based frame association, adaptive
//! warping (rotation-induced homography when the translation gap is small,
//! feature-based planar homography otherwise), robust estimation with a
//! multi-level grid-coverage RANSAC score, and quantitative evaluation via
//! point matching error and change-mask overlap metrics.
//!
//! The crate is organized along those stages:
//!
//! - [`geometry`] — poses, intrinsics, homographies, point and image warping
//! - [`features`] — FAST corners, steered binary descriptors, quadtree
//!   uniformization, Hamming matching
//! - [`robust`] — normalized DLT, transfer error, grid-coverage score, RANSAC
//! - [`pipeline`] — trajectories, frame association, adaptive warp execution
//! - [`evaluation`] — point matching error and IoU/F1 mask metrics
//! - [`tooling`] — file formats, the synthetic benchmark generator, and the
//!   `refalign` command line interface

pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod robust;
pub mod tooling;

pub use evaluation::{compute_pme, mask_metrics, CorrespondenceSet, LabelMask, MetricReport};
pub use features::{detect_features, match_features, uniformize, Descriptor, FeatureSet, Match};
pub use geometry::{
    apply_homography, compose, planar_homography_from_motion, relative_motion,
    rotation_homography, warp_image, Homography, Intrinsics, PixelPoint, PlaneParams, Pose,
};
pub use pipeline::{
    align_pair, associate_frames, select_strategy, translation_stats, AlignmentResult, FramePair,
    PipelineConfig, Trajectory, WarpStrategy,
};
pub use robust::{
    dlt_homography, grid_coverage_score, ransac_homography, transfer_error, Correspondence,
    RansacConfig, RansacResult, ScoreConfig,
};
