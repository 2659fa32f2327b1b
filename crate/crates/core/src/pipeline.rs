//! End-to-end adaptive warping: frame association across the teach and
//! repeat trajectories, strategy selection by the translation gate, warp
//! execution, and translation statistics.
//!
//! When the camera centers of a pair are closer than the gate (0.03 m by
//! default) the query is first warped by the rotation-induced homography,
//! then a feature-based planar homography remedies the residual pose error.
//! Larger baselines skip straight to the feature-based planar fit.

use image::GrayImage;
use thiserror::Error;

use crate::features::{detect_features, match_features, uniformize, FeatureError, FeatureSet};
use crate::geometry::{
    compose, rotation_homography, warp_image, GeometryError, Homography, Intrinsics, Pose,
};
use crate::robust::{
    ransac_homography, Correspondence, RansacConfig, RobustError, ScoreConfig,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("trajectory must contain at least one frame")]
    EmptyTrajectory,
    #[error("timestamps must strictly increase (frame {0})")]
    NonMonotonicTimestamps(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One trajectory frame: capture time, camera pose, and an opaque image
/// identifier resolved by the caller.
#[derive(Debug, Clone)]
pub struct Frame {
    pub timestamp: f64,
    pub pose: Pose,
    pub image_id: String,
}

/// Time-ordered pose sequence.
#[derive(Debug, Clone)]
pub struct Trajectory {
    frames: Vec<Frame>,
}

impl Trajectory {
    pub fn new(frames: Vec<Frame>) -> Result<Self, PipelineError> {
        if frames.is_empty() {
            return Err(PipelineError::EmptyTrajectory);
        }
        for i in 1..frames.len() {
            if frames[i].timestamp <= frames[i - 1].timestamp {
                return Err(PipelineError::NonMonotonicTimestamps(i));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A query frame paired with its nearest reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub query_index: usize,
    pub ref_index: usize,
    pub query_id: String,
    pub ref_id: String,
    /// Distance between camera centers, meters.
    pub translation_gap: f64,
    /// Geodesic angle between orientations, radians.
    pub rotation_gap: f64,
}

/// Warp strategy chosen per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpStrategy {
    RotationThenPlanar,
    PlanarOnly,
}

/// Pipeline knobs; defaults follow the published alignment setup
/// (0.03 m gate, 1000 feature points, 4.0 px RANSAC threshold).
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Translation gate in meters; strictly below selects rotation-first.
    pub translation_gate: f64,
    /// Keypoint budget per image after uniformization. Detection gathers up
    /// to twice this before the quadtree thins it down.
    pub feature_budget: usize,
    /// Hamming ceiling for descriptor matches, bits.
    pub match_max_distance: u32,
    pub ransac: RansacConfig,
    pub score: ScoreConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            translation_gate: 0.03,
            feature_budget: 1000,
            match_max_distance: crate::features::DEFAULT_MATCH_MAX_DISTANCE,
            ransac: RansacConfig::default(),
            score: ScoreConfig::default(),
        }
    }
}

/// Result of aligning one query image onto its reference.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub strategy: WarpStrategy,
    /// Rotation-induced homography, present for the rotation-first strategy.
    pub rotation_h: Option<Homography>,
    /// Feature-based planar homography (fitted on the rotation-warped query
    /// for the rotation-first strategy).
    pub planar_h: Homography,
    /// Full query→reference map.
    pub composed_h: Homography,
    pub inliers: usize,
    pub score: u64,
    /// Validity of the final warped query in the reference frame.
    pub valid_mask: GrayImage,
    /// The query warped into the reference frame by `composed_h`.
    pub warped_query: GrayImage,
}

/// Pairs every query frame with the reference frame whose camera center is
/// nearest (ties broken by earlier reference timestamp).
pub fn associate_frames(query: &Trajectory, reference: &Trajectory) -> Vec<FramePair> {
    query
        .frames()
        .iter()
        .enumerate()
        .map(|(qi, qf)| {
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for (ri, rf) in reference.frames().iter().enumerate() {
                let dist = (qf.pose.translation() - rf.pose.translation()).norm();
                if dist < best_dist {
                    best = ri;
                    best_dist = dist;
                }
            }
            let rf = &reference.frames()[best];
            FramePair {
                query_index: qi,
                ref_index: best,
                query_id: qf.image_id.clone(),
                ref_id: rf.image_id.clone(),
                translation_gap: best_dist,
                rotation_gap: rotation_angle(&rf.pose, &qf.pose),
            }
        })
        .collect()
}

/// Geodesic angle between two orientations, radians in [0, π].
pub fn rotation_angle(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation().transpose() * b.rotation();
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos()
}

/// Strategy gate: rotation-first iff the translation gap is strictly below
/// the gate; the boundary falls to planar-only.
pub fn select_strategy(pair: &FramePair, cfg: &PipelineConfig) -> WarpStrategy {
    if pair.translation_gap < cfg.translation_gate {
        WarpStrategy::RotationThenPlanar
    } else {
        WarpStrategy::PlanarOnly
    }
}

/// Aligns one query image onto its reference image.
///
/// Rotation-first: warp the query by the rotation-induced homography, match
/// features between the warped query and the reference, fit a planar
/// homography with RANSAC, and compose. Planar-only: fit directly on the raw
/// images. Deterministic given the RANSAC seed.
#[allow(clippy::too_many_arguments)]
pub fn align_pair(
    query_img: &GrayImage,
    ref_img: &GrayImage,
    pair: &FramePair,
    query_pose: &Pose,
    ref_pose: &Pose,
    k1: &Intrinsics,
    k2: &Intrinsics,
    cfg: &PipelineConfig,
) -> Result<AlignmentResult, PipelineError> {
    let strategy = select_strategy(pair, cfg);
    let ref_size = ref_img.dimensions();

    let (rotation_h, match_img, match_mask) = match strategy {
        WarpStrategy::RotationThenPlanar => {
            let rot = rotation_homography(k1, k2, ref_pose, query_pose)?;
            let warped = warp_image(query_img, &rot, ref_size)?;
            (Some(rot), warped.image, Some(warped.mask))
        }
        WarpStrategy::PlanarOnly => (None, query_img.clone(), None),
    };

    let query_features = detect_and_thin(&match_img, match_mask.as_ref(), cfg)?;
    let ref_features = detect_and_thin(ref_img, None, cfg)?;
    let matches = match_features(&query_features, &ref_features, cfg.match_max_distance)?;
    let correspondences: Vec<Correspondence> = matches
        .iter()
        .map(|m| {
            Correspondence::new(
                query_features.keypoints()[m.query_index].position,
                ref_features.keypoints()[m.ref_index].position,
            )
        })
        .collect();

    let fit = ransac_homography(&correspondences, ref_size, &cfg.ransac, &cfg.score)?;
    let planar_h = fit.homography;
    let composed_h = match &rotation_h {
        Some(rot) => compose(&planar_h, rot)?,
        None => planar_h,
    };

    let warped = warp_image(query_img, &composed_h, ref_size)?;
    Ok(AlignmentResult {
        strategy,
        rotation_h,
        planar_h,
        composed_h,
        inliers: fit.inliers.len(),
        score: fit.score,
        valid_mask: warped.mask,
        warped_query: warped.image,
    })
}

/// Detects features, drops keypoints whose descriptor support touches
/// invalid warp pixels, and thins the rest with the quadtree.
fn detect_and_thin(
    img: &GrayImage,
    mask: Option<&GrayImage>,
    cfg: &PipelineConfig,
) -> Result<FeatureSet, PipelineError> {
    let raw = detect_features(img, cfg.feature_budget.saturating_mul(2))?;
    let filtered = match mask {
        Some(mask) if mask.as_raw().contains(&0) => raw.retain_by(|kp| {
            let scale = crate::features::PYRAMID_SCALE.powi(kp.octave as i32);
            let radius = (crate::features::EDGE_MARGIN as f64 * scale).ceil() as i64;
            let (w, h) = mask.dimensions();
            let (cx, cy) = (kp.position.u.round() as i64, kp.position.v.round() as i64);
            for dy in (-radius..=radius).step_by(3) {
                for dx in (-radius..=radius).step_by(3) {
                    let x = (cx + dx).clamp(0, w as i64 - 1) as u32;
                    let y = (cy + dy).clamp(0, h as i64 - 1) as u32;
                    if mask.get_pixel(x, y).0[0] == 0 {
                        return false;
                    }
                }
            }
            true
        }),
        _ => raw,
    };
    Ok(uniformize(&filtered, img.dimensions(), cfg.feature_budget))
}

/// Histogram of translation gaps plus the fraction below the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationHistogram {
    /// Bin edges in meters; bin `i` covers `[edges[i], edges[i+1])` and the
    /// final bin is open-ended. Gaps below the first edge land in bin 0.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Cumulative fraction of pairs up to and including each bin.
    pub cumulative: Vec<f64>,
    pub gate: f64,
    pub fraction_below_gate: f64,
}

/// Bins translation gaps and reports the fraction strictly below `gate`.
pub fn translation_stats(pairs: &[FramePair], bin_edges: &[f64], gate: f64) -> TranslationHistogram {
    assert!(!pairs.is_empty(), "translation_stats needs at least one pair");
    assert!(!bin_edges.is_empty());
    let mut counts = vec![0usize; bin_edges.len()];
    let mut below = 0usize;
    for pair in pairs {
        let gap = pair.translation_gap;
        if gap < gate {
            below += 1;
        }
        let mut bin = 0usize;
        for (i, &edge) in bin_edges.iter().enumerate() {
            if gap >= edge {
                bin = i;
            }
        }
        counts[bin] += 1;
    }
    let total = pairs.len() as f64;
    let mut running = 0usize;
    let cumulative = counts
        .iter()
        .map(|&c| {
            running += c;
            running as f64 / total
        })
        .collect();
    TranslationHistogram {
        edges: bin_edges.to_vec(),
        counts,
        cumulative,
        gate,
        fraction_below_gate: below as f64 / total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(t: f64, position: Vector3<f64>, id: &str) -> Frame {
        Frame {
            timestamp: t,
            pose: Pose::new(nalgebra::Matrix3::identity(), position).unwrap(),
            image_id: id.to_string(),
        }
    }

    #[test]
    fn trajectory_rejects_non_monotonic_timestamps() {
        let frames = vec![
            frame(0.0, Vector3::zeros(), "a"),
            frame(0.0, Vector3::zeros(), "b"),
        ];
        assert!(matches!(
            Trajectory::new(frames),
            Err(PipelineError::NonMonotonicTimestamps(1))
        ));
        assert!(matches!(
            Trajectory::new(vec![]),
            Err(PipelineError::EmptyTrajectory)
        ));
    }

    #[test]
    fn identical_trajectories_pair_with_zero_gap() {
        let frames: Vec<Frame> = (0..5)
            .map(|i| frame(i as f64, Vector3::new(i as f64, 0.0, 0.0), &format!("f{i}")))
            .collect();
        let traj = Trajectory::new(frames).unwrap();
        let pairs = associate_frames(&traj, &traj);
        for (i, p) in pairs.iter().enumerate() {
            assert_eq!(p.ref_index, i);
            assert_eq!(p.translation_gap, 0.0);
            assert_eq!(p.rotation_gap, 0.0);
        }
    }

    #[test]
    fn query_snaps_to_nearest_grid_point() {
        let reference = Trajectory::new(
            (0..27)
                .map(|i| {
                    let (x, y, z) = ((i % 3) as f64, ((i / 3) % 3) as f64, (i / 9) as f64);
                    frame(i as f64, Vector3::new(x, y, z), &format!("r{i}"))
                })
                .collect(),
        )
        .unwrap();
        let query = Trajectory::new(vec![frame(0.0, Vector3::new(0.4, 0.0, 0.0), "q0")]).unwrap();
        let pairs = associate_frames(&query, &reference);
        assert_eq!(pairs[0].ref_id, "r0");
        assert!((pairs[0].translation_gap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn association_matches_exhaustive_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut random_traj = |n: usize, prefix: &str| {
            Trajectory::new(
                (0..n)
                    .map(|i| {
                        frame(
                            i as f64,
                            Vector3::new(
                                rng.random_range(-10.0..10.0),
                                rng.random_range(-10.0..10.0),
                                rng.random_range(-1.0..1.0),
                            ),
                            &format!("{prefix}{i}"),
                        )
                    })
                    .collect(),
            )
            .unwrap()
        };
        let reference = random_traj(500, "r");
        let query = random_traj(100, "q");
        let pairs = associate_frames(&query, &reference);
        for pair in &pairs {
            let qp = query.frames()[pair.query_index].pose.translation().clone_owned();
            let brute = reference
                .frames()
                .iter()
                .map(|rf| (qp - rf.pose.translation()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((pair.translation_gap - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn association_is_independent_of_query_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let reference = Trajectory::new(
            (0..40)
                .map(|i| {
                    frame(
                        i as f64,
                        Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0),
                        &format!("r{i}"),
                    )
                })
                .collect(),
        )
        .unwrap();
        let forward: Vec<Frame> = (0..20)
            .map(|i| {
                frame(
                    i as f64,
                    Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0),
                    &format!("q{i}"),
                )
            })
            .collect();
        let mut reversed = forward.clone();
        reversed.reverse();
        for (i, f) in reversed.iter_mut().enumerate() {
            f.timestamp = i as f64;
        }
        let a = associate_frames(&Trajectory::new(forward).unwrap(), &reference);
        let b = associate_frames(&Trajectory::new(reversed).unwrap(), &reference);
        for pair in &a {
            let twin = b.iter().find(|p| p.query_id == pair.query_id).unwrap();
            assert_eq!(twin.ref_id, pair.ref_id);
            assert_eq!(twin.translation_gap, pair.translation_gap);
        }
    }

    fn gap_pair(gap: f64) -> FramePair {
        FramePair {
            query_index: 0,
            ref_index: 0,
            query_id: "q".into(),
            ref_id: "r".into(),
            translation_gap: gap,
            rotation_gap: 0.0,
        }
    }

    #[test]
    fn strategy_gate_is_strict_at_boundary() {
        let cfg = PipelineConfig::default();
        assert_eq!(
            select_strategy(&gap_pair(0.02), &cfg),
            WarpStrategy::RotationThenPlanar
        );
        assert_eq!(select_strategy(&gap_pair(0.05), &cfg), WarpStrategy::PlanarOnly);
        assert_eq!(select_strategy(&gap_pair(0.03), &cfg), WarpStrategy::PlanarOnly);
    }

    #[test]
    fn strategy_is_monotone_in_gap() {
        let cfg = PipelineConfig::default();
        let mut seen_planar = false;
        for i in 0..100 {
            let gap = i as f64 * 0.001;
            match select_strategy(&gap_pair(gap), &cfg) {
                WarpStrategy::PlanarOnly => seen_planar = true,
                WarpStrategy::RotationThenPlanar => {
                    assert!(!seen_planar, "strategy flipped back at gap {gap}")
                }
            }
        }
        assert!(seen_planar);
    }

    #[test]
    fn translation_stats_counts_and_gate_fraction() {
        let pairs: Vec<FramePair> = [0.0, 0.0, 0.0].iter().map(|&g| gap_pair(g)).collect();
        let hist = translation_stats(&pairs, &[0.0, 0.01, 0.02], 0.03);
        assert_eq!(hist.counts, vec![3, 0, 0]);
        assert_eq!(hist.fraction_below_gate, 1.0);
        assert_eq!(hist.cumulative.last().copied(), Some(1.0));

        let pairs: Vec<FramePair> = [0.01, 0.02, 0.05].iter().map(|&g| gap_pair(g)).collect();
        let hist = translation_stats(&pairs, &[0.0, 0.03], 0.03);
        assert_eq!(hist.counts, vec![2, 1]);
        assert!((hist.fraction_below_gate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_gap_is_geodesic_angle() {
        let p1 = Pose::identity();
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::y()), 0.25).into_inner();
        let p2 = Pose::new(r, Vector3::zeros()).unwrap();
        assert!((rotation_angle(&p1, &p2) - 0.25).abs() < 1e-12);
    }
}
