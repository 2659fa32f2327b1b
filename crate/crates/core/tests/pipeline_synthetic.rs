//! End-to-end alignment on synthetic pairs with known ground truth.

use refalign::geometry::{apply_homography, PixelPoint};
use refalign::pipeline::{align_pair, FramePair, PipelineConfig, WarpStrategy};
use refalign::tooling::formats::SynthConfig;
use refalign::tooling::synth::{generate_synthetic_pair, MotionModel, SynthPair};
use refalign::{compute_pme, Homography};

fn pair_for(synth: &SynthPair, index: usize) -> FramePair {
    FramePair {
        query_index: index,
        ref_index: index,
        query_id: format!("{index:06}"),
        ref_id: format!("{index:06}"),
        translation_gap: (synth.query_pose_stored.translation() - synth.ref_pose.translation())
            .norm(),
        rotation_gap: 0.0,
    }
}

fn corner_error(h: &Homography, truth: &Homography, width: f64, height: f64) -> f64 {
    [
        (0.0, 0.0),
        (width - 1.0, 0.0),
        (width - 1.0, height - 1.0),
        (0.0, height - 1.0),
    ]
    .iter()
    .map(|&(u, v)| {
        let p = PixelPoint::new(u, v);
        apply_homography(h, &p)
            .unwrap()
            .distance(&apply_homography(truth, &p).unwrap())
    })
    .fold(0.0, f64::max)
}

fn run_alignment(synth: &SynthPair, index: usize, seed: u64) -> refalign::AlignmentResult {
    let mut cfg = PipelineConfig::default();
    cfg.ransac.seed = seed;
    let pair = pair_for(synth, index);
    align_pair(
        &synth.query,
        &synth.reference,
        &pair,
        &synth.query_pose_stored,
        &synth.ref_pose,
        &synth.intrinsics,
        &synth.intrinsics,
        &cfg,
    )
    .expect("alignment should succeed on synthetic data")
}

#[test]
fn self_alignment_recovers_identity() {
    let cfg = SynthConfig {
        motion: MotionModel::PureRotation,
        rotation_deg: 0.0,
        gamma_range: (1.0, 1.0),
        pose_rot_noise_deg: 0.0,
        pose_trans_noise_m: 0.0,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_pair(&cfg, 0).unwrap();
    let result = run_alignment(&synth, 0, 11);
    assert_eq!(result.strategy, WarpStrategy::RotationThenPlanar);
    let err = corner_error(
        &result.composed_h,
        &Homography::identity(),
        cfg.width as f64,
        cfg.height as f64,
    );
    assert!(err < 1e-3, "self-alignment corner error {err} px");
}

#[test]
fn pure_rotation_pair_aligns_through_rotation_then_planar() {
    let cfg = SynthConfig {
        motion: MotionModel::PureRotation,
        rotation_deg: 5.0,
        gamma_range: (1.0, 1.0),
        pose_rot_noise_deg: 0.0,
        pose_trans_noise_m: 0.0,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_pair(&cfg, 2).unwrap();
    let result = run_alignment(&synth, 2, 17);
    assert_eq!(result.strategy, WarpStrategy::RotationThenPlanar);

    let err = corner_error(
        &result.composed_h,
        &synth.true_h,
        cfg.width as f64,
        cfg.height as f64,
    );
    assert!(err < 0.5, "corner transfer error {err} px");

    // With exact poses the rotation warp is already the truth, so the planar
    // remedy must be close to the identity.
    let planar_displacement = corner_error(
        &result.planar_h,
        &Homography::identity(),
        cfg.width as f64,
        cfg.height as f64,
    );
    assert!(
        planar_displacement < 1.0,
        "planar remedy moved corners by {planar_displacement} px"
    );
}

#[test]
fn planar_baseline_pair_aligns_with_planar_only() {
    let cfg = SynthConfig {
        motion: MotionModel::PlanarBaseline,
        baseline_m: 0.5,
        gamma_range: (1.0, 1.0),
        pose_rot_noise_deg: 0.0,
        pose_trans_noise_m: 0.0,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_pair(&cfg, 1).unwrap();
    let result = run_alignment(&synth, 1, 23);
    assert_eq!(result.strategy, WarpStrategy::PlanarOnly);
    assert!(result.rotation_h.is_none());

    let pme = compute_pme(&result.composed_h, &synth.correspondences, 1e6);
    assert!(pme < 1.0, "ground-plane PME {pme} px");
}

#[test]
fn alignment_is_deterministic_for_a_fixed_seed() {
    let cfg = SynthConfig {
        motion: MotionModel::PureRotation,
        rotation_deg: 4.0,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_pair(&cfg, 4).unwrap();
    let a = run_alignment(&synth, 4, 99);
    let b = run_alignment(&synth, 4, 99);
    assert_eq!(a.strategy, b.strategy);
    assert_eq!(a.inliers, b.inliers);
    assert_eq!(a.score, b.score);
    assert_eq!(a.composed_h.to_row_major(), b.composed_h.to_row_major());
    assert_eq!(a.warped_query.as_raw(), b.warped_query.as_raw());
    assert_eq!(a.valid_mask.as_raw(), b.valid_mask.as_raw());
}

#[test]
fn gamma_perturbation_does_not_break_alignment() {
    let cfg = SynthConfig {
        motion: MotionModel::PureRotation,
        rotation_deg: 4.0,
        gamma_range: (0.8, 1.25),
        pose_rot_noise_deg: 0.3,
        pose_trans_noise_m: 0.002,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_pair(&cfg, 6).unwrap();
    let result = run_alignment(&synth, 6, 31);
    let pme = compute_pme(&result.composed_h, &synth.correspondences, 1e6);
    assert!(pme < 2.0, "PME {pme} px under gamma and pose noise");

    // The rotation-only warp from noisy poses should be visibly worse than
    // the feature-remedied composition.
    let rot = result.rotation_h.expect("rotation-first strategy");
    let rot_pme = compute_pme(&rot, &synth.correspondences, 1e6);
    assert!(
        rot_pme >= pme,
        "rotation-only PME {rot_pme} vs adaptive {pme}"
    );
}
