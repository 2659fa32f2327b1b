//! Robust homography fitting from noisy correspondences.
//!
//! The estimator is a hypothesize-and-verify loop over minimal samples with
//! one twist: models are ranked by a multi-level grid-coverage score of
//! their inlier set instead of the raw inlier count, so the winning model is
//! the one whose inliers spread evenly across the image. The image is
//! discretized into `2^l × 2^l` grids for levels `l = 1..L`; with `k_l`
//! occupied bins at level `l` the score is `Σ k_l · 2^(L−l+1)`, weighting
//! coarse levels more.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{apply_homography, GeometryError, Homography, PixelPoint};

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientMatches(usize),
    #[error("degenerate configuration: collinear or duplicate points")]
    DegenerateConfiguration,
    #[error("no valid model found after {0} iterations")]
    NoModel(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A point correspondence: `source` in the query image, `target` in the
/// reference image. The fitted homography maps source to target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: PixelPoint,
    pub target: PixelPoint,
}

impl Correspondence {
    pub fn new(source: PixelPoint, target: PixelPoint) -> Self {
        Self { source, target }
    }
}

/// Grid-coverage score configuration. `levels` is the pyramid depth `L`;
/// level `l` uses `2^l` bins per dimension with weight `2^(L−l+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub levels: u32,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

impl ScoreConfig {
    pub fn level_weight(&self, level: u32) -> u64 {
        1u64 << (self.levels - level + 1)
    }
}

/// RANSAC loop configuration. The seed is mandatory so runs replay exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Transfer-error inlier threshold in pixels.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Confidence level for adaptive termination.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 4.0,
            max_iterations: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Outcome of a RANSAC run: refit model, inlier indices into the input
/// correspondences, the grid-coverage score of those inliers, and the number
/// of hypothesis iterations executed.
#[derive(Debug, Clone)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<usize>,
    pub score: u64,
    pub iterations_run: usize,
}

/// Least-squares projective fit via the direct linear transform with Hartley
/// normalization (translate to centroid, scale mean distance to √2) on both
/// point sets. Exact interpolation for 4 non-degenerate pairs.
pub fn dlt_homography(pairs: &[Correspondence]) -> Result<Homography, RobustError> {
    let n = pairs.len();
    if n < 4 {
        return Err(RobustError::InsufficientMatches(n));
    }
    if n == 4 && minimal_sample_degenerate(pairs) {
        return Err(RobustError::DegenerateConfiguration);
    }

    let (src_norm, t_src) = normalize_points(pairs.iter().map(|c| c.source));
    let (dst_norm, t_dst) = normalize_points(pairs.iter().map(|c| c.target));

    // At least 9 rows so the SVD carries the full right-singular basis
    // (the null-space vector is the solution for a minimal sample).
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (s, d)) in src_norm.iter().zip(dst_norm.iter()).enumerate() {
        let (x, y) = (s.u, s.v);
        let (u, v) = (d.u, d.v);
        a[(2 * k, 0)] = -x;
        a[(2 * k, 1)] = -y;
        a[(2 * k, 2)] = -1.0;
        a[(2 * k, 6)] = u * x;
        a[(2 * k, 7)] = u * y;
        a[(2 * k, 8)] = u;
        a[(2 * k + 1, 3)] = -x;
        a[(2 * k + 1, 4)] = -y;
        a[(2 * k + 1, 5)] = -1.0;
        a[(2 * k + 1, 6)] = v * x;
        a[(2 * k + 1, 7)] = v * y;
        a[(2 * k + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(RobustError::DegenerateConfiguration)?;
    let h_row = vt.row(vt.nrows() - 1);
    let h_norm = Matrix3::from_row_slice(h_row.transpose().as_slice());

    // Denormalize: H = T_dst⁻¹ · Hn · T_src.
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(RobustError::DegenerateConfiguration)?;
    Homography::from_matrix(t_dst_inv * h_norm * t_src)
        .map_err(|_| RobustError::DegenerateConfiguration)
}

fn normalize_points(
    points: impl Iterator<Item = PixelPoint> + Clone,
) -> (Vec<PixelPoint>, Matrix3<f64>) {
    let pts: Vec<PixelPoint> = points.collect();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.u).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.v).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.u - cx).powi(2) + (p.v - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        2.0f64.sqrt() / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normalized = pts
        .iter()
        .map(|p| PixelPoint::new(s * (p.u - cx), s * (p.v - cy)))
        .collect();
    (normalized, t)
}

/// True when any 3 of the 4 source or target points are collinear (or
/// coincident) within the collinearity determinant tolerance.
fn minimal_sample_degenerate(pairs: &[Correspondence]) -> bool {
    let collinear = |a: PixelPoint, b: PixelPoint, c: PixelPoint| {
        let det = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
        det.abs() <= 1e-9
    };
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                if collinear(pairs[i].source, pairs[j].source, pairs[k].source)
                    || collinear(pairs[i].target, pairs[j].target, pairs[k].target)
                {
                    return true;
                }
            }
        }
    }
    false
}

/// One-way transfer error in pixels: the source point is mapped into the
/// reference frame and compared to the target. Points at infinity yield +∞,
/// so they can never be inliers.
pub fn transfer_error(h: &Homography, c: &Correspondence) -> f64 {
    match apply_homography(h, &c.source) {
        Ok(mapped) => mapped.distance(&c.target),
        Err(_) => f64::INFINITY,
    }
}

/// Multi-level grid-coverage score: `Σ_{l=1..L} k_l · 2^(L−l+1)` with `k_l`
/// the number of occupied bins of the `2^l × 2^l` grid over the image.
/// Points outside the image clamp into the boundary bins.
pub fn grid_coverage_score(points: &[PixelPoint], img_size: (u32, u32), cfg: &ScoreConfig) -> u64 {
    let (width, height) = (img_size.0 as f64, img_size.1 as f64);
    let mut score = 0u64;
    for level in 1..=cfg.levels {
        let bins = 1u64 << level;
        let mut occupied = vec![false; (bins * bins) as usize];
        let mut k = 0u64;
        for p in points {
            let bx = ((p.u * bins as f64 / width).floor() as i64).clamp(0, bins as i64 - 1) as u64;
            let by = ((p.v * bins as f64 / height).floor() as i64).clamp(0, bins as i64 - 1) as u64;
            let idx = (by * bins + bx) as usize;
            if !occupied[idx] {
                occupied[idx] = true;
                k += 1;
            }
        }
        score += k * cfg.level_weight(level);
    }
    score
}

/// Robust homography estimation: hypothesize from minimal samples, verify by
/// transfer error, select by grid-coverage score of the inlier set (ties
/// broken by inlier count, then by earlier iteration), refit on the winning
/// inliers, and terminate adaptively from the inlier ratio. Deterministic
/// for a fixed seed.
pub fn ransac_homography(
    matches: &[Correspondence],
    img_size: (u32, u32),
    rc: &RansacConfig,
    sc: &ScoreConfig,
) -> Result<RansacResult, RobustError> {
    let n = matches.len();
    if n < 4 {
        return Err(RobustError::InsufficientMatches(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);

    let mut best: Option<(u64, usize, Homography, Vec<usize>)> = None;
    let mut dynamic_cap = rc.max_iterations;
    let mut iterations = 0usize;
    let mut degenerate_only = true;

    while iterations < dynamic_cap {
        iterations += 1;
        let picks = sample_indices(&mut rng, n, 4);
        let sample: Vec<Correspondence> = picks.iter().map(|i| matches[i]).collect();
        if minimal_sample_degenerate(&sample) {
            continue;
        }
        let Ok(hypothesis) = dlt_homography(&sample) else {
            continue;
        };
        degenerate_only = false;

        let inliers = collect_inliers(matches, &hypothesis, rc.inlier_threshold);
        let positions: Vec<PixelPoint> = inliers.iter().map(|&i| matches[i].target).collect();
        let score = grid_coverage_score(&positions, img_size, sc);

        let better = match &best {
            None => true,
            Some((best_score, best_count, _, _)) => {
                score > *best_score || (score == *best_score && inliers.len() > *best_count)
            }
        };
        if better {
            // Adaptive cap from the standard (1 − p⁴) termination bound.
            let ratio = inliers.len() as f64 / n as f64;
            dynamic_cap = dynamic_cap.min(required_iterations(
                ratio,
                rc.confidence,
                rc.max_iterations,
            ));
            best = Some((score, inliers.len(), hypothesis, inliers));
        }
    }

    let Some((_, _, hypothesis, inliers)) = best else {
        return Err(if degenerate_only {
            RobustError::DegenerateConfiguration
        } else {
            RobustError::NoModel(iterations)
        });
    };

    // Refit on the winning inlier set; fall back to the minimal-sample model
    // if the refit degenerates.
    let inlier_pairs: Vec<Correspondence> = inliers.iter().map(|&i| matches[i]).collect();
    let refit = dlt_homography(&inlier_pairs).unwrap_or(hypothesis);
    let final_inliers = collect_inliers(matches, &refit, rc.inlier_threshold);
    let (homography, inliers) = if final_inliers.len() >= 4 {
        (refit, final_inliers)
    } else {
        (hypothesis, inliers)
    };
    let positions: Vec<PixelPoint> = inliers.iter().map(|&i| matches[i].target).collect();
    let score = grid_coverage_score(&positions, img_size, sc);

    Ok(RansacResult {
        homography,
        inliers,
        score,
        iterations_run: iterations,
    })
}

fn collect_inliers(matches: &[Correspondence], h: &Homography, threshold: f64) -> Vec<usize> {
    matches
        .iter()
        .enumerate()
        .filter(|(_, c)| transfer_error(h, c) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    if inlier_ratio <= 0.0 {
        return cap;
    }
    if inlier_ratio >= 1.0 {
        return 1;
    }
    let p_all_inlier = inlier_ratio.powi(4);
    if p_all_inlier >= 1.0 {
        return 1;
    }
    let denom = (1.0 - p_all_inlier).ln();
    if denom >= 0.0 {
        return cap;
    }
    let needed = ((1.0 - confidence).ln() / denom).ceil();
    if needed.is_finite() && needed >= 1.0 {
        (needed as usize).min(cap)
    } else {
        cap
    }
}

/// Upper bound on the grid score of `n` points: every level saturates at
/// `min(n, 4^l)` occupied bins.
pub fn grid_score_upper_bound(n: usize, cfg: &ScoreConfig) -> u64 {
    (1..=cfg.levels)
        .map(|l| (n as u64).min(1u64 << (2 * l)) * cfg.level_weight(l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
        loop {
            let m = Matrix3::new(
                rng.random_range(0.8..1.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-40.0..40.0),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.8..1.2),
                rng.random_range(-40.0..40.0),
                rng.random_range(-1e-4..1e-4),
                rng.random_range(-1e-4..1e-4),
                1.0,
            );
            if let Ok(h) = Homography::from_matrix(m) {
                return h;
            }
        }
    }

    fn project_pairs(h: &Homography, sources: &[PixelPoint]) -> Vec<Correspondence> {
        sources
            .iter()
            .map(|&s| Correspondence::new(s, apply_homography(h, &s).unwrap()))
            .collect()
    }

    #[test]
    fn dlt_identity_on_unit_square() {
        let pairs: Vec<Correspondence> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(u, v)| Correspondence::new(PixelPoint::new(u, v), PixelPoint::new(u, v)))
            .collect();
        let h = dlt_homography(&pairs).unwrap();
        for (a, b) in h.matrix().iter().zip(Matrix3::<f64>::identity().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dlt_recovers_affine_map_from_four_corners() {
        let affine = Homography::from_matrix(Matrix3::new(
            1.2, 0.1, 5.0, -0.2, 0.9, -3.0, 0.0, 0.0, 1.0,
        ))
        .unwrap();
        let corners = [
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(10.0, 0.0),
            PixelPoint::new(10.0, 10.0),
            PixelPoint::new(0.0, 10.0),
        ];
        let h = dlt_homography(&project_pairs(&affine, &corners)).unwrap();
        for (a, b) in h.matrix().iter().zip(affine.matrix().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dlt_recovers_random_homography_from_noiseless_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let truth = random_homography(&mut rng);
            let sources: Vec<PixelPoint> = (0..50)
                .map(|_| {
                    PixelPoint::new(
                        rng.random_range(0.0..640.0),
                        rng.random_range(0.0..360.0),
                    )
                })
                .collect();
            let h = dlt_homography(&project_pairs(&truth, &sources)).unwrap();
            let max_err = h
                .matrix()
                .iter()
                .zip(truth.matrix().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-6, "max elementwise error {max_err}");
        }
    }

    #[test]
    fn dlt_rejects_collinear_minimal_sample() {
        let pairs: Vec<Correspondence> = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 1.0)]
            .iter()
            .map(|&(u, v)| Correspondence::new(PixelPoint::new(u, v), PixelPoint::new(u, v)))
            .collect();
        assert!(matches!(
            dlt_homography(&pairs),
            Err(RobustError::DegenerateConfiguration)
        ));
        assert!(matches!(
            dlt_homography(&pairs[..3]),
            Err(RobustError::InsufficientMatches(3))
        ));
    }

    #[test]
    fn dlt_equivariant_under_similarity_transforms() {
        // Pre-transforming sources by a similarity S and correcting the model
        // by S recovers the original map; validates the normalization.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let truth = random_homography(&mut rng);
        let sources: Vec<PixelPoint> = (0..30)
            .map(|_| PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0)))
            .collect();
        let pairs = project_pairs(&truth, &sources);

        let angle = 0.3f64;
        let (s, c) = (angle.sin(), angle.cos());
        let scale = 2.5;
        let sim = Homography::from_matrix(Matrix3::new(
            scale * c,
            -scale * s,
            12.0,
            scale * s,
            scale * c,
            -7.0,
            0.0,
            0.0,
            1.0,
        ))
        .unwrap();
        let transformed: Vec<Correspondence> = pairs
            .iter()
            .map(|p| Correspondence::new(apply_homography(&sim, &p.source).unwrap(), p.target))
            .collect();
        let h_t = dlt_homography(&transformed).unwrap();
        let corrected = compose_for_test(&h_t, &sim);
        let max_err = corrected
            .matrix()
            .iter()
            .zip(truth.matrix().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-8, "equivariance error {max_err}");
    }

    fn compose_for_test(outer: &Homography, inner: &Homography) -> Homography {
        crate::geometry::compose(outer, inner).unwrap()
    }

    #[test]
    fn transfer_error_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let truth = random_homography(&mut rng);
        let s = PixelPoint::new(100.0, 50.0);
        let on_model = Correspondence::new(s, apply_homography(&truth, &s).unwrap());
        assert!(transfer_error(&truth, &on_model) < 1e-12);

        let offset = Correspondence::new(
            PixelPoint::new(10.0, 10.0),
            PixelPoint::new(13.0, 14.0),
        );
        assert!((transfer_error(&Homography::identity(), &offset) - 5.0).abs() < 1e-12);

        // Random correspondence against the explicit projective oracle.
        let p = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0));
        let q = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0));
        let c = Correspondence::new(p, q);
        let m = truth.matrix();
        let v = m * Vector3::new(p.u, p.v, 1.0);
        let expected = ((v.x / v.z - q.u).powi(2) + (v.y / v.z - q.v).powi(2)).sqrt();
        assert!((transfer_error(&truth, &c) - expected).abs() < 1e-12);
    }

    #[test]
    fn transfer_error_at_infinity_is_never_an_inlier() {
        let h = Homography::from_matrix(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0,
        ))
        .unwrap();
        let c = Correspondence::new(PixelPoint::new(5.0, 0.0), PixelPoint::new(5.0, 0.0));
        assert!(transfer_error(&h, &c).is_infinite());
    }

    #[test]
    fn grid_score_closed_forms() {
        let cfg = ScoreConfig::default();
        let size = (640u32, 360u32);
        assert_eq!(grid_coverage_score(&[], size, &cfg), 0);

        // Any cluster inside one finest-level bin scores 2^5 - 2 = 30.
        for count in [1usize, 2, 17] {
            let pts: Vec<PixelPoint> = (0..count)
                .map(|i| PixelPoint::new(5.0 + i as f64 * 0.1, 5.0 + i as f64 * 0.05))
                .collect();
            assert_eq!(grid_coverage_score(&pts, size, &cfg), 30);
        }
    }

    #[test]
    fn grid_score_prefers_spread_points() {
        // Brute-force occupancy oracle for two constructed layouts: 16 points
        // filling a 4x4 block of finest-level bins versus 12 points spread one
        // per coarse (level 2) bin across the image.
        let cfg = ScoreConfig::default();
        let size = (640u32, 640u32);
        let fine = 640.0 / 16.0;
        let clustered: Vec<PixelPoint> = (0..16)
            .map(|i| {
                let (bx, by) = (i % 4, i / 4);
                PixelPoint::new(
                    (bx as f64 + 0.5) * fine,
                    (by as f64 + 0.5) * fine,
                )
            })
            .collect();
        let coarse = 640.0 / 4.0;
        let spread: Vec<PixelPoint> = (0..12)
            .map(|i| {
                let (bx, by) = (i % 4, i / 4);
                PixelPoint::new((bx as f64 + 0.5) * coarse, (by as f64 + 0.5) * coarse)
            })
            .collect();

        let clustered_score = grid_coverage_score(&clustered, size, &cfg);
        let spread_score = grid_coverage_score(&spread, size, &cfg);
        assert_eq!(clustered_score, brute_force_score(&clustered, size, &cfg));
        assert_eq!(spread_score, brute_force_score(&spread, size, &cfg));
        assert!(
            spread_score > clustered_score,
            "spread {spread_score} vs clustered {clustered_score}"
        );
    }

    fn brute_force_score(points: &[PixelPoint], size: (u32, u32), cfg: &ScoreConfig) -> u64 {
        let mut total = 0u64;
        for l in 1..=cfg.levels {
            let bins = 1i64 << l;
            let mut k = 0u64;
            for by in 0..bins {
                for bx in 0..bins {
                    let u0 = bx as f64 * size.0 as f64 / bins as f64;
                    let u1 = (bx + 1) as f64 * size.0 as f64 / bins as f64;
                    let v0 = by as f64 * size.1 as f64 / bins as f64;
                    let v1 = (by + 1) as f64 * size.1 as f64 / bins as f64;
                    let hit = points.iter().any(|p| {
                        let u = p.u.clamp(0.0, size.0 as f64 - 1e-9);
                        let v = p.v.clamp(0.0, size.1 as f64 - 1e-9);
                        u >= u0 && u < u1 && v >= v0 && v < v1
                    });
                    if hit {
                        k += 1;
                    }
                }
            }
            total += k * cfg.level_weight(l);
        }
        total
    }

    proptest! {
        #[test]
        fn grid_score_matches_brute_force(
            pts in prop::collection::vec((0.0f64..640.0, 0.0f64..360.0), 0..80),
            levels in 1u32..5,
        ) {
            let cfg = ScoreConfig { levels };
            let points: Vec<PixelPoint> = pts.iter().map(|&(u, v)| PixelPoint::new(u, v)).collect();
            let size = (640u32, 360u32);
            prop_assert_eq!(
                grid_coverage_score(&points, size, &cfg),
                brute_force_score(&points, size, &cfg)
            );
        }

        #[test]
        fn grid_score_monotone_and_bounded(
            pts in prop::collection::vec((0.0f64..640.0, 0.0f64..360.0), 1..60),
            extra in (0.0f64..640.0, 0.0f64..360.0),
        ) {
            let cfg = ScoreConfig::default();
            let size = (640u32, 360u32);
            let points: Vec<PixelPoint> = pts.iter().map(|&(u, v)| PixelPoint::new(u, v)).collect();
            let base = grid_coverage_score(&points, size, &cfg);

            // Lower and upper bounds.
            prop_assert!(base >= (1u64 << (cfg.levels + 1)) - 2);
            prop_assert!(base <= grid_score_upper_bound(points.len(), &cfg));

            // Adding a point never decreases the score.
            let mut extended = points.clone();
            extended.push(PixelPoint::new(extra.0, extra.1));
            let grown = grid_coverage_score(&extended, size, &cfg);
            prop_assert!(grown >= base);

            // Multiplicity within an occupied bin leaves the score unchanged.
            let mut duplicated = points.clone();
            duplicated.push(points[0]);
            prop_assert_eq!(grid_coverage_score(&duplicated, size, &cfg), base);
        }
    }

    #[test]
    fn grid_score_strictly_increases_into_fresh_finest_bin() {
        let cfg = ScoreConfig::default();
        let size = (640u32, 360u32);
        let points = vec![PixelPoint::new(5.0, 5.0)];
        let base = grid_coverage_score(&points, size, &cfg);
        let mut extended = points.clone();
        extended.push(PixelPoint::new(635.0, 355.0));
        assert!(grid_coverage_score(&extended, size, &cfg) > base);
    }

    #[test]
    fn ransac_recovers_exact_model_without_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let truth = random_homography(&mut rng);
        let sources: Vec<PixelPoint> = (0..100)
            .map(|_| PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0)))
            .collect();
        let matches = project_pairs(&truth, &sources);
        let rc = RansacConfig {
            seed: 9,
            ..Default::default()
        };
        let result = ransac_homography(&matches, (640, 360), &rc, &ScoreConfig::default()).unwrap();
        assert_eq!(result.inliers.len(), 100);
        let max_err = result
            .homography
            .matrix()
            .iter()
            .zip(truth.matrix().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "recovered model error {max_err}");
    }

    #[test]
    fn ransac_result_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let truth = random_homography(&mut rng);
        let mut matches: Vec<Correspondence> = Vec::new();
        for _ in 0..150 {
            let s = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0));
            let t = apply_homography(&truth, &s).unwrap();
            let noisy = PixelPoint::new(
                t.u + rng.random_range(-0.5..0.5),
                t.v + rng.random_range(-0.5..0.5),
            );
            matches.push(Correspondence::new(s, noisy));
        }
        for _ in 0..50 {
            matches.push(Correspondence::new(
                PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0)),
                PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0)),
            ));
        }
        let rc = RansacConfig {
            seed: 123,
            ..Default::default()
        };
        let sc = ScoreConfig::default();
        let result = ransac_homography(&matches, (640, 360), &rc, &sc).unwrap();
        for &i in &result.inliers {
            assert!(transfer_error(&result.homography, &matches[i]) <= rc.inlier_threshold);
        }
        let positions: Vec<PixelPoint> =
            result.inliers.iter().map(|&i| matches[i].target).collect();
        assert_eq!(result.score, grid_coverage_score(&positions, (640, 360), &sc));

        // Determinism: same seed, same result.
        let replay = ransac_homography(&matches, (640, 360), &rc, &sc).unwrap();
        assert_eq!(replay.inliers, result.inliers);
        assert_eq!(replay.homography.matrix(), result.homography.matrix());
        assert_eq!(replay.iterations_run, result.iterations_run);
    }

    #[test]
    fn ransac_rejects_collinear_matches() {
        let matches: Vec<Correspondence> = (0..20)
            .map(|i| {
                let p = PixelPoint::new(i as f64 * 10.0, i as f64 * 5.0);
                Correspondence::new(p, p)
            })
            .collect();
        let rc = RansacConfig {
            seed: 7,
            max_iterations: 200,
            ..Default::default()
        };
        assert!(matches!(
            ransac_homography(&matches, (640, 360), &rc, &ScoreConfig::default()),
            Err(RobustError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn ransac_requires_four_matches() {
        let matches = vec![
            Correspondence::new(PixelPoint::new(0.0, 0.0), PixelPoint::new(0.0, 0.0));
            3
        ];
        assert!(matches!(
            ransac_homography(
                &matches,
                (640, 360),
                &RansacConfig::default(),
                &ScoreConfig::default()
            ),
            Err(RobustError::InsufficientMatches(3))
        ));
    }
}
