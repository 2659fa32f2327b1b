//! Binary feature detection, spatial uniformization, and matching.
//!
//! Detection follows the visual-SLAM recipe this pipeline builds on: FAST
//! corners over an image pyramid with per-level budgets, intensity-centroid
//! orientation, and a 256-bit steered binary descriptor. A quadtree pass
//! thins the pooled keypoints to at most one per leaf cell so the robust
//! estimator sees evenly distributed correspondences, and matching is mutual
//! nearest neighbor under Hamming distance with an absolute ceiling.

mod fast;
mod orb_pattern;

use image::GrayImage;
use thiserror::Error;

use crate::geometry::PixelPoint;
use fast::detect_fast;
use orb_pattern::DESCRIPTOR_PATTERN;

/// Pyramid levels, matching the SLAM defaults the pipeline adopts.
pub const PYRAMID_LEVELS: u32 = 8;
/// Scale factor between pyramid levels.
pub const PYRAMID_SCALE: f64 = 1.2;
/// Primary FAST threshold; a lower fallback is tried on empty levels.
pub const FAST_THRESHOLD: u8 = 20;
pub const FAST_THRESHOLD_FALLBACK: u8 = 7;
/// Keypoints closer to the border than this (at their level) are discarded
/// so the orientation patch and rotated descriptor pattern stay in bounds.
pub const EDGE_MARGIN: u32 = 19;
/// Half size of the orientation patch.
const HALF_PATCH: i32 = 15;
/// Default Hamming distance ceiling for matching, in bits.
pub const DEFAULT_MATCH_MAX_DISTANCE: u32 = 64;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {0}x{1} is too small for detection (minimum 64x64)")]
    ImageTooSmall(u32, u32),
    #[error("feature set is empty")]
    EmptySet,
}

/// Oriented multi-scale keypoint. Position is in full-resolution pixels.
#[derive(Debug, Clone, Copy)]
pub struct Keypoint {
    pub position: PixelPoint,
    /// FAST corner score.
    pub response: f64,
    /// Orientation in radians, [0, 2π).
    pub angle: f64,
    /// Pyramid level the keypoint was detected on.
    pub octave: u32,
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor {
    bits: [u64; 4],
}

impl Descriptor {
    pub fn from_bits(bits: [u64; 4]) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[u64; 4] {
        &self.bits
    }

    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Parallel lists of keypoints and descriptors.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn new(keypoints: Vec<Keypoint>, descriptors: Vec<Descriptor>) -> Self {
        assert_eq!(keypoints.len(), descriptors.len());
        Self {
            keypoints,
            descriptors,
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    /// Subset by index, preserving order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            keypoints: indices.iter().map(|&i| self.keypoints[i]).collect(),
            descriptors: indices.iter().map(|&i| self.descriptors[i]).collect(),
        }
    }

    /// Keeps only keypoints accepted by the predicate.
    pub fn retain_by(&self, mut keep: impl FnMut(&Keypoint) -> bool) -> FeatureSet {
        let indices: Vec<usize> = self
            .keypoints
            .iter()
            .enumerate()
            .filter(|(_, kp)| keep(kp))
            .map(|(i, _)| i)
            .collect();
        self.select(&indices)
    }
}

/// A descriptor match between two feature sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub query_index: usize,
    pub ref_index: usize,
    /// Hamming distance in bits.
    pub distance: u32,
}

/// Detects oriented FAST corners with binary descriptors over an image
/// pyramid, keeping at most `budget` keypoints (allocated geometrically
/// across levels). Deterministic for a fixed image.
pub fn detect_features(img: &GrayImage, budget: usize) -> Result<FeatureSet, FeatureError> {
    let (w, h) = img.dimensions();
    if w < 64 || h < 64 {
        return Err(FeatureError::ImageTooSmall(w, h));
    }
    if budget == 0 {
        return Ok(FeatureSet::default());
    }

    let budgets = per_level_budgets(budget);
    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    let mut level_img = img.clone();

    for level in 0..PYRAMID_LEVELS {
        let scale = PYRAMID_SCALE.powi(level as i32);
        if level > 0 {
            let lw = (w as f64 / scale).round() as u32;
            let lh = (h as f64 / scale).round() as u32;
            if lw < 2 * EDGE_MARGIN + 1 || lh < 2 * EDGE_MARGIN + 1 {
                break;
            }
            level_img = image::imageops::resize(
                img,
                lw,
                lh,
                image::imageops::FilterType::Triangle,
            );
        }

        let mut corners = detect_fast(&level_img, FAST_THRESHOLD, EDGE_MARGIN);
        if corners.is_empty() {
            corners = detect_fast(&level_img, FAST_THRESHOLD_FALLBACK, EDGE_MARGIN);
        }
        // Top responses first; index order breaks ties for determinism.
        corners.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
        });
        corners.truncate(budgets[level as usize]);

        let smoothed = box_blur(&level_img);
        for corner in corners {
            let angle = orientation(&level_img, corner.x, corner.y);
            let descriptor = steered_descriptor(&smoothed, corner.x, corner.y, angle);
            keypoints.push(Keypoint {
                position: PixelPoint::new(corner.x as f64 * scale, corner.y as f64 * scale),
                response: corner.score as f64,
                angle,
                octave: level,
            });
            descriptors.push(descriptor);
        }
    }

    Ok(FeatureSet::new(keypoints, descriptors))
}

/// Geometric per-level allocation: level `i` receives a share proportional
/// to `(1/scale)^i`, with the rounding remainder handed to level 0.
fn per_level_budgets(budget: usize) -> Vec<usize> {
    let q = 1.0 / PYRAMID_SCALE;
    let total: f64 = (0..PYRAMID_LEVELS).map(|i| q.powi(i as i32)).sum();
    let mut budgets: Vec<usize> = (0..PYRAMID_LEVELS)
        .map(|i| ((budget as f64) * q.powi(i as i32) / total).floor() as usize)
        .collect();
    let assigned: usize = budgets.iter().sum();
    budgets[0] += budget - assigned;
    budgets
}

/// Intensity-centroid orientation over a circular patch, in [0, 2π).
fn orientation(img: &GrayImage, x: u32, y: u32) -> f64 {
    let (w, h) = img.dimensions();
    let (xi, yi) = (x as i32, y as i32);
    let mut m01 = 0i64;
    let mut m10 = 0i64;
    for v in -HALF_PATCH..=HALF_PATCH {
        let u_max = (((HALF_PATCH * HALF_PATCH - v * v) as f64).sqrt()).floor() as i32;
        for u in -u_max..=u_max {
            let px = (xi + u).clamp(0, w as i32 - 1) as u32;
            let py = (yi + v).clamp(0, h as i32 - 1) as u32;
            let intensity = img.get_pixel(px, py).0[0] as i64;
            m10 += (u as i64) * intensity;
            m01 += (v as i64) * intensity;
        }
    }
    let angle = (m01 as f64).atan2(m10 as f64);
    if angle < 0.0 {
        angle + std::f64::consts::TAU
    } else {
        angle
    }
}

/// Steered binary tests: the sampling pattern is rotated by the keypoint
/// orientation before comparing intensities.
fn steered_descriptor(img: &GrayImage, x: u32, y: u32, angle: f64) -> Descriptor {
    let (w, h) = img.dimensions();
    let (sin_a, cos_a) = angle.sin_cos();
    let sample = |dx: i32, dy: i32| -> u8 {
        let rx = (cos_a * dx as f64 - sin_a * dy as f64).round() as i32;
        let ry = (sin_a * dx as f64 + cos_a * dy as f64).round() as i32;
        let px = (x as i32 + rx).clamp(0, w as i32 - 1) as u32;
        let py = (y as i32 + ry).clamp(0, h as i32 - 1) as u32;
        img.get_pixel(px, py).0[0]
    };
    let mut bits = [0u64; 4];
    for (i, &(x1, y1, x2, y2)) in DESCRIPTOR_PATTERN.iter().enumerate() {
        if sample(x1, y1) < sample(x2, y2) {
            bits[i / 64] |= 1u64 << (i % 64);
        }
    }
    Descriptor { bits }
}

/// 5×5 box blur; descriptor tests need a smoothed image.
fn box_blur(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let mut integral = vec![0u64; ((w + 1) * (h + 1)) as usize];
    let stride = (w + 1) as usize;
    for y in 0..h as usize {
        let mut row_sum = 0u64;
        for x in 0..w as usize {
            row_sum += img.as_raw()[y * w as usize + x] as u64;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row_sum;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(2) as usize;
        let y0 = y.saturating_sub(2) as usize;
        let x1 = (x + 3).min(w) as usize;
        let y1 = (y + 3).min(h) as usize;
        let sum = integral[y1 * stride + x1] + integral[y0 * stride + x0]
            - integral[y0 * stride + x1]
            - integral[y1 * stride + x0];
        let count = ((x1 - x0) * (y1 - y0)) as u64;
        image::Luma([((sum + count / 2) / count) as u8])
    })
}

struct QuadNode {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    indices: Vec<usize>,
}

impl QuadNode {
    fn splittable(&self) -> bool {
        self.indices.len() > 1 && self.x1 - self.x0 > 1.0 && self.y1 - self.y0 > 1.0
    }
}

/// Quadtree thinning: cells split until the leaf count reaches `target` (or
/// nothing splittable remains), then the best-response keypoint per leaf is
/// retained, ties broken by lower index. At most `target` keypoints survive.
pub fn uniformize(fs: &FeatureSet, img_size: (u32, u32), target: usize) -> FeatureSet {
    if target == 0 || fs.is_empty() {
        return FeatureSet::default();
    }
    if fs.len() <= target {
        // Still collapse same-cell duplicates only when over target; a set
        // already within budget passes through unchanged.
        return fs.clone();
    }

    let mut nodes = vec![QuadNode {
        x0: 0.0,
        y0: 0.0,
        x1: img_size.0 as f64,
        y1: img_size.1 as f64,
        indices: (0..fs.len()).collect(),
    }];

    while nodes.len() < target && nodes.iter().any(QuadNode::splittable) {
        let mut next = Vec::with_capacity(nodes.len() * 4);
        for node in nodes {
            if !node.splittable() {
                next.push(node);
                continue;
            }
            let mx = 0.5 * (node.x0 + node.x1);
            let my = 0.5 * (node.y0 + node.y1);
            let mut children = [
                QuadNode { x0: node.x0, y0: node.y0, x1: mx, y1: my, indices: Vec::new() },
                QuadNode { x0: mx, y0: node.y0, x1: node.x1, y1: my, indices: Vec::new() },
                QuadNode { x0: node.x0, y0: my, x1: mx, y1: node.y1, indices: Vec::new() },
                QuadNode { x0: mx, y0: my, x1: node.x1, y1: node.y1, indices: Vec::new() },
            ];
            for &i in &node.indices {
                let p = fs.keypoints()[i].position;
                let right = p.u >= mx;
                let bottom = p.v >= my;
                let child = match (right, bottom) {
                    (false, false) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (true, true) => 3,
                };
                children[child].indices.push(i);
            }
            for child in children {
                if !child.indices.is_empty() {
                    next.push(child);
                }
            }
        }
        next.sort_by(|a, b| (a.y0, a.x0).partial_cmp(&(b.y0, b.x0)).unwrap());
        nodes = next;
    }

    // Per-leaf argmax by response, lowest index on ties.
    let mut survivors: Vec<usize> = nodes
        .iter()
        .map(|node| {
            *node
                .indices
                .iter()
                .min_by(|&&a, &&b| {
                    fs.keypoints()[b]
                        .response
                        .partial_cmp(&fs.keypoints()[a].response)
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();

    if survivors.len() > target {
        survivors.sort_by(|&a, &b| {
            fs.keypoints()[b]
                .response
                .partial_cmp(&fs.keypoints()[a].response)
                .unwrap()
                .then(a.cmp(&b))
        });
        survivors.truncate(target);
    }
    survivors.sort_unstable();
    fs.select(&survivors)
}

/// Mutual-nearest-neighbor matching under Hamming distance, filtered by an
/// absolute distance ceiling. At most one match per keypoint on each side.
pub fn match_features(
    query: &FeatureSet,
    reference: &FeatureSet,
    max_distance: u32,
) -> Result<Vec<Match>, FeatureError> {
    if query.is_empty() || reference.is_empty() {
        return Err(FeatureError::EmptySet);
    }
    let nearest = |from: &FeatureSet, to: &FeatureSet, i: usize| -> (usize, u32) {
        let d = &from.descriptors()[i];
        let mut best = (0usize, u32::MAX);
        for (j, other) in to.descriptors().iter().enumerate() {
            let dist = d.hamming(other);
            if dist < best.1 {
                best = (j, dist);
            }
        }
        best
    };

    let ref_best: Vec<(usize, u32)> = (0..reference.len())
        .map(|j| nearest(reference, query, j))
        .collect();

    let mut matches = Vec::new();
    for i in 0..query.len() {
        let (j, dist) = nearest(query, reference, i);
        if dist <= max_distance && ref_best[j] == (i, dist) {
            matches.push(Match {
                query_index: i,
                ref_index: j,
                distance: dist,
            });
        }
    }
    Ok(matches)
}
