//! FAST-9 segment-test corner detection with non-maximum suppression.

use image::GrayImage;

/// Bresenham circle of radius 3 in clockwise order from 12 o'clock.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC_LENGTH: u32 = 9;

#[derive(Debug, Clone, Copy)]
pub struct FastCorner {
    pub x: u32,
    pub y: u32,
    /// Largest threshold at which the segment test still fires.
    pub score: u32,
}

fn is_corner(img: &GrayImage, x: u32, y: u32, threshold: u8) -> bool {
    let center = img.get_pixel(x, y).0[0] as i32;
    let t = threshold as i32;

    // Compass pre-test: a 9-long arc always covers two of the four compass
    // points, so fewer than two bright and two dark compass hits reject.
    let compass = [0usize, 4, 8, 12].map(|i| {
        let (dx, dy) = CIRCLE[i];
        img.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32).0[0] as i32
    });
    let bright_compass = compass.iter().filter(|&&p| p > center + t).count();
    let dark_compass = compass.iter().filter(|&&p| p < center - t).count();
    if bright_compass < 2 && dark_compass < 2 {
        return false;
    }

    let mut states = [0i8; 16];
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let p = img.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32).0[0] as i32;
        states[i] = if p > center + t {
            1
        } else if p < center - t {
            -1
        } else {
            0
        };
    }
    has_contiguous_arc(&states, 1) || has_contiguous_arc(&states, -1)
}

fn has_contiguous_arc(states: &[i8; 16], sign: i8) -> bool {
    let mut run = 0u32;
    // Wrap around once so arcs crossing index 0 are counted.
    for i in 0..32 {
        if states[i % 16] == sign {
            run += 1;
            if run >= ARC_LENGTH {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Corner score: summed intensity margin beyond the threshold over the
/// circle, taking the stronger of the bright and dark sides. Unlike the
/// max-threshold score this decreases away from the junction, so non-maximum
/// suppression localizes corners tightly.
fn corner_score(img: &GrayImage, x: u32, y: u32, threshold: u8) -> u32 {
    let center = img.get_pixel(x, y).0[0] as i32;
    let t = threshold as i32;
    let mut bright = 0u32;
    let mut dark = 0u32;
    for &(dx, dy) in CIRCLE.iter() {
        let p = img.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32).0[0] as i32;
        if p > center + t {
            bright += (p - center - t) as u32;
        } else if p < center - t {
            dark += (center - p - t) as u32;
        }
    }
    bright.max(dark)
}

/// Detects FAST-9 corners with threshold `threshold`, restricted to pixels
/// at least `margin` away from the border, and applies 3×3 non-maximum
/// suppression on the corner score (earlier scan order wins ties).
pub fn detect_fast(img: &GrayImage, threshold: u8, margin: u32) -> Vec<FastCorner> {
    let (w, h) = img.dimensions();
    let margin = margin.max(3);
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }

    let mut scores = vec![0u32; (w * h) as usize];
    let mut candidates = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            if is_corner(img, x, y, threshold) {
                let s = corner_score(img, x, y, threshold);
                scores[(y * w + x) as usize] = s;
                candidates.push((x, y, s));
            }
        }
    }

    candidates
        .into_iter()
        .filter(|&(x, y, s)| {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    let ns = scores[(ny * w as i64 + nx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if ns > s || (earlier && ns == s) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|(x, y, score)| FastCorner { x, y, score })
        .collect()
}
