//! Text file formats: trajectories, intrinsics, correspondence CSVs, run
//! manifests, and synthetic benchmark configs.
//!
//! Trajectories use the common one-line-per-frame convention extended with
//! an image identifier:
//!
//! ```text
//! # comment
//! timestamp tx ty tz qx qy qz qw image_id
//! ```
//!
//! The quaternion is the camera orientation (camera-to-world) and
//! `(tx, ty, tz)` the camera center, matching [`crate::geometry::Pose`].
//! Everything else is line-oriented `key: value` or plain CSV, chosen for
//! diffability.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::evaluation::CorrespondenceSet;
use crate::geometry::{Intrinsics, PixelPoint, Pose};
use crate::pipeline::{Frame, PipelineConfig, Trajectory};
use crate::robust::{Correspondence, RansacConfig, ScoreConfig};

#[derive(Debug, Error)]
pub enum ToolingError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: missing key '{key}'")]
    MissingKey { path: String, key: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
}

impl ToolingError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Parses a trajectory file. Quaternions must be within 1e-3 of unit norm
/// (they are renormalized on load) and timestamps must strictly increase.
pub fn parse_trajectory(path: &Path) -> Result<Trajectory, ToolingError> {
    let text = fs::read_to_string(path).map_err(|e| ToolingError::io(path, e))?;
    let mut frames = Vec::new();
    let mut last_timestamp = f64::NEG_INFINITY;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(ToolingError::parse(
                path,
                lineno + 1,
                format!("expected 9 fields `timestamp tx ty tz qx qy qz qw image_id`, got {}", fields.len()),
            ));
        }
        let mut values = [0.0f64; 8];
        for (i, field) in fields[..8].iter().enumerate() {
            values[i] = field.parse().map_err(|_| {
                ToolingError::parse(path, lineno + 1, format!("bad number '{field}'"))
            })?;
        }
        let [timestamp, tx, ty, tz, qx, qy, qz, qw] = values;
        if timestamp <= last_timestamp {
            return Err(ToolingError::parse(
                path,
                lineno + 1,
                format!("timestamp {timestamp} does not increase"),
            ));
        }
        last_timestamp = timestamp;

        let quat = Quaternion::new(qw, qx, qy, qz);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
            return Err(ToolingError::parse(
                path,
                lineno + 1,
                format!("quaternion norm {norm} deviates from 1 by more than 1e-3"),
            ));
        }
        let rotation = UnitQuaternion::from_quaternion(quat)
            .to_rotation_matrix()
            .into_inner();
        let pose = Pose::new(rotation, Vector3::new(tx, ty, tz)).map_err(|e| {
            ToolingError::parse(path, lineno + 1, format!("invalid pose: {e}"))
        })?;
        frames.push(Frame {
            timestamp,
            pose,
            image_id: fields[8].to_string(),
        });
    }
    Trajectory::new(frames).map_err(|e| ToolingError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn serialize_trajectory(trajectory: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw image_id\n");
    for frame in trajectory.frames() {
        let q = UnitQuaternion::from_matrix(frame.pose.rotation());
        let t = frame.pose.translation();
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            frame.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w, frame.image_id
        )
        .unwrap();
    }
    out
}

fn parse_key_values(path: &Path, text: &str) -> Result<BTreeMap<String, String>, ToolingError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| {
            ToolingError::parse(path, lineno + 1, "expected `key: value`")
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get_f64(
    map: &BTreeMap<String, String>,
    path: &Path,
    key: &str,
) -> Result<f64, ToolingError> {
    let raw = map.get(key).ok_or_else(|| ToolingError::MissingKey {
        path: path.display().to_string(),
        key: key.to_string(),
    })?;
    raw.parse().map_err(|_| ToolingError::Invalid {
        path: path.display().to_string(),
        message: format!("bad number for '{key}': {raw}"),
    })
}

fn get_f64_or(
    map: &BTreeMap<String, String>,
    path: &Path,
    key: &str,
    default: f64,
) -> Result<f64, ToolingError> {
    if map.contains_key(key) {
        get_f64(map, path, key)
    } else {
        Ok(default)
    }
}

/// Parses an intrinsics file with `fx: / fy: / cx: / cy:` keys.
pub fn parse_intrinsics(path: &Path) -> Result<Intrinsics, ToolingError> {
    let text = fs::read_to_string(path).map_err(|e| ToolingError::io(path, e))?;
    let map = parse_key_values(path, &text)?;
    let fx = get_f64(&map, path, "fx")?;
    let fy = get_f64(&map, path, "fy")?;
    let cx = get_f64(&map, path, "cx")?;
    let cy = get_f64(&map, path, "cy")?;
    Intrinsics::new(fx, fy, cx, cy).map_err(|e| ToolingError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn serialize_intrinsics(k: &Intrinsics) -> String {
    format!("fx: {}\nfy: {}\ncx: {}\ncy: {}\n", k.fx, k.fy, k.cx, k.cy)
}

/// Parses a correspondence CSV `u_src,v_src,u_dst,v_dst`, one pair per line,
/// header optional.
pub fn parse_correspondences(path: &Path) -> Result<CorrespondenceSet, ToolingError> {
    let text = fs::read_to_string(path).map_err(|e| ToolingError::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.chars().any(|c| c.is_ascii_alphabetic()) {
            continue; // header row
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(ToolingError::parse(
                path,
                lineno + 1,
                format!("expected 4 comma-separated values, got {}", fields.len()),
            ));
        }
        let mut values = [0.0f64; 4];
        for (i, field) in fields.iter().enumerate() {
            values[i] = field.parse().map_err(|_| {
                ToolingError::parse(path, lineno + 1, format!("bad number '{field}'"))
            })?;
        }
        pairs.push(Correspondence::new(
            PixelPoint::new(values[0], values[1]),
            PixelPoint::new(values[2], values[3]),
        ));
    }
    CorrespondenceSet::new(pairs).map_err(|e| ToolingError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn serialize_correspondences(cs: &CorrespondenceSet) -> String {
    let mut out = String::from("u_src,v_src,u_dst,v_dst\n");
    for c in cs.pairs() {
        writeln!(out, "{},{},{},{}", c.source.u, c.source.v, c.target.u, c.target.v).unwrap();
    }
    out
}

/// A resolved run manifest: inputs, output directory, and pipeline config.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scene: String,
    pub ref_trajectory: PathBuf,
    pub query_trajectory: PathBuf,
    pub ref_intrinsics: PathBuf,
    pub query_intrinsics: PathBuf,
    pub ref_images: PathBuf,
    pub query_images: PathBuf,
    pub annotations: Option<PathBuf>,
    pub output: PathBuf,
    pub config: PipelineConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ToolingError> {
        let text = fs::read_to_string(path).map_err(|e| ToolingError::io(path, e))?;
        let map = parse_key_values(path, &text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |key: &str| -> Result<PathBuf, ToolingError> {
            let raw = map.get(key).ok_or_else(|| ToolingError::MissingKey {
                path: path.display().to_string(),
                key: key.to_string(),
            })?;
            Ok(base.join(raw))
        };
        let require_exists = |p: PathBuf| -> Result<PathBuf, ToolingError> {
            if p.exists() {
                Ok(p)
            } else {
                Err(ToolingError::MissingPath(p))
            }
        };

        let config = PipelineConfig {
            translation_gate: get_f64_or(&map, path, "translation_gate", 0.03)?,
            feature_budget: get_f64_or(&map, path, "feature_budget", 1000.0)? as usize,
            match_max_distance: get_f64_or(&map, path, "match_max_distance", 64.0)? as u32,
            ransac: RansacConfig {
                inlier_threshold: get_f64_or(&map, path, "ransac_threshold", 4.0)?,
                max_iterations: get_f64_or(&map, path, "ransac_max_iterations", 2000.0)? as usize,
                confidence: get_f64_or(&map, path, "ransac_confidence", 0.999)?,
                seed: get_f64_or(&map, path, "seed", 0.0)? as u64,
            },
            score: ScoreConfig {
                levels: get_f64_or(&map, path, "score_levels", 4.0)? as u32,
            },
        };
        if config.translation_gate <= 0.0 {
            return Err(ToolingError::Invalid {
                path: path.display().to_string(),
                message: "translation_gate must be positive".into(),
            });
        }
        if config.ransac.inlier_threshold <= 0.0
            || !(0.0..1.0).contains(&config.ransac.confidence)
            || config.ransac.confidence <= 0.0
        {
            return Err(ToolingError::Invalid {
                path: path.display().to_string(),
                message: "ransac threshold must be positive and confidence in (0, 1)".into(),
            });
        }

        Ok(Self {
            scene: map.get("scene").cloned().unwrap_or_else(|| "default".into()),
            ref_trajectory: require_exists(resolve("ref_trajectory")?)?,
            query_trajectory: require_exists(resolve("query_trajectory")?)?,
            ref_intrinsics: require_exists(resolve("ref_intrinsics")?)?,
            query_intrinsics: require_exists(resolve("query_intrinsics")?)?,
            ref_images: require_exists(resolve("ref_images")?)?,
            query_images: require_exists(resolve("query_images")?)?,
            annotations: match map.get("annotations") {
                Some(raw) => Some(require_exists(base.join(raw))?),
                None => None,
            },
            output: resolve("output")?,
            config,
        })
    }
}

/// Synthetic benchmark generator settings.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub motion: crate::tooling::synth::MotionModel,
    /// Relative rotation magnitude for pure-rotation pairs, degrees.
    pub rotation_deg: f64,
    /// Baseline for planar pairs, meters.
    pub baseline_m: f64,
    /// Plane normal in the reference camera frame (normalized on use).
    pub plane_normal: Vector3<f64>,
    /// Plane depth from the reference camera, meters.
    pub plane_depth: f64,
    /// Illumination perturbation: per-pair gamma drawn from this range.
    pub gamma_range: (f64, f64),
    /// Outlier fraction used when planting synthetic match sets.
    pub outlier_fraction: f64,
    /// Annotation grid (rows, cols); rows*cols points per pair.
    pub grid: (u32, u32),
    /// Rotation noise injected into stored query poses, degrees.
    pub pose_rot_noise_deg: f64,
    /// Translation noise injected into stored query poses, meters.
    pub pose_trans_noise_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            seed: 0,
            motion: crate::tooling::synth::MotionModel::Mixed,
            rotation_deg: 4.0,
            baseline_m: 0.5,
            plane_normal: Vector3::new(0.15, -0.25, 1.0),
            plane_depth: 4.0,
            gamma_range: (0.8, 1.25),
            outlier_fraction: 0.4,
            grid: (2, 5),
            pose_rot_noise_deg: 0.3,
            pose_trans_noise_m: 0.002,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, ToolingError> {
        let text = fs::read_to_string(path).map_err(|e| ToolingError::io(path, e))?;
        let map = parse_key_values(path, &text)?;
        let defaults = Self::default();
        let motion = match map.get("motion").map(String::as_str) {
            None => defaults.motion,
            Some("pure-rotation") => crate::tooling::synth::MotionModel::PureRotation,
            Some("planar-baseline") => crate::tooling::synth::MotionModel::PlanarBaseline,
            Some("mixed") => crate::tooling::synth::MotionModel::Mixed,
            Some(other) => {
                return Err(ToolingError::Invalid {
                    path: path.display().to_string(),
                    message: format!(
                        "unknown motion model '{other}' (expected pure-rotation, planar-baseline, or mixed)"
                    ),
                })
            }
        };
        let config = Self {
            width: get_f64_or(&map, path, "width", defaults.width as f64)? as u32,
            height: get_f64_or(&map, path, "height", defaults.height as f64)? as u32,
            seed: get_f64_or(&map, path, "seed", defaults.seed as f64)? as u64,
            motion,
            rotation_deg: get_f64_or(&map, path, "rotation_deg", defaults.rotation_deg)?,
            baseline_m: get_f64_or(&map, path, "baseline_m", defaults.baseline_m)?,
            plane_normal: Vector3::new(
                get_f64_or(&map, path, "plane_nx", defaults.plane_normal.x)?,
                get_f64_or(&map, path, "plane_ny", defaults.plane_normal.y)?,
                get_f64_or(&map, path, "plane_nz", defaults.plane_normal.z)?,
            ),
            plane_depth: get_f64_or(&map, path, "plane_d", defaults.plane_depth)?,
            gamma_range: (
                get_f64_or(&map, path, "gamma_min", defaults.gamma_range.0)?,
                get_f64_or(&map, path, "gamma_max", defaults.gamma_range.1)?,
            ),
            outlier_fraction: get_f64_or(&map, path, "outlier_fraction", defaults.outlier_fraction)?,
            grid: (
                get_f64_or(&map, path, "grid_rows", defaults.grid.0 as f64)? as u32,
                get_f64_or(&map, path, "grid_cols", defaults.grid.1 as f64)? as u32,
            ),
            pose_rot_noise_deg: get_f64_or(
                &map,
                path,
                "pose_rot_noise_deg",
                defaults.pose_rot_noise_deg,
            )?,
            pose_trans_noise_m: get_f64_or(
                &map,
                path,
                "pose_trans_noise_m",
                defaults.pose_trans_noise_m,
            )?,
        };
        config.validate().map_err(|message| ToolingError::Invalid {
            path: path.display().to_string(),
            message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width < 128 || self.height < 128 {
            return Err(format!(
                "image size {}x{} below the 128x128 minimum",
                self.width, self.height
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(format!("outlier_fraction {} not in [0, 1)", self.outlier_fraction));
        }
        if self.gamma_range.0 <= 0.0 || self.gamma_range.1 < self.gamma_range.0 {
            return Err("gamma range must be positive and ordered".into());
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err("annotation grid must be non-empty".into());
        }
        if self.plane_depth <= 0.0 {
            return Err("plane depth must be positive".into());
        }
        Ok(())
    }
}
