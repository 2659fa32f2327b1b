//! Python bindings for the refalign core: homography construction and
//! application, robust estimation, the grid-coverage score, and the
//! evaluation metrics. Matrices cross the boundary as row-major 9-element
//! lists and point sets as lists of (x, y) tuples.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nalgebra::{Matrix3, Vector3};
use refalign::{
    apply_homography, compute_pme, dlt_homography, grid_coverage_score, mask_metrics,
    planar_homography_from_motion, ransac_homography, relative_motion, rotation_homography,
    select_strategy, CorrespondenceSet, Correspondence, FramePair, Homography, Intrinsics,
    LabelMask, PipelineConfig, PixelPoint, PlaneParams, Pose, RansacConfig, ScoreConfig,
};
use refalign::evaluation::MaskTask;

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn matrix_from_rows(rows: [f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(&rows)
}

fn pairs_to_correspondences(pairs: Vec<(f64, f64, f64, f64)>) -> Vec<Correspondence> {
    pairs
        .into_iter()
        .map(|(su, sv, tu, tv)| {
            Correspondence::new(PixelPoint::new(su, sv), PixelPoint::new(tu, tv))
        })
        .collect()
}

/// A 3x3 projective map between pixel planes, stored normalized.
#[pyclass(name = "Homography", skip_from_py_object)]
#[derive(Clone)]
struct PyHomography {
    inner: Homography,
}

#[pymethods]
impl PyHomography {
    /// Build from a row-major 9-element sequence; normalizes scale.
    #[new]
    fn new(rows: [f64; 9]) -> PyResult<Self> {
        Homography::from_row_major(&rows)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: Homography::identity(),
        }
    }

    /// Row-major matrix entries.
    fn to_list(&self) -> [f64; 9] {
        self.inner.to_row_major()
    }

    /// Apply to a point, returning (x, y).
    fn apply(&self, u: f64, v: f64) -> PyResult<(f64, f64)> {
        apply_homography(&self.inner, &PixelPoint::new(u, v))
            .map(|p| (p.u, p.v))
            .map_err(value_err)
    }

    /// Composition: (self @ other) applies `other` first, then `self`.
    fn compose(&self, other: &PyHomography) -> PyResult<PyHomography> {
        refalign::compose(&self.inner, &other.inner)
            .map(|inner| PyHomography { inner })
            .map_err(value_err)
    }

    fn inverse(&self) -> PyResult<PyHomography> {
        self.inner
            .inverse()
            .map(|inner| PyHomography { inner })
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Homography({:?})", self.inner.to_row_major())
    }
}

fn pose_from_parts(rotation: [f64; 9], translation: [f64; 3]) -> PyResult<Pose> {
    Pose::new(
        matrix_from_rows(rotation),
        Vector3::new(translation[0], translation[1], translation[2]),
    )
    .map_err(value_err)
}

fn intrinsics_from_parts(k: [f64; 4]) -> PyResult<Intrinsics> {
    Intrinsics::new(k[0], k[1], k[2], k[3]).map_err(value_err)
}

/// Relative motion of the query pose with respect to the reference in the
/// world frame: returns (rotation row-major, translation).
#[pyfunction]
#[pyo3(name = "relative_motion")]
fn py_relative_motion(
    ref_rotation: [f64; 9],
    ref_translation: [f64; 3],
    query_rotation: [f64; 9],
    query_translation: [f64; 3],
) -> PyResult<([f64; 9], [f64; 3])> {
    let reference = pose_from_parts(ref_rotation, ref_translation)?;
    let query = pose_from_parts(query_rotation, query_translation)?;
    let (r, t) = relative_motion(&reference, &query);
    let mut rows = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            rows[i * 3 + j] = r[(i, j)];
        }
    }
    Ok((rows, [t.x, t.y, t.z]))
}

/// Rotation-induced homography mapping query pixels to reference pixels.
/// Intrinsics are (fx, fy, cx, cy); poses are (rotation row-major,
/// camera center).
#[pyfunction]
#[pyo3(name = "rotation_homography")]
#[allow(clippy::too_many_arguments)]
fn py_rotation_homography(
    k1: [f64; 4],
    k2: [f64; 4],
    ref_rotation: [f64; 9],
    ref_translation: [f64; 3],
    query_rotation: [f64; 9],
    query_translation: [f64; 3],
) -> PyResult<PyHomography> {
    let reference = pose_from_parts(ref_rotation, ref_translation)?;
    let query = pose_from_parts(query_rotation, query_translation)?;
    rotation_homography(
        &intrinsics_from_parts(k1)?,
        &intrinsics_from_parts(k2)?,
        &reference,
        &query,
    )
    .map(|inner| PyHomography { inner })
    .map_err(value_err)
}

/// Plane-induced homography; the plane is (normal, depth) in the reference
/// camera frame.
#[pyfunction]
#[pyo3(name = "planar_homography")]
#[allow(clippy::too_many_arguments)]
fn py_planar_homography(
    k1: [f64; 4],
    k2: [f64; 4],
    ref_rotation: [f64; 9],
    ref_translation: [f64; 3],
    query_rotation: [f64; 9],
    query_translation: [f64; 3],
    plane_normal: [f64; 3],
    plane_depth: f64,
) -> PyResult<PyHomography> {
    let reference = pose_from_parts(ref_rotation, ref_translation)?;
    let query = pose_from_parts(query_rotation, query_translation)?;
    let plane = PlaneParams::new(
        Vector3::new(plane_normal[0], plane_normal[1], plane_normal[2]),
        plane_depth,
    )
    .map_err(value_err)?;
    planar_homography_from_motion(
        &intrinsics_from_parts(k1)?,
        &intrinsics_from_parts(k2)?,
        &reference,
        &query,
        &plane,
    )
    .map(|inner| PyHomography { inner })
    .map_err(value_err)
}

/// Least-squares DLT fit from (src_u, src_v, dst_u, dst_v) tuples.
#[pyfunction]
#[pyo3(name = "dlt_homography")]
fn py_dlt_homography(pairs: Vec<(f64, f64, f64, f64)>) -> PyResult<PyHomography> {
    dlt_homography(&pairs_to_correspondences(pairs))
        .map(|inner| PyHomography { inner })
        .map_err(value_err)
}

/// Multi-level grid-coverage score of a point set.
#[pyfunction]
#[pyo3(name = "grid_coverage_score", signature = (points, width, height, levels=4))]
fn py_grid_coverage_score(points: Vec<(f64, f64)>, width: u32, height: u32, levels: u32) -> u64 {
    let pts: Vec<PixelPoint> = points.into_iter().map(|(u, v)| PixelPoint::new(u, v)).collect();
    grid_coverage_score(&pts, (width, height), &ScoreConfig { levels })
}

/// RANSAC homography estimation with the grid-coverage selection score.
/// Returns (homography, inlier_indices, score, iterations).
#[pyfunction]
#[pyo3(name = "ransac_homography", signature = (
    pairs, width, height, threshold=4.0, max_iterations=2000, confidence=0.999, seed=0, levels=4
))]
#[allow(clippy::too_many_arguments)]
fn py_ransac_homography(
    pairs: Vec<(f64, f64, f64, f64)>,
    width: u32,
    height: u32,
    threshold: f64,
    max_iterations: usize,
    confidence: f64,
    seed: u64,
    levels: u32,
) -> PyResult<(PyHomography, Vec<usize>, u64, usize)> {
    let matches = pairs_to_correspondences(pairs);
    let rc = RansacConfig {
        inlier_threshold: threshold,
        max_iterations,
        confidence,
        seed,
    };
    let result = ransac_homography(&matches, (width, height), &rc, &ScoreConfig { levels })
        .map_err(value_err)?;
    Ok((
        PyHomography {
            inner: result.homography,
        },
        result.inliers,
        result.score,
        result.iterations_run,
    ))
}

/// Point matching error of a homography on annotated pairs.
#[pyfunction]
#[pyo3(name = "compute_pme", signature = (h, pairs, infinity_penalty=1e9))]
fn py_compute_pme(
    h: &PyHomography,
    pairs: Vec<(f64, f64, f64, f64)>,
    infinity_penalty: f64,
) -> PyResult<f64> {
    let cs = CorrespondenceSet::new(pairs_to_correspondences(pairs)).map_err(value_err)?;
    Ok(compute_pme(&h.inner, &cs, infinity_penalty))
}

/// Warp strategy for a translation gap under a gate: "rotation_then_planar"
/// or "planar_only".
#[pyfunction]
#[pyo3(name = "select_strategy", signature = (translation_gap, gate=0.03))]
fn py_select_strategy(translation_gap: f64, gate: f64) -> String {
    let pair = FramePair {
        query_index: 0,
        ref_index: 0,
        query_id: String::new(),
        ref_id: String::new(),
        translation_gap,
        rotation_gap: 0.0,
    };
    let cfg = PipelineConfig {
        translation_gate: gate,
        ..PipelineConfig::default()
    };
    match select_strategy(&pair, &cfg) {
        refalign::WarpStrategy::RotationThenPlanar => "rotation_then_planar".into(),
        refalign::WarpStrategy::PlanarOnly => "planar_only".into(),
    }
}

/// IoU/F1 metrics between flat label masks. Returns a dict with per-class
/// counts and the mIoU / macro-F1 averages (None when undefined).
#[pyfunction]
#[pyo3(name = "mask_metrics", signature = (pred, gt, width, height, task="multiclass", roi=None))]
fn py_mask_metrics(
    py: Python<'_>,
    pred: Vec<u8>,
    gt: Vec<u8>,
    width: u32,
    height: u32,
    task: &str,
    roi: Option<Vec<u8>>,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let task = match task {
        "binary" => MaskTask::Binary,
        "multiclass" => MaskTask::Multiclass,
        other => return Err(value_err(format!("unknown task '{other}'"))),
    };
    let pred = LabelMask::new(width, height, pred).map_err(value_err)?;
    let gt = LabelMask::new(width, height, gt).map_err(value_err)?;
    let roi = match roi {
        Some(data) => Some(LabelMask::new(width, height, data).map_err(value_err)?),
        None => None,
    };
    let report = mask_metrics(&pred, &gt, task, roi.as_ref()).map_err(value_err)?;

    let dict = pyo3::types::PyDict::new(py);
    let classes = pyo3::types::PyDict::new(py);
    for (label, m) in &report.per_class {
        let entry = pyo3::types::PyDict::new(py);
        entry.set_item("tp", m.tp)?;
        entry.set_item("fp", m.fp)?;
        entry.set_item("fn", m.fn_)?;
        entry.set_item("iou", m.iou)?;
        entry.set_item("f1", m.f1)?;
        classes.set_item(label, entry)?;
    }
    dict.set_item("per_class", classes)?;
    dict.set_item("miou", report.miou)?;
    dict.set_item("macro_f1", report.macro_f1)?;
    Ok(dict.unbind())
}

#[pymodule]
fn _refalign(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyHomography>()?;
    m.add_function(wrap_pyfunction!(py_relative_motion, m)?)?;
    m.add_function(wrap_pyfunction!(py_rotation_homography, m)?)?;
    m.add_function(wrap_pyfunction!(py_planar_homography, m)?)?;
    m.add_function(wrap_pyfunction!(py_dlt_homography, m)?)?;
    m.add_function(wrap_pyfunction!(py_grid_coverage_score, m)?)?;
    m.add_function(wrap_pyfunction!(py_ransac_homography, m)?)?;
    m.add_function(wrap_pyfunction!(py_compute_pme, m)?)?;
    m.add_function(wrap_pyfunction!(py_select_strategy, m)?)?;
    m.add_function(wrap_pyfunction!(py_mask_metrics, m)?)?;
    Ok(())
}
