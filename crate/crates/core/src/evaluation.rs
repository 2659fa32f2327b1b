//! Quantitative evaluation: point matching error for alignment quality and
//! IoU/F1 overlap metrics for change masks.
//!
//! PME is the mean L2 distance between annotated target points and their
//! partners warped by the estimated homography. Mask metrics follow the
//! usual pixel-set definitions, computed inside an optional region of
//! interest (typically the below-horizon annotation intersected with the
//! warp validity mask), with the static background class excluded from the
//! mIoU and macro-F1 averages.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{apply_homography, Homography};
use crate::robust::Correspondence;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("correspondence set must contain at least one finite pair")]
    EmptyCorrespondences,
    #[error("mask shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("label {0} is not valid for the {1} task")]
    UnknownLabel(u8, &'static str),
    #[error("missing annotations for pairs: {}", .0.join(", "))]
    MissingAnnotations(Vec<String>),
    #[error("mask data length {0} does not match {1}x{2}")]
    BadMaskLength(usize, u32, u32),
}

/// Annotated ground-truth point pairs: `source` in the query image,
/// `target` in the reference image.
#[derive(Debug, Clone, Default)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self, EvaluationError> {
        if pairs.is_empty()
            || pairs
                .iter()
                .any(|c| !c.source.is_finite() || !c.target.is_finite())
        {
            return Err(EvaluationError::EmptyCorrespondences);
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Point matching error: mean L2 distance in pixels between each target
/// point and its source warped by `h`. Sources mapped to infinity contribute
/// `infinity_penalty` (callers use the image diagonal) so averages stay
/// finite.
pub fn compute_pme(h: &Homography, cs: &CorrespondenceSet, infinity_penalty: f64) -> f64 {
    let total: f64 = cs
        .pairs()
        .iter()
        .map(|c| match apply_homography(h, &c.source) {
            Ok(warped) => warped.distance(&c.target),
            Err(_) => infinity_penalty,
        })
        .sum();
    total / cs.len() as f64
}

/// Per-pixel integer label mask. Schema: 0 = static, 1 = anomaly,
/// 2 = dynamic.
#[derive(Debug, Clone)]
pub struct LabelMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

pub const LABEL_STATIC: u8 = 0;
pub const LABEL_ANOMALY: u8 = 1;
pub const LABEL_DYNAMIC: u8 = 2;

impl LabelMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, EvaluationError> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(EvaluationError::BadMaskLength(data.len(), width, height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Which label schema applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskTask {
    /// Labels {0, 1}: dynamic objects count as background.
    Binary,
    /// Labels {0, 1, 2}.
    Multiclass,
}

impl MaskTask {
    fn name(&self) -> &'static str {
        match self {
            MaskTask::Binary => "binary",
            MaskTask::Multiclass => "multiclass",
        }
    }

    fn labels(&self) -> &'static [u8] {
        match self {
            MaskTask::Binary => &[LABEL_STATIC, LABEL_ANOMALY],
            MaskTask::Multiclass => &[LABEL_STATIC, LABEL_ANOMALY, LABEL_DYNAMIC],
        }
    }

    /// Classes entering mIoU / macro-F1 (static background excluded).
    fn scored_labels(&self) -> &'static [u8] {
        match self {
            MaskTask::Binary => &[LABEL_ANOMALY],
            MaskTask::Multiclass => &[LABEL_ANOMALY, LABEL_DYNAMIC],
        }
    }
}

/// Per-class pixel accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou: f64,
    pub f1: f64,
}

/// Metric report over one or more mask pairs. Classes absent from both
/// prediction and ground truth are excluded from the averages.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub per_class: BTreeMap<u8, ClassMetrics>,
    pub miou: Option<f64>,
    pub macro_f1: Option<f64>,
}

/// Accumulates TP/FP/FN over mask pairs before deriving a [`MetricReport`];
/// lets a run aggregate pixels across many pairs first.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    task: MaskTask,
    counts: BTreeMap<u8, (u64, u64, u64)>,
}

impl MetricAccumulator {
    pub fn new(task: MaskTask) -> Self {
        let counts = task.labels().iter().map(|&l| (l, (0, 0, 0))).collect();
        Self { task, counts }
    }

    /// Adds one pred/gt pair, counting only pixels where `roi` is nonzero.
    pub fn add(
        &mut self,
        pred: &LabelMask,
        gt: &LabelMask,
        roi: Option<&LabelMask>,
    ) -> Result<(), EvaluationError> {
        if pred.dimensions() != gt.dimensions() {
            let (pw, ph) = pred.dimensions();
            let (gw, gh) = gt.dimensions();
            return Err(EvaluationError::ShapeMismatch(pw, ph, gw, gh));
        }
        if let Some(roi) = roi {
            if roi.dimensions() != gt.dimensions() {
                let (rw, rh) = roi.dimensions();
                let (gw, gh) = gt.dimensions();
                return Err(EvaluationError::ShapeMismatch(rw, rh, gw, gh));
            }
        }
        let allowed = self.task.labels();
        for (i, (&p, &g)) in pred.data().iter().zip(gt.data().iter()).enumerate() {
            if let Some(roi) = roi {
                if roi.data()[i] == 0 {
                    continue;
                }
            }
            if !allowed.contains(&p) {
                return Err(EvaluationError::UnknownLabel(p, self.task.name()));
            }
            if !allowed.contains(&g) {
                return Err(EvaluationError::UnknownLabel(g, self.task.name()));
            }
            for &label in allowed {
                let entry = self.counts.get_mut(&label).unwrap();
                match (p == label, g == label) {
                    (true, true) => entry.0 += 1,
                    (true, false) => entry.1 += 1,
                    (false, true) => entry.2 += 1,
                    (false, false) => {}
                }
            }
        }
        Ok(())
    }

    pub fn report(&self) -> MetricReport {
        let mut per_class = BTreeMap::new();
        for (&label, &(tp, fp, fn_)) in &self.counts {
            let denom_iou = (tp + fp + fn_) as f64;
            let (iou, f1) = if denom_iou > 0.0 {
                (
                    tp as f64 / denom_iou,
                    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
                )
            } else {
                (0.0, 0.0)
            };
            per_class.insert(
                label,
                ClassMetrics {
                    tp,
                    fp,
                    fn_,
                    iou,
                    f1,
                },
            );
        }
        // Average over scored classes present in prediction or ground truth.
        let present: Vec<&ClassMetrics> = self
            .task
            .scored_labels()
            .iter()
            .map(|l| &per_class[l])
            .filter(|m| m.tp + m.fp + m.fn_ > 0)
            .collect();
        let (miou, macro_f1) = if present.is_empty() {
            (None, None)
        } else {
            let n = present.len() as f64;
            (
                Some(present.iter().map(|m| m.iou).sum::<f64>() / n),
                Some(present.iter().map(|m| m.f1).sum::<f64>() / n),
            )
        };
        MetricReport {
            per_class,
            miou,
            macro_f1,
        }
    }
}

/// IoU/F1 metrics for a single mask pair inside an optional ROI.
pub fn mask_metrics(
    pred: &LabelMask,
    gt: &LabelMask,
    task: MaskTask,
    roi: Option<&LabelMask>,
) -> Result<MetricReport, EvaluationError> {
    let mut acc = MetricAccumulator::new(task);
    acc.add(pred, gt, roi)?;
    Ok(acc.report())
}

/// One aligned pair ready for PME evaluation.
#[derive(Debug, Clone)]
pub struct AlignmentRecord {
    pub scene: String,
    pub pair_id: String,
    pub composed: Homography,
    /// Present when the pair went through the rotation-first strategy;
    /// drives the rotation-only ablation row.
    pub rotation_only: Option<Homography>,
}

/// One scene row of the PME table.
#[derive(Debug, Clone)]
pub struct ScenePme {
    pub scene: String,
    pub pairs: usize,
    pub adaptive_mean: f64,
    pub rotation_only_mean: Option<f64>,
}

/// Per-scene PME table with overall averages across scenes.
#[derive(Debug, Clone)]
pub struct PmeTable {
    pub scenes: Vec<ScenePme>,
    pub adaptive_average: f64,
    pub rotation_only_average: Option<f64>,
}

/// Evaluates a batch of aligned pairs against per-pair annotations keyed by
/// pair id. Scene means are averaged into the overall row, mirroring the
/// usual method-by-scene table layout.
pub fn evaluate_alignment_run(
    records: &[AlignmentRecord],
    annotations: &BTreeMap<String, CorrespondenceSet>,
    infinity_penalty: f64,
) -> Result<PmeTable, EvaluationError> {
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !annotations.contains_key(&r.pair_id))
        .map(|r| r.pair_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvaluationError::MissingAnnotations(missing));
    }
    if records.is_empty() {
        return Err(EvaluationError::EmptyCorrespondences);
    }

    let mut by_scene: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for record in records {
        let cs = &annotations[&record.pair_id];
        let entry = by_scene.entry(record.scene.clone()).or_default();
        entry
            .0
            .push(compute_pme(&record.composed, cs, infinity_penalty));
        if let Some(rot) = &record.rotation_only {
            entry.1.push(compute_pme(rot, cs, infinity_penalty));
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let scenes: Vec<ScenePme> = by_scene
        .iter()
        .map(|(scene, (adaptive, rotation))| ScenePme {
            scene: scene.clone(),
            pairs: adaptive.len(),
            adaptive_mean: mean(adaptive),
            rotation_only_mean: (!rotation.is_empty()).then(|| mean(rotation)),
        })
        .collect();

    let adaptive_average = mean(&scenes.iter().map(|s| s.adaptive_mean).collect::<Vec<_>>());
    let rotation_means: Vec<f64> = scenes.iter().filter_map(|s| s.rotation_only_mean).collect();
    let rotation_only_average = (!rotation_means.is_empty()).then(|| mean(&rotation_means));

    Ok(PmeTable {
        scenes,
        adaptive_average,
        rotation_only_average,
    })
}
