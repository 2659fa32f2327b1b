//! Line-delimited result records for alignment runs.
//!
//! One record per pair, `key=value` tokens on a single line. Numbers use
//! the shortest round-trip decimal form so re-parsing is exact and files
//! diff cleanly. Timestamps are confined to a `# generated-at` header line;
//! everything below it is deterministic for a fixed seed.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::Homography;
use crate::pipeline::WarpStrategy;

use super::formats::ToolingError;

/// Outcome of one pair in a batch run.
#[derive(Debug, Clone, PartialEq)]
pub enum PairStatus {
    Ok,
    Failed { reason: String },
}

/// Serialized form of one aligned (or failed) pair.
#[derive(Debug, Clone)]
pub struct AlignRecord {
    pub pair_id: String,
    pub ref_id: String,
    pub scene: String,
    pub status: PairStatus,
    pub strategy: Option<WarpStrategy>,
    pub inliers: usize,
    pub score: u64,
    pub image_size: (u32, u32),
    pub composed_h: Option<Homography>,
    pub rotation_h: Option<Homography>,
}

fn strategy_name(s: WarpStrategy) -> &'static str {
    match s {
        WarpStrategy::RotationThenPlanar => "rotation_then_planar",
        WarpStrategy::PlanarOnly => "planar_only",
    }
}

fn parse_strategy(raw: &str) -> Option<WarpStrategy> {
    match raw {
        "rotation_then_planar" => Some(WarpStrategy::RotationThenPlanar),
        "planar_only" => Some(WarpStrategy::PlanarOnly),
        _ => None,
    }
}

fn format_h(h: &Homography) -> String {
    h.to_row_major()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_h(raw: &str) -> Option<Homography> {
    let values: Vec<f64> = raw.split(',').map(|v| v.parse().ok()).collect::<Option<_>>()?;
    let arr: [f64; 9] = values.try_into().ok()?;
    Homography::from_row_major(&arr).ok()
}

/// Renders records below a header; the `generated-at` line is the only
/// nondeterministic content.
pub fn write_align_records(records: &[AlignRecord], generated_at_unix: u64) -> String {
    let mut out = String::new();
    writeln!(out, "# refalign align records").unwrap();
    writeln!(out, "# generated-at {generated_at_unix}").unwrap();
    for r in records {
        write!(
            out,
            "pair={} ref={} scene={} size={}x{}",
            r.pair_id, r.ref_id, r.scene, r.image_size.0, r.image_size.1
        )
        .unwrap();
        match &r.status {
            PairStatus::Ok => {
                write!(out, " status=ok").unwrap();
                if let Some(strategy) = r.strategy {
                    write!(out, " strategy={}", strategy_name(strategy)).unwrap();
                }
                write!(out, " inliers={} score={}", r.inliers, r.score).unwrap();
                if let Some(h) = &r.composed_h {
                    write!(out, " h={}", format_h(h)).unwrap();
                }
                if let Some(h) = &r.rotation_h {
                    write!(out, " rot_h={}", format_h(h)).unwrap();
                }
            }
            PairStatus::Failed { reason } => {
                write!(out, " status=failed reason={}", reason.replace(' ', "_")).unwrap();
            }
        }
        writeln!(out).unwrap();
    }
    out
}

/// Parses a record file produced by [`write_align_records`].
pub fn read_align_records(path: &Path, text: &str) -> Result<Vec<AlignRecord>, ToolingError> {
    let mut records = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = std::collections::BTreeMap::new();
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| ToolingError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("bad token '{token}'"),
            })?;
            fields.insert(key.to_string(), value.to_string());
        }
        let get = |key: &str| -> Result<String, ToolingError> {
            fields.get(key).cloned().ok_or_else(|| ToolingError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("missing field '{key}'"),
            })
        };
        let size_raw = get("size")?;
        let (w, h) = size_raw
            .split_once('x')
            .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)))
            .ok_or_else(|| ToolingError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("bad size '{size_raw}'"),
            })?;
        let status = match get("status")?.as_str() {
            "ok" => PairStatus::Ok,
            "failed" => PairStatus::Failed {
                reason: fields.get("reason").cloned().unwrap_or_default(),
            },
            other => {
                return Err(ToolingError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad status '{other}'"),
                })
            }
        };
        records.push(AlignRecord {
            pair_id: get("pair")?,
            ref_id: get("ref")?,
            scene: get("scene")?,
            status,
            strategy: fields.get("strategy").and_then(|s| parse_strategy(s)),
            inliers: fields
                .get("inliers")
                .and_then(|v| v.parse().ok())
                .unwrap_or(0),
            score: fields.get("score").and_then(|v| v.parse().ok()).unwrap_or(0),
            image_size: (w, h),
            composed_h: fields.get("h").and_then(|v| parse_h(v)),
            rotation_h: fields.get("rot_h").and_then(|v| parse_h(v)),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn records_roundtrip_exactly() {
        let h = Homography::from_matrix(Matrix3::new(
            1.000123, 0.01, 5.25, -0.02, 0.99, -3.5, 1.25e-5, -7.5e-6, 1.0,
        ))
        .unwrap();
        let records = vec![
            AlignRecord {
                pair_id: "000001".into(),
                ref_id: "000001".into(),
                scene: "synthetic".into(),
                status: PairStatus::Ok,
                strategy: Some(WarpStrategy::RotationThenPlanar),
                inliers: 412,
                score: 1234,
                image_size: (640, 360),
                composed_h: Some(h),
                rotation_h: Some(Homography::identity()),
            },
            AlignRecord {
                pair_id: "000002".into(),
                ref_id: "000002".into(),
                scene: "synthetic".into(),
                status: PairStatus::Failed {
                    reason: "not enough matches".into(),
                },
                strategy: None,
                inliers: 0,
                score: 0,
                image_size: (640, 360),
                composed_h: None,
                rotation_h: None,
            },
        ];
        let text = write_align_records(&records, 12345);
        let parsed = read_align_records(Path::new("mem"), &text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].pair_id, "000001");
        assert_eq!(parsed[0].strategy, Some(WarpStrategy::RotationThenPlanar));
        assert_eq!(parsed[0].inliers, 412);
        assert_eq!(
            parsed[0].composed_h.as_ref().unwrap().to_row_major(),
            h.to_row_major()
        );
        assert!(matches!(parsed[1].status, PairStatus::Failed { .. }));

        // Re-rendering with a different timestamp only changes the header.
        let again = write_align_records(&records, 99999);
        let body = |s: &str| {
            s.lines()
                .filter(|l| !l.starts_with('#'))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(body(&text), body(&again));
        assert_ne!(text, again);
    }
}
