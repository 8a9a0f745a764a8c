use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{GridPosition, LabelStats, PerspectiveRing, RotationLabel};
use crate::raster::Image;
use crate::synthgen::{read_manifest, SynthError};

use super::{measure, MeasureConfig};

pub const REPORT_NAME: &str = "pose_report.csv";
pub const AGGREGATE_NAME: &str = "pose_aggregate.csv";

#[derive(Clone, Debug, PartialEq)]
pub enum PoseStatus {
    Ok,
    Failed(&'static str),
}

impl PoseStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoseStatus::Ok => "ok",
            PoseStatus::Failed(tag) => tag,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseRecord {
    pub path: String,
    pub rotation: RotationLabel,
    pub ring: PerspectiveRing,
    pub theta_measured: Option<f64>,
    pub ratio_measured: Option<f64>,
    pub status: PoseStatus,
}

/// Measures every image listed in `root/manifest.csv`, in manifest order.
pub fn measure_manifest(root: &Path, cfg: &MeasureConfig) -> Result<Vec<PoseRecord>, SynthError> {
    let rows = read_manifest(root)?;
    rows.par_iter()
        .map(|r| {
            let image = Image::load_rgb(&root.join(&r.path), None)?;
            let rotation: RotationLabel = r.rotation_label.parse()?;
            let ring = GridPosition::new(r.row, r.col)?.ring();
            let (theta, ratio, status) = match measure(&image, cfg) {
                Ok(m) => (Some(m.theta_deg), Some(m.ratio), PoseStatus::Ok),
                Err(e) => (None, None, PoseStatus::Failed(e.tag())),
            };
            Ok(PoseRecord {
                path: r.path.clone(),
                rotation,
                ring,
                theta_measured: theta,
                ratio_measured: ratio,
                status,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportLine {
    path: String,
    theta_measured: String,
    ratio_measured: String,
    detect_status: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_pose_report(records: &[PoseRecord], path: &Path) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(ReportLine {
            path: r.path.clone(),
            theta_measured: fmt_opt(r.theta_measured),
            ratio_measured: fmt_opt(r.ratio_measured),
            detect_status: r.status.as_str().to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `(path, theta_measured, ratio_measured, detect_status)`.
pub type ReportEntry = (String, Option<f64>, Option<f64>, String);

/// Rows of a pose report.
pub fn read_pose_report(
    path: &Path,
) -> Result<Vec<ReportEntry>, SynthError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for line in rdr.deserialize() {
        let l: ReportLine = line?;
        out.push((
            l.path,
            l.theta_measured.parse().ok(),
            l.ratio_measured.parse().ok(),
            l.detect_status,
        ));
    }
    Ok(out)
}

/// One row of the Min / Mean / SD / Max summary.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    /// `rotation` (|theta|, degrees) or `perspective` (|ratio|, percent).
    pub group: &'static str,
    pub label: &'static str,
    pub n: usize,
    pub stats: Option<LabelStats>,
}

fn stats(values: &[f64]) -> Option<LabelStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(LabelStats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        mean,
        sd,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Per rotation label and per ring statistics of successful measurements,
/// rows in label order (left wide ... right wide, negative far ... positive
/// far).
pub fn aggregate(records: &[PoseRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::with_capacity(10);
    for label in RotationLabel::ALL {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.rotation == label)
            .filter_map(|r| r.theta_measured.map(f64::abs))
            .collect();
        rows.push(AggregateRow {
            group: "rotation",
            label: label.title(),
            n: v.len(),
            stats: stats(&v),
        });
    }
    for ring in PerspectiveRing::ALL {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.ring == ring)
            .filter_map(|r| r.ratio_measured.map(|x| 100.0 * x.abs()))
            .collect();
        rows.push(AggregateRow {
            group: "perspective",
            label: ring.title(),
            n: v.len(),
            stats: stats(&v),
        });
    }
    rows
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "label", "n", "min", "mean", "sd", "max"])?;
    for r in rows {
        let cells = match r.stats {
            Some(s) => [s.min, s.mean, s.sd, s.max].map(|v| format!("{v:.6}")),
            None => Default::default(),
        };
        w.write_record(
            [r.group.to_string(), r.label.to_string(), r.n.to_string()]
                .into_iter()
                .chain(cells),
        )?;
    }
    w.flush()?;
    Ok(())
}
