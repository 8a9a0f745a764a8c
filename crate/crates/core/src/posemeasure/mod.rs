//! Edge-based pose measurement: side-edge lines, in-plane rotation from the
//! left edge, and the bottom/top width ratio between the two edges.

mod batch;

pub use batch::{
    aggregate, measure_manifest, read_pose_report, write_aggregate, write_pose_report,
    AggregateRow, PoseRecord, PoseStatus, ReportEntry, AGGREGATE_NAME, REPORT_NAME,
};

use std::fmt;

use thiserror::Error;

use crate::raster::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeSide {
    Left,
    Right,
}

impl fmt::Display for EdgeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeSide::Left => "left",
            EdgeSide::Right => "right",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PoseError {
    #[error("image has no horizontal gradient")]
    Uniform,
    #[error("{side} edge: only {support} supporting rows")]
    InsufficientSupport { side: EdgeSide, support: usize },
    #[error("{side} edge: residual {rms:.2} px exceeds limit")]
    PoorFit { side: EdgeSide, rms: f64 },
    #[error("{side} edge: gradient polarity agrees on only {fraction:.0}% of rows")]
    MixedPolarity { side: EdgeSide, fraction: f64 },
    #[error("edges share no supported rows")]
    NoOverlap,
    #[error("top width {0:.3} px is degenerate")]
    Degenerate(f64),
}

impl PoseError {
    /// Short machine-readable tag for reports.
    pub fn tag(&self) -> &'static str {
        match self {
            PoseError::Uniform => "uniform",
            PoseError::InsufficientSupport { .. } => "insufficient_support",
            PoseError::PoorFit { .. } => "poor_fit",
            PoseError::MixedPolarity { .. } => "mixed_polarity",
            PoseError::NoOverlap => "no_overlap",
            PoseError::Degenerate(_) => "degenerate",
        }
    }
}

pub type Result<T, E = PoseError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureConfig {
    /// Peak threshold as a fraction of the image's largest |gradient|.
    pub gradient_threshold: f64,
    pub min_support: usize,
    /// Largest accepted RMS point-to-line distance, pixels.
    pub max_rms: f64,
    /// Smallest accepted share of edge points with the majority polarity.
    pub min_polarity: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            gradient_threshold: 0.3,
            min_support: 10,
            max_rms: 2.0,
            min_polarity: 0.8,
        }
    }
}

/// Fitted side edge `x = a + b * y` in pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLine {
    pub side: EdgeSide,
    pub a: f64,
    pub b: f64,
    /// Number of rows that survived outlier rejection.
    pub support: usize,
    /// RMS perpendicular distance of the inliers, pixels.
    pub residual: f64,
    /// First and last supporting row.
    pub rows: (f64, f64),
}

impl EdgeLine {
    pub fn x_at(&self, y: f64) -> f64 {
        self.a + self.b * y
    }

    /// A point on the line (at its lowest supported row).
    pub fn point(&self) -> (f64, f64) {
        (self.x_at(self.rows.1), self.rows.1)
    }

    /// Unit direction pointing from the bottom of the image to the top.
    pub fn direction(&self) -> (f64, f64) {
        let n = (1.0 + self.b * self.b).sqrt();
        (-self.b / n, -1.0 / n)
    }

    /// Signed angle from vertical, degrees, positive in the sense of
    /// [`crate::geometry::rotation_homography`].
    pub fn angle_deg(&self) -> f64 {
        let (dx, dy) = self.direction();
        dx.atan2(-dy).to_degrees()
    }
}

#[derive(Clone, Copy, Debug)]
struct EdgePoint {
    x: f64,
    y: f64,
    positive: bool,
}

/// Horizontal central difference of the channel-mean image.
fn horizontal_gradient(image: &Image) -> (Vec<f64>, f64) {
    let gray = image.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let px = gray.data();
    let mut g = vec![0.0; w * h];
    let mut max = 0.0f64;
    for y in 0..h {
        for x in 1..w.saturating_sub(1) {
            let v = (px[y * w + x + 1] as f64 - px[y * w + x - 1] as f64) / 2.0;
            g[y * w + x] = v;
            max = max.max(v.abs());
        }
    }
    (g, max)
}

/// Sub-pixel offset of a parabola's vertex through three samples.
fn parabolic(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if den.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (l - r) / den).clamp(-0.5, 0.5)
    }
}

/// First and last above-threshold |gradient| peak in every row.
fn row_extremes(image: &Image, cfg: &MeasureConfig) -> Result<(Vec<EdgePoint>, Vec<EdgePoint>)> {
    let (g, max) = horizontal_gradient(image);
    if max < 1e-6 {
        return Err(PoseError::Uniform);
    }
    let thr = cfg.gradient_threshold * max;
    let w = image.width();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (y, row) in g.chunks(w).enumerate() {
        let mag = |x: usize| row[x].abs();
        let peak = |x: usize| {
            mag(x) >= thr && mag(x) >= mag(x - 1) && mag(x) > mag(x + 1)
        };
        let point = |x: usize| EdgePoint {
            x: x as f64 + parabolic(mag(x - 1), mag(x), mag(x + 1)),
            y: y as f64,
            positive: row[x] > 0.0,
        };
        if w < 4 {
            break;
        }
        if let Some(x) = (1..w - 1).find(|&x| peak(x)) {
            left.push(point(x));
        }
        if let Some(x) = (1..w - 1).rev().find(|&x| peak(x)) {
            right.push(point(x));
        }
    }
    Ok((left, right))
}

struct Fit {
    a: f64,
    b: f64,
    inliers: Vec<EdgePoint>,
    rms: f64,
}

fn least_squares(pts: &[EdgePoint]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let syy: f64 = pts.iter().map(|p| (p.y - my).powi(2)).sum();
    if syy < 1e-12 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.y - my) * (p.x - mx)).sum();
    let b = sxy / syy;
    Some((mx - b * my, b))
}

fn perpendicular_rms(pts: &[EdgePoint], a: f64, b: f64) -> f64 {
    let s: f64 = pts.iter().map(|p| (p.x - a - b * p.y).powi(2)).sum();
    (s / pts.len() as f64 / (1.0 + b * b)).sqrt()
}

/// Least squares, one pass dropping points beyond 2 sigma, refit.
fn robust_fit(pts: &[EdgePoint]) -> Option<Fit> {
    let (a, b) = least_squares(pts)?;
    let sigma = perpendicular_rms(pts, a, b);
    let scale = (1.0 + b * b).sqrt();
    let inliers: Vec<EdgePoint> = if sigma > 1e-9 {
        pts.iter()
            .copied()
            .filter(|p| ((p.x - a - b * p.y) / scale).abs() <= 2.0 * sigma)
            .collect()
    } else {
        pts.to_vec()
    };
    let (a, b) = least_squares(&inliers)?;
    let rms = perpendicular_rms(&inliers, a, b);
    Some(Fit { a, b, inliers, rms })
}

/// Silhouettes whose corner sits further than this from the chord are
/// treated as two edges.
const CORNER_DEPTH: f64 = 3.0;

/// Index and distance of the point farthest from the segment joining the
/// first and last points: the corner of a two-edge silhouette.
fn farthest_from_chord(pts: &[EdgePoint]) -> (usize, f64) {
    let (p, q) = (pts[0], pts[pts.len() - 1]);
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    let len = (dx * dx + dy * dy).sqrt().max(1e-12);
    pts.iter()
        .enumerate()
        .map(|(i, e)| (i, (dy * (e.x - p.x) - dx * (e.y - p.y)).abs() / len))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0))
}

/// Fits the whole silhouette, or, when it bends at a corner, the
/// better-supported of its two halves that stays within the residual limit.
fn fit_side(pts: &[EdgePoint], side: EdgeSide, cfg: &MeasureConfig) -> Result<EdgeLine> {
    if pts.len() < cfg.min_support {
        return Err(PoseError::InsufficientSupport {
            side,
            support: pts.len(),
        });
    }
    let (corner, depth) = farthest_from_chord(pts);
    let candidates = if depth > CORNER_DEPTH {
        vec![&pts[..=corner], &pts[corner..]]
    } else {
        vec![pts]
    };
    let fits: Vec<Fit> = candidates.iter().filter_map(|c| robust_fit(c)).collect();
    let best = fits
        .iter()
        .filter(|f| f.inliers.len() >= cfg.min_support && f.rms <= cfg.max_rms)
        .max_by(|p, q| {
            p.inliers
                .len()
                .cmp(&q.inliers.len())
                .then(q.rms.total_cmp(&p.rms))
        });
    let fit = match best {
        Some(f) => f,
        None => {
            let supported = fits.iter().filter(|f| f.inliers.len() >= cfg.min_support);
            return Err(match supported.min_by(|p, q| p.rms.total_cmp(&q.rms)) {
                Some(f) => PoseError::PoorFit { side, rms: f.rms },
                None => PoseError::InsufficientSupport {
                    side,
                    support: fits.iter().map(|f| f.inliers.len()).max().unwrap_or(0),
                },
            });
        }
    };
    let positive = fit.inliers.iter().filter(|p| p.positive).count();
    let agree = positive.max(fit.inliers.len() - positive) as f64 / fit.inliers.len() as f64;
    if agree < cfg.min_polarity {
        return Err(PoseError::MixedPolarity {
            side,
            fraction: 100.0 * agree,
        });
    }
    let (y0, y1) = fit
        .inliers
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    Ok(EdgeLine {
        side,
        a: fit.a,
        b: fit.b,
        support: fit.inliers.len(),
        residual: fit.rms,
        rows: (y0, y1),
    })
}

/// Left and right board edges. Fails, naming the side, when either edge
/// lacks support, fits poorly, or has inconsistent gradient polarity.
pub fn detect_side_edges_with(image: &Image, cfg: &MeasureConfig) -> Result<(EdgeLine, EdgeLine)> {
    let (l, r) = row_extremes(image, cfg)?;
    Ok((
        fit_side(&l, EdgeSide::Left, cfg)?,
        fit_side(&r, EdgeSide::Right, cfg)?,
    ))
}

pub fn detect_side_edges(image: &Image, gradient_threshold: f64) -> Result<(EdgeLine, EdgeLine)> {
    let cfg = MeasureConfig {
        gradient_threshold,
        ..MeasureConfig::default()
    };
    detect_side_edges_with(image, &cfg)
}

/// Signed deviation of the left edge from vertical, degrees.
pub fn measure_rotation(image: &Image) -> Result<f64> {
    let cfg = MeasureConfig::default();
    let (l, _) = row_extremes(image, &cfg)?;
    Ok(fit_side(&l, EdgeSide::Left, &cfg)?.angle_deg())
}

/// `(w_bottom - w_top) / w_top` between the fitted edges at the first and
/// last row both support.
pub fn ratio_between(left: &EdgeLine, right: &EdgeLine) -> Result<f64> {
    let y0 = left.rows.0.max(right.rows.0);
    let y1 = left.rows.1.min(right.rows.1);
    if y1 <= y0 {
        return Err(PoseError::NoOverlap);
    }
    let w_top = right.x_at(y0) - left.x_at(y0);
    let w_bottom = right.x_at(y1) - left.x_at(y1);
    if w_top < 1.0 {
        return Err(PoseError::Degenerate(w_top));
    }
    Ok((w_bottom - w_top) / w_top)
}

pub fn measure_perspective_ratio(image: &Image) -> Result<f64> {
    let (l, r) = detect_side_edges_with(image, &MeasureConfig::default())?;
    ratio_between(&l, &r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseMeasurement {
    pub theta_deg: f64,
    pub ratio: f64,
    pub left: EdgeLine,
    pub right: EdgeLine,
}

pub fn measure(image: &Image, cfg: &MeasureConfig) -> Result<PoseMeasurement> {
    let (left, right) = detect_side_edges_with(image, cfg)?;
    Ok(PoseMeasurement {
        theta_deg: left.angle_deg(),
        ratio: ratio_between(&left, &right)?,
        left,
        right,
    })
}
