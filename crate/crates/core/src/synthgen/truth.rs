use super::render::SceneParams;
use super::{BoardSpec, Result};

/// Pose quantities of a rendered sample, computed from the projected board
/// outline with the same conventions the edge-based measurement uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub theta_deg: f64,
    pub ratio_y: f64,
    pub ratio_x: f64,
}

impl GroundTruth {
    pub fn of(board: &BoardSpec, scene: &SceneParams, out_size: usize) -> Result<Self> {
        let h = scene.board_homography(out_size)?;
        let (bw, bh) = board.board_size;
        let quad = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .map(|(x, y)| h.apply(x * bw / 2.0, y * bh / 2.0));
        let swapped = quad.map(|(x, y)| (y, x));
        Ok(GroundTruth {
            theta_deg: scene.theta_deg,
            ratio_y: quad_ratio(&quad).unwrap_or(f64::NAN),
            ratio_x: quad_ratio(&swapped).unwrap_or(f64::NAN),
        })
    }
}

/// `(w_bottom - w_top) / w_top` for a convex quadrilateral in pixel
/// coordinates, vertices in boundary order.
///
/// The two side silhouettes are the vertex chains from the topmost to the
/// bottommost vertex. Of the two pairs of opposite edges, the one with an
/// edge on each silhouette and the longest shared row span is taken as the
/// left/right board edges; widths are measured between them at the first
/// and last shared row.
pub fn quad_ratio(quad: &[(f64, f64); 4]) -> Option<f64> {
    let top = (0..4).min_by(|&a, &b| quad[a].1.total_cmp(&quad[b].1))?;
    let bottom = (0..4).max_by(|&a, &b| quad[a].1.total_cmp(&quad[b].1))?;
    // Edge `i` joins vertices `i` and `i + 1`; mark those on the chain that
    // leaves `top` forwards.
    let mut forward = [false; 4];
    let mut i = top;
    while i != bottom {
        forward[i] = true;
        i = (i + 1) % 4;
    }
    let edge = |i: usize| (quad[i], quad[(i + 1) % 4]);
    let span = |e: Edge| (e.0 .1.min(e.1 .1), e.0 .1.max(e.1 .1));

    let (mut best, mut best_overlap) = (None, 0.0);
    for i in 0..2 {
        if forward[i] == forward[i + 2] {
            continue;
        }
        let (a, b) = (edge(i), edge(i + 2));
        let (sa, sb) = (span(a), span(b));
        let (y0, y1) = (sa.0.max(sb.0), sa.1.min(sb.1));
        if y1 - y0 > best_overlap {
            best_overlap = y1 - y0;
            best = Some((a, b, y0, y1));
        }
    }
    let (a, b, y0, y1) = best?;
    let x_at = |e: Edge, y: f64| {
        let ((xa, ya), (xb, yb)) = e;
        xa + (xb - xa) * (y - ya) / (yb - ya)
    };
    let (l, r) = if x_at(a, (y0 + y1) / 2.0) <= x_at(b, (y0 + y1) / 2.0) { (a, b) } else { (b, a) };
    let w_top = x_at(r, y0) - x_at(l, y0);
    let w_bottom = x_at(r, y1) - x_at(l, y1);
    (w_top.abs() > 1e-9).then(|| (w_bottom - w_top) / w_top)
}

type Edge = ((f64, f64), (f64, f64));
