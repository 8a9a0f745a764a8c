use crate::geometry::{GridPosition, Homography, RotationLabel};
use crate::raster::Image;

use super::board::{mix, BoardSpec, Rgb};
use super::camera::{cell_center, Camera, CAMERA_HEIGHT};
use super::{Result, SynthError};

/// Capture surface colour.
pub const BACKGROUND: Rgb = [0.82, 0.82, 0.8];

/// Width, in board units, of the linear ramp at every painted edge.
const EDGE_SOFTNESS: f64 = 0.12;

const TEXTURE_CELL: f64 = 0.45;
const TEXTURE_AMPLITUDE: f32 = 0.035;

/// Placement of one board for one capture.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    pub grid_position: GridPosition,
    pub rotation_label: RotationLabel,
    /// In-plane rotation on the capture surface, degrees, in the sense of
    /// [`crate::geometry::rotation_homography`].
    pub theta_deg: f64,
    /// Placement error of the board centre relative to the cell centre.
    pub offset: (f64, f64),
    /// Selects the physical copy of the board.
    pub instance_seed: u64,
}

impl SceneParams {
    pub fn neutral(theta_deg: f64) -> Self {
        SceneParams {
            grid_position: GridPosition::CENTER,
            rotation_label: RotationLabel::Neutral,
            theta_deg,
            offset: (0.0, 0.0),
            instance_seed: 0,
        }
    }

    pub fn at(&self, pos: GridPosition) -> Self {
        SceneParams {
            grid_position: pos,
            ..self.clone()
        }
    }

    /// World position of the board centre.
    pub fn board_center(&self) -> (f64, f64) {
        let (cx, cy) = cell_center(self.grid_position);
        (cx + self.offset.0, cy + self.offset.1)
    }

    pub fn camera(&self, out_size: usize) -> Camera {
        Camera::for_cell(self.grid_position, out_size)
    }

    /// Board coordinates to pixels.
    pub fn board_homography(&self, out_size: usize) -> Result<Homography> {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        let (tx, ty) = self.board_center();
        let place = Homography::from_matrix([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]])?;
        Ok(self.camera(out_size).ground_homography()?.after(&place))
    }
}

/// Pixel map taking the board plane as seen in `from` onto the board plane
/// as seen in `to`.
pub fn induced_homography(
    from: &SceneParams,
    to: &SceneParams,
    out_size: usize,
) -> Result<Homography> {
    let a = from.board_homography(out_size)?;
    let b = to.board_homography(out_size)?;
    Ok(b.after(&a.inverse()?))
}

/// Pixel position of the first board corner that falls outside the frame.
pub fn corner_out_of_view(
    board_size: (f64, f64),
    scene: &SceneParams,
    out_size: usize,
) -> Result<Option<(f64, f64)>> {
    let to_px = scene.board_homography(out_size)?;
    let (bw, bh) = board_size;
    let limit = out_size as f64 - 1.0;
    Ok([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .into_iter()
        .map(|(x, y)| to_px.apply(x * bw / 2.0, y * bh / 2.0))
        .find(|&(u, v)| !(0.0..=limit).contains(&u) || !(0.0..=limit).contains(&v)))
}

/// Renders `board` under `scene` at `out_size x out_size`, 3x3 supersampled.
///
/// The board plane goes through the exact pinhole projection. Each raised
/// component is drawn displaced by `board_center * height / CAMERA_HEIGHT`
/// on the plane, which is zero at the centre cell and for flat parts.
pub fn render(board: &BoardSpec, scene: &SceneParams, out_size: usize) -> Result<Image> {
    if out_size < 16 {
        return Err(SynthError::OutputSize(out_size));
    }
    let board = board.instance(scene.instance_seed);
    if let Some((x, y)) = corner_out_of_view(board.board_size, scene, out_size)? {
        return Err(SynthError::OutOfView { x, y });
    }
    let to_px = scene.board_homography(out_size)?;
    let from_px = to_px.inverse()?;

    let (s, c) = scene.theta_deg.to_radians().sin_cos();
    let (tx, ty) = scene.board_center();
    let shifts: Vec<(f64, f64)> = board
        .components
        .iter()
        .map(|comp| {
            let k = comp.height / CAMERA_HEIGHT;
            let (wx, wy) = (tx * k, ty * k);
            (c * wx + s * wy, -s * wx + c * wy)
        })
        .collect();

    const SUB: [f64; 3] = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    let mut img = Image::filled(out_size, out_size, 3, 0.0);
    for py in 0..out_size {
        for px in 0..out_size {
            let mut acc = [0.0f32; 3];
            for dy in SUB {
                for dx in SUB {
                    let (bx, by) = from_px.apply(px as f64 + dx, py as f64 + dy);
                    let col = shade(&board, &shifts, bx, by);
                    for k in 0..3 {
                        acc[k] += col[k];
                    }
                }
            }
            for (k, v) in acc.iter().enumerate() {
                img.set(px, py, k, v / 9.0);
            }
        }
    }
    Ok(img)
}

fn coverage(x0: f64, y0: f64, x1: f64, y1: f64, x: f64, y: f64) -> f32 {
    let d = (x - x0).min(x1 - x).min(y - y0).min(y1 - y);
    (d / EDGE_SOFTNESS + 0.5).clamp(0.0, 1.0) as f32
}

fn lerp(a: Rgb, b: Rgb, t: f32) -> Rgb {
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t)
}

fn shade(board: &BoardSpec, shifts: &[(f64, f64)], x: f64, y: f64) -> Rgb {
    let (bw, bh) = board.board_size;
    let a = coverage(-bw / 2.0, -bh / 2.0, bw / 2.0, bh / 2.0, x, y);
    let mut col = BACKGROUND;
    if a > 0.0 {
        let t = texture(board.texture_seed, x, y);
        let base = board.base_color.map(|v| (v + t).clamp(0.0, 1.0));
        col = lerp(col, base, a);
    }
    for (comp, &(sx, sy)) in board.components.iter().zip(shifts) {
        let (x0, y0, x1, y1) = comp.bounds();
        let a = coverage(x0, y0, x1, y1, x - sx, y - sy);
        if a > 0.0 {
            col = lerp(col, comp.color, a);
        }
    }
    col
}

/// Bilinear value noise in `[-TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE]`.
fn texture(seed: u64, x: f64, y: f64) -> f32 {
    let (gx, gy) = (x / TEXTURE_CELL, y / TEXTURE_CELL);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = ((gx - ix) as f32, (gy - iy) as f32);
    let node = |i: f64, j: f64| {
        let h = mix(mix(seed, i as i64 as u64), j as i64 as u64);
        (h >> 40) as f32 / (1u64 << 24) as f32 * 2.0 - 1.0
    };
    let v = node(ix, iy) * (1.0 - fx) * (1.0 - fy)
        + node(ix + 1.0, iy) * fx * (1.0 - fy)
        + node(ix, iy + 1.0) * (1.0 - fx) * fy
        + node(ix + 1.0, iy + 1.0) * fx * fy;
    v * TEXTURE_AMPLITUDE
}
