use crate::geometry::{GridPosition, Homography};

use super::Result;

/// Camera height above the capture surface, model units.
pub const CAMERA_HEIGHT: f64 = 16.0;
/// Distance between neighbouring grid cells, model units.
pub const GRID_SPACING: f64 = 6.0;
/// Width of the capture surface covered by the frame at the neutral cell.
pub const VIEW_SPAN: f64 = 5.6;

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Pinhole camera fixed above the centre cell and aimed at one grid cell.
///
/// World axes: `x` toward higher columns, `y` toward higher rows, `z` up.
/// The image `x` axis follows world `x` and image rows follow world `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: V3,
    right: V3,
    down: V3,
    forward: V3,
    /// Focal length in pixels.
    pub focal: f64,
    pub center: (f64, f64),
    pub out_size: usize,
}

impl Camera {
    pub fn looking_at(target: (f64, f64), out_size: usize) -> Camera {
        let position = [0.0, 0.0, CAMERA_HEIGHT];
        let forward = normalize([target.0, target.1, -CAMERA_HEIGHT]);
        let right = normalize(cross(forward, [0.0, 1.0, 0.0]));
        let down = cross(right, forward);
        let c = (out_size as f64 - 1.0) / 2.0;
        Camera {
            position,
            right,
            down,
            forward,
            focal: out_size as f64 * CAMERA_HEIGHT / VIEW_SPAN,
            center: (c, c),
            out_size,
        }
    }

    pub fn for_cell(pos: GridPosition, out_size: usize) -> Camera {
        Camera::looking_at(cell_center(pos), out_size)
    }

    pub fn project(&self, p: V3) -> (f64, f64) {
        let q = [
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ];
        let z = dot(q, self.forward);
        (
            self.center.0 + self.focal * dot(q, self.right) / z,
            self.center.1 + self.focal * dot(q, self.down) / z,
        )
    }

    /// Ray through pixel `(u, v)` intersected with the plane `z = 0`.
    pub fn unproject_ground(&self, u: f64, v: f64) -> (f64, f64) {
        let a = (u - self.center.0) / self.focal;
        let b = (v - self.center.1) / self.focal;
        let dir = [
            self.forward[0] + a * self.right[0] + b * self.down[0],
            self.forward[1] + a * self.right[1] + b * self.down[1],
            self.forward[2] + a * self.right[2] + b * self.down[2],
        ];
        let t = -self.position[2] / dir[2];
        (
            self.position[0] + t * dir[0],
            self.position[1] + t * dir[1],
        )
    }

    /// Maps ground-plane points `(x, y)` to pixels.
    pub fn ground_homography(&self) -> Result<Homography> {
        let (s, (cx, cy)) = (self.focal, self.center);
        let row = |a: V3| [a[0], a[1], -dot(a, self.position)];
        let (r, d, f) = (row(self.right), row(self.down), row(self.forward));
        let m = [
            [0, 1, 2].map(|i| s * r[i] + cx * f[i]),
            [0, 1, 2].map(|i| s * d[i] + cy * f[i]),
            f,
        ];
        Ok(Homography::from_matrix(m)?)
    }
}

/// World coordinates of a grid cell's centre.
pub fn cell_center(pos: GridPosition) -> (f64, f64) {
    let (dc, dr) = pos.offset();
    (dc as f64 * GRID_SPACING, dr as f64 * GRID_SPACING)
}
